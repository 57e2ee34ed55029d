#include "vdt/codec.hpp"

#include <algorithm>
#include <cmath>

#include "vdt/io.hpp"
#include "vdt/kernels.hpp"
#include "vdt/linalg.hpp"

namespace vdt {

namespace k = vdt::kernels;
using ag::Tape;
using ag::Var;

void VideoTensor::validate() const {
    if (data.ndim() != 4 || data.dim(3) != 3) throw DimError("VideoTensor: expect [f,H,W,3]");
    if (data.dim(0) < 1) throw DimError("VideoTensor: f >= 1 required");
    if (data.dim(1) % 8 != 0 || data.dim(2) % 8 != 0)
        throw DimError("VideoTensor: H and W must be divisible by 8");
    for (int64_t i = 0; i < data.numel(); ++i)
        if (data[i] < -1.0 - 1e-9 || data[i] > 1.0 + 1e-9)
            throw DataError("VideoTensor: values outside [-1,1]");
}

void VideoLatent::validate() const {
    if (data.ndim() != 4 || data.dim(3) != 4) throw DimError("VideoLatent: expect [f,h,w,4]");
    if (data.dim(0) < 1) throw DimError("VideoLatent: f >= 1 required");
}

Tensor space_to_depth(const Tensor& x, int64_t block) {
    if (x.ndim() != 4) throw DimError("space_to_depth: expect [f,H,W,C]");
    const int64_t f = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
    if (H % block != 0 || W % block != 0)
        throw DimError("space_to_depth: dims not divisible by block");
    const int64_t h = H / block, w = W / block;
    Tensor out({f, h, w, C * block * block});
    for (int64_t fr = 0; fr < f; ++fr)
        for (int64_t y = 0; y < h; ++y)
            for (int64_t xq = 0; xq < w; ++xq)
                for (int64_t py = 0; py < block; ++py)
                    for (int64_t px = 0; px < block; ++px)
                        for (int64_t c = 0; c < C; ++c)
                            out.at(fr, y, xq, (py * block + px) * C + c) =
                                x.at(fr, y * block + py, xq * block + px, c);
    return out;
}

Tensor depth_to_space(const Tensor& x, int64_t block, int64_t channels) {
    if (x.ndim() != 4) throw DimError("depth_to_space: expect [f,h,w,C*b*b]");
    const int64_t f = x.dim(0), h = x.dim(1), w = x.dim(2);
    if (x.dim(3) != channels * block * block) throw DimError("depth_to_space: channel mismatch");
    Tensor out({f, h * block, w * block, channels});
    for (int64_t fr = 0; fr < f; ++fr)
        for (int64_t y = 0; y < h; ++y)
            for (int64_t xq = 0; xq < w; ++xq)
                for (int64_t py = 0; py < block; ++py)
                    for (int64_t px = 0; px < block; ++px)
                        for (int64_t c = 0; c < channels; ++c)
                            out.at(fr, y * block + py, xq * block + px, c) =
                                x.at(fr, y, xq, (py * block + px) * channels + c);
    return out;
}

// ---- linear codec ----

LinearCodec::LinearCodec(CodecSpec spec) : Codec(std::move(spec)) {
    const int64_t kIn = 192, kOut = 4;
    Tensor rows({kOut, kIn});
    Rng rng = Rng::stream(spec_.seed, "linear_codec_basis");
    rng.fill_normal(rows.data(), rows.numel());
    // Gram-Schmidt: orthonormal rows
    for (int64_t i = 0; i < kOut; ++i) {
        double* ri = rows.data() + i * kIn;
        for (int64_t j = 0; j < i; ++j) {
            const double* rj = rows.data() + j * kIn;
            double dot = 0.0;
            for (int64_t c = 0; c < kIn; ++c) dot += ri[c] * rj[c];
            for (int64_t c = 0; c < kIn; ++c) ri[c] -= dot * rj[c];
        }
        double nrm = 0.0;
        for (int64_t c = 0; c < kIn; ++c) nrm += ri[c] * ri[c];
        nrm = std::sqrt(nrm);
        for (int64_t c = 0; c < kIn; ++c) ri[c] /= nrm;
    }
    basis_ = std::move(rows);
}

VideoLatent LinearCodec::encode(const VideoTensor& v) const {
    if (v.data.ndim() != 4 || v.data.dim(3) != 3) throw DimError("encode: expect [f,H,W,3]");
    if (v.height() % 8 != 0 || v.width() % 8 != 0)
        throw DimError("encode: H and W must be divisible by 8");
    Tensor blocks = space_to_depth(v.data, 8);  // [f,h,w,192]
    const int64_t rows = blocks.numel() / 192;
    Tensor lat({v.frames(), v.height() / 8, v.width() / 8, 4});
    k::matmul_nt(blocks.data(), basis_.data(), lat.data(), rows, 192, 4);
    if (spec_.latent_scale != 1.0)
        k::ew_scale(lat.data(), spec_.latent_scale, lat.data(), lat.numel());
    return VideoLatent{std::move(lat)};
}

VideoTensor LinearCodec::decode(const VideoLatent& z) const {
    z.validate();
    Tensor lat = z.data;
    if (spec_.latent_scale != 1.0)
        k::ew_scale(lat.data(), 1.0 / spec_.latent_scale, lat.data(), lat.numel());
    const int64_t rows = lat.numel() / 4;
    Tensor blocks({z.frames(), z.h(), z.w(), 192});
    k::matmul_nn(lat.data(), basis_.data(), blocks.data(), rows, 4, 192);
    Tensor px = depth_to_space(blocks, 8, 3);
    for (int64_t i = 0; i < px.numel(); ++i) px[i] = std::clamp(px[i], -1.0, 1.0);
    return VideoTensor{std::move(px)};
}

// ---- conv codec ----

namespace {
struct ConvDef {
    const char* name;
    int64_t kh, cin, cout, stride;
    int act;  // 0 none, 1 gelu, 2 tanh
    bool up;
};
constexpr ConvDef kEnc[] = {
    {"codec.enc.c1", 3, 3, 16, 2, 1, false}, {"codec.enc.c2", 3, 16, 32, 2, 1, false},
    {"codec.enc.c3", 3, 32, 64, 2, 1, false}, {"codec.enc.c4", 3, 64, 64, 1, 1, false},
    {"codec.enc.c5", 1, 64, 4, 1, 0, false},
};
constexpr ConvDef kDec[] = {
    {"codec.dec.c1", 3, 4, 64, 1, 1, false},  {"codec.dec.c2", 3, 64, 64, 1, 1, false},
    {"codec.dec.c3", 3, 64, 32, 1, 1, true},  {"codec.dec.c4", 3, 32, 16, 1, 1, true},
    {"codec.dec.c5", 3, 16, 16, 1, 1, true},  {"codec.dec.c6", 3, 16, 3, 2, 0, false},
};
}  // namespace

ConvCodec::ConvCodec(CodecSpec spec) : Codec(std::move(spec)) {
    ps_ = std::make_shared<nn::ParamStore>(spec_.seed ^ 0xc0dec);
    auto build = [&](const ConvDef* defs, size_t n, std::vector<ConvLayer>& out) {
        for (size_t i = 0; i < n; ++i) {
            const ConvDef& d = defs[i];
            ConvLayer l;
            l.W = ps_->create(std::string(d.name) + ".w", {d.kh, d.kh, d.cin, d.cout},
                              nn::Init::Xavier);
            l.b = ps_->create(std::string(d.name) + ".b", {d.cout}, nn::Init::Zero);
            l.stride = d.stride;
            l.pad = d.kh / 2;
            l.act = d.act;
            l.upsample_before = d.up;
            out.push_back(l);
        }
    };
    build(kEnc, std::size(kEnc), enc_);
    build(kDec, std::size(kDec), dec_);
    if (!spec_.weights_path.empty() && io::file_exists(spec_.weights_path + "/manifest.json"))
        load_weights(spec_.weights_path);
}

Var ConvCodec::run_stack(Tape* t, Var x, const std::vector<ConvLayer>& stack) const {
    for (const ConvLayer& l : stack) {
        if (l.upsample_before) x = ag::upsample2x(t, x);
        x = ag::conv2d(t, x, l.W, l.b, l.stride, l.pad);
        if (l.act == 1) x = ag::gelu(t, x);
        if (l.act == 2) x = ag::tanh_op(t, x);
    }
    return x;
}

Var ConvCodec::encode_var(Tape* t, const Var& frames) const { return run_stack(t, frames, enc_); }
Var ConvCodec::decode_var(Tape* t, const Var& latent) const { return run_stack(t, latent, dec_); }

VideoLatent ConvCodec::encode(const VideoTensor& v) const {
    if (v.data.ndim() != 4 || v.data.dim(3) != 3) throw DimError("encode: expect [f,H,W,3]");
    if (v.height() % 8 != 0 || v.width() % 8 != 0)
        throw DimError("encode: H and W must be divisible by 8");
    Var z = encode_var(nullptr, ag::constant(v.data));
    Tensor out = z.val();
    if (spec_.latent_scale != 1.0)
        k::ew_scale(out.data(), spec_.latent_scale, out.data(), out.numel());
    return VideoLatent{std::move(out)};
}

VideoTensor ConvCodec::decode(const VideoLatent& z) const {
    z.validate();
    Tensor lat = z.data;
    if (spec_.latent_scale != 1.0)
        k::ew_scale(lat.data(), 1.0 / spec_.latent_scale, lat.data(), lat.numel());
    Var px = decode_var(nullptr, ag::constant(std::move(lat)));
    Tensor out = px.val();
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::clamp(out[i], -1.0, 1.0);
    return VideoTensor{std::move(out)};
}

void ConvCodec::save_weights(const std::string& dir) const {
    io::ensure_dir(dir);
    io::json m;
    m["kind"] = "conv";
    m["latent_scale"] = spec_.latent_scale;
    std::vector<std::string> names;
    for (const auto& [name, p] : ps_->all()) {
        std::string fname = name;
        std::replace(fname.begin(), fname.end(), '.', '_');
        io::save_npy(dir + "/" + fname + ".npy", p.val());
        names.push_back(name);
    }
    m["params"] = names;
    io::write_json_atomic(dir + "/manifest.json", m);
}

void ConvCodec::load_weights(const std::string& dir) {
    io::json m = io::read_json(dir + "/manifest.json");
    spec_.latent_scale = m.at("latent_scale").get<double>();
    for (const auto& name : m.at("params").get<std::vector<std::string>>()) {
        std::string fname = name;
        std::replace(fname.begin(), fname.end(), '.', '_');
        Tensor v = io::load_npy(dir + "/" + fname + ".npy");
        Var p = ps_->get(name);
        if (!p.val().same_shape(v)) throw DataError("codec weights: shape mismatch for " + name);
        p.val() = std::move(v);
    }
}

CodecFitResult fit_conv_codec(ConvCodec& codec, const Tensor& frames, const CodecFitOptions& opt) {
    if (frames.ndim() != 4 || frames.dim(3) != 3) throw DimError("fit_conv_codec: expect [n,H,W,3]");
    const int64_t n = frames.dim(0), H = frames.dim(1), W = frames.dim(2);
    Rng rng = Rng::stream(opt.seed, "codec_fit");
    std::vector<std::pair<std::string, ag::Var>> trainable;
    for (const auto& [name, p] : codec.params().all()) trainable.emplace_back(name, p);
    nn::AdamW adam({opt.lr, 0.9, 0.999, 1e-8, 0.0});
    CodecFitResult res;
    for (int64_t step = 0; step < opt.steps; ++step) {
        Tensor batch({opt.batch, H, W, 3});
        for (int64_t b = 0; b < opt.batch; ++b) {
            const int64_t i = rng.uniform_int(0, n - 1);
            std::copy(frames.data() + i * H * W * 3, frames.data() + (i + 1) * H * W * 3,
                      batch.data() + b * H * W * 3);
        }
        Tape tape;
        codec.params().zero_grads();
        Var x = ag::constant(batch);
        Var rec = codec.decode_var(&tape, codec.encode_var(&tape, x));
        Var loss = ag::mse(&tape, rec, x);
        tape.backward(loss);
        adam.step(trainable);
        res.final_loss = loss.val()[0];
    }
    // latent_scale so that corpus latents have roughly the target std
    Var z = codec.encode_var(nullptr, ag::constant(frames));
    double mean = 0.0;
    for (int64_t i = 0; i < z.val().numel(); ++i) mean += z.val()[i];
    mean /= static_cast<double>(z.val().numel());
    double var = 0.0;
    for (int64_t i = 0; i < z.val().numel(); ++i) {
        const double d = z.val()[i] - mean;
        var += d * d;
    }
    res.latent_std_raw = std::sqrt(var / static_cast<double>(z.val().numel()));
    codec.set_latent_scale(opt.target_latent_std / std::max(res.latent_std_raw, 1e-9));
    return res;
}

std::unique_ptr<Codec> make_codec(const CodecSpec& spec) {
    if (spec.kind == "linear") return std::make_unique<LinearCodec>(spec);
    if (spec.kind == "conv") return std::make_unique<ConvCodec>(spec);
    throw ConfigError("make_codec: unknown codec kind '" + spec.kind + "'");
}

// ---- invertible patch embedding ----

PatchProjector::PatchProjector(int64_t p, int64_t channels, int64_t d, uint64_t seed)
    : p_(p), channels_(channels) {
    const int64_t kIn = p * p * channels;
    if (d < kIn) throw DimError("PatchProjector: d must be >= p*p*C for injectivity");
    W_ = Tensor({kIn, d});
    Rng rng = Rng::stream(seed, "patch_projector");
    rng.fill_normal(W_.data(), W_.numel(), 0.0, 1.0 / std::sqrt(static_cast<double>(kIn)));
    // pinv = W^T (W W^T)^{-1}  -> [d,kIn]
    Tensor G({kIn, kIn});
    k::matmul_nt(W_.data(), W_.data(), G.data(), kIn, d, kIn);
    Tensor Ginv = linalg::inverse(G);
    pinv_ = Tensor({d, kIn});
    k::matmul_tn(W_.data(), Ginv.data(), pinv_.data(), d, kIn, kIn);
}

TokenSequence PatchProjector::patchify(const VideoLatent& z) const {
    const int64_t h = z.h(), w = z.w();
    if (h % p_ != 0 || w % p_ != 0) throw DimError("patchify: h,w must be divisible by p");
    Var patches = ag::patches_from_latent(nullptr, ag::constant(z.data), p_);
    const int64_t f = z.frames(), s = patches.val().dim(1), kIn = patches.val().dim(2);
    Tensor tok({f, s, W_.dim(1)});
    k::matmul_nn(patches.val().data(), W_.data(), tok.data(), f * s, kIn, W_.dim(1));
    return TokenSequence{std::move(tok), p_, h / p_, w / p_};
}

VideoLatent PatchProjector::unpatchify(const TokenSequence& tok) const {
    if (tok.p == 0 || tok.gh == 0 || tok.gw == 0)
        throw DimError("unpatchify: missing grid metadata");
    const int64_t f = tok.data.dim(0), s = tok.data.dim(1), d = tok.data.dim(2);
    if (s != tok.gh * tok.gw) throw DimError("unpatchify: token count does not match grid");
    const int64_t kIn = tok.p * tok.p * channels_;
    Tensor patches({f, s, kIn});
    k::matmul_nn(tok.data.data(), pinv_.data(), patches.data(), f * s, d, kIn);
    Var z = ag::latent_from_patches(nullptr, ag::constant(std::move(patches)), tok.p,
                                    tok.gh * tok.p, tok.gw * tok.p, channels_);
    return VideoLatent{z.val()};
}

}  // namespace vdt
