#include "vdt/dit.hpp"

#include <cmath>

namespace vdt {

void DenoiserConfig::validate() const {
    if (N < 2 || N % 2 != 0) throw ConfigError("DenoiserConfig: N must be even and >= 2");
    if (d % heads != 0) throw ConfigError("DenoiserConfig: d must be divisible by heads");
    if (p < 1) throw ConfigError("DenoiserConfig: p >= 1 required");
    if (mlp_ratio < 1) throw ConfigError("DenoiserConfig: mlp_ratio >= 1 required");
    if (T < 1) throw ConfigError("DenoiserConfig: T >= 1 required");
}

namespace {

// x[f,s,d] + pos[s,d] broadcast over frames
Var add_pos2d(Tape* t, const Var& x, const Tensor& pos) {
    const int64_t f = x.val().dim(0), s = x.val().dim(1), d = x.val().dim(2);
    if (pos.dim(0) != s || pos.dim(1) != d) throw DimError("add_pos2d: grid mismatch");
    Tensor full({f, s, d});
    for (int64_t fr = 0; fr < f; ++fr)
        std::copy(pos.data(), pos.data() + s * d, full.data() + fr * s * d);
    return ag::add(t, x, ag::constant(std::move(full)));
}

Var mlp_timestep(Tape* t, const nn::Linear& l1, const nn::Linear& l2, int64_t timestep,
                 int64_t d) {
    Var x = ag::constant(nn::sincos_scalar(static_cast<double>(timestep), d));
    return l2.forward(t, ag::gelu(t, l1.forward(t, x)));
}

}  // namespace

Denoiser::Denoiser(nn::ParamStore& ps, const DenoiserConfig& cfg, const std::string& prefix)
    : cfg_(cfg), prefix_(prefix) {
    cfg_.validate();
    patch_embed_ =
        nn::Linear::create(ps, prefix + ".patch_embed", cfg.p * cfg.p * 4, cfg.d, nn::Init::Xavier);
    t_mlp1_ = nn::Linear::create(ps, prefix + ".t_mlp.fc1", cfg.d, cfg.d, nn::Init::Xavier);
    t_mlp2_ = nn::Linear::create(ps, prefix + ".t_mlp.fc2", cfg.d, cfg.d, nn::Init::Xavier);
    pca_proj_ = nn::Linear::create(ps, prefix + ".pca_proj", cfg.d_text, cfg.d, nn::Init::Xavier);
    nn::BlockCfg bc{cfg.d, cfg.heads, cfg.mlp_ratio, /*has_temporal=*/true, /*has_fusion=*/true,
                    /*has_mod=*/true};
    for (int64_t i = 0; i < cfg.N; ++i)
        blocks_.push_back(nn::StDitBlock::create(ps, prefix + ".blocks." + std::to_string(i) + ".",
                                                 bc, cfg.N));
    head_mod_ = nn::Linear::create(ps, prefix + ".head_mod", cfg.d, 2 * cfg.d, nn::Init::Zero);
    head_ = nn::Linear::create(ps, prefix + ".head", cfg.d, cfg.p * cfg.p * 4, nn::Init::Zero);
}

Var Denoiser::timestep_embedding(Tape* t, int64_t timestep) const {
    return mlp_timestep(t, t_mlp1_, t_mlp2_, timestep, cfg_.d);
}

Var Denoiser::project_prompt(Tape* t, const nn::PromptEmbedding& prompt) const {
    if (prompt.tokens.numel() == 0) throw DimError("Denoiser: empty prompt");
    Var p = pca_proj_.forward(t, ag::constant(prompt.tokens));  // [Lp,d]
    return ag::reshape(t, p, {1, prompt.tokens.dim(0), cfg_.d});
}

Var Denoiser::embed_tokens(Tape* t, const Var& z_latent) const {
    const int64_t h = z_latent.val().dim(1), w = z_latent.val().dim(2);
    Var x = patch_embed_.forward(t, ag::patches_from_latent(t, z_latent, cfg_.p));
    return add_pos2d(t, x, nn::sincos_2d(h / cfg_.p, w / cfg_.p, cfg_.d));
}

Var Denoiser::forward(Tape* t, const Var& z_t, int64_t timestep,
                      const std::vector<Var>* garment_feats, const std::vector<Var>* residuals,
                      const nn::PromptEmbedding& prompt) const {
    const auto& zs = z_t.val().shape();
    if (zs.size() != 4 || zs[3] != 4) throw DimError("Denoiser: expect z_t [f,h,w,4]");
    const int64_t f = zs[0], h = zs[1], w = zs[2];
    if (garment_feats && static_cast<int64_t>(garment_feats->size()) != cfg_.N)
        throw DimError("Denoiser: garment feature count must equal N");
    if (!garment_feats) throw DimError("Denoiser: garment features required (fusion enabled)");
    if (residuals && static_cast<int64_t>(residuals->size()) != cfg_.N / 2)
        throw DimError("Denoiser: residual count must equal N/2");

    Var x = embed_tokens(t, z_t);
    Var t_emb = timestep_embedding(t, timestep);
    Var prompt_kv = project_prompt(t, prompt);
    const Tensor tpe = f > 1 ? nn::sincos_1d(f, cfg_.d) : Tensor();

    for (int64_t i = 0; i < cfg_.N; ++i) {
        x = blocks_[i].forward(t, x, t_emb, prompt_kv, (*garment_feats)[i], tpe);
        if (residuals && i < cfg_.N / 2) x = ag::add(t, x, (*residuals)[i]);
    }

    Var xn = ag::layernorm(t, x);
    Var mv = head_mod_.forward(t, t_emb);
    Var sc = ag::slice1d(t, mv, 0, cfg_.d);
    Var sh = ag::slice1d(t, mv, cfg_.d, cfg_.d);
    xn = ag::modulate(t, xn, sc, sh);
    Var out = head_.forward(t, xn);  // [f,s,p*p*4]
    return ag::latent_from_patches(t, out, cfg_.p, h, w, 4);
}

GarmentExtractor::GarmentExtractor(nn::ParamStore& ps, const DenoiserConfig& cfg,
                                   const std::string& prefix)
    : cfg_(cfg), prefix_(prefix) {
    cfg_.validate();
    patch_embed_ =
        nn::Linear::create(ps, prefix + ".patch_embed", cfg.p * cfg.p * 4, cfg.d, nn::Init::Xavier);
    pca_proj_ = nn::Linear::create(ps, prefix + ".pca_proj", cfg.d_text, cfg.d, nn::Init::Xavier);
    nn::BlockCfg bc{cfg.d, cfg.heads, cfg.mlp_ratio, /*has_temporal=*/false, /*has_fusion=*/false,
                    /*has_mod=*/false};
    for (int64_t i = 0; i < cfg.N; ++i)
        blocks_.push_back(nn::StDitBlock::create(ps, prefix + ".blocks." + std::to_string(i) + ".",
                                                 bc, cfg.N));
}

GarmentFeatureSet GarmentExtractor::extract(Tape* t, const VideoLatent& garment_latent,
                                            const nn::PromptEmbedding& prompt) const {
    garment_latent.validate();
    if (garment_latent.frames() != 1)
        throw DimError("GarmentExtractor: garment latent must have f=1");
    if (prompt.tokens.numel() == 0) throw DimError("GarmentExtractor: empty prompt");
    const int64_t h = garment_latent.h(), w = garment_latent.w();

    Var x = patch_embed_.forward(
        t, ag::patches_from_latent(t, ag::constant(garment_latent.data), cfg_.p));
    x = add_pos2d(t, x, nn::sincos_2d(h / cfg_.p, w / cfg_.p, cfg_.d));
    Var prompt_kv = ag::reshape(t, pca_proj_.forward(t, ag::constant(prompt.tokens)),
                                {1, prompt.tokens.dim(0), cfg_.d});

    GarmentFeatureSet out;
    out.source_hash = fnv1a(garment_latent.data.data(),
                            static_cast<size_t>(garment_latent.data.numel()) * sizeof(double));
    out.features.reserve(cfg_.N);
    for (int64_t i = 0; i < cfg_.N; ++i) {
        out.features.push_back(x);  // token stream entering block i, pre-norm
        x = blocks_[i].forward(t, x, Var(), prompt_kv, Var(), Tensor());
    }
    return out;
}

Tensor broadcast_temporal(const Tensor& feature, int64_t f) {
    if (feature.ndim() != 3 || feature.dim(0) != 1)
        throw DimError("broadcast_temporal: expect [1,s,d]");
    if (f < 1) throw DimError("broadcast_temporal: f >= 1 required");
    const int64_t sd = feature.dim(1) * feature.dim(2);
    Tensor out({f, feature.dim(1), feature.dim(2)});
    for (int64_t i = 0; i < f; ++i)
        std::copy(feature.data(), feature.data() + sd, out.data() + i * sd);
    return out;
}

void ControlInput::validate() const {
    if (data.ndim() != 4 || data.dim(3) != 9) throw DimError("ControlInput: expect [f,h,w,9]");
}

ControlNet::ControlNet(nn::ParamStore& ps, const Denoiser& denoiser, bool conditions_only,
                       const std::string& prefix)
    : cfg_(denoiser.config()), prefix_(prefix), conditions_only_(conditions_only) {
    if (cfg_.N % 2 != 0) throw ConfigError("ControlNet: denoiser block count must be even");
    const int64_t half = cfg_.N / 2;
    zero_in_ = nn::Linear::create(ps, prefix + ".zero_in", cfg_.p * cfg_.p * 9, cfg_.d,
                                  nn::Init::Zero);
    patch_embed_ = nn::Linear::create(ps, prefix + ".patch_embed", cfg_.p * cfg_.p * 4, cfg_.d,
                                      nn::Init::Xavier);
    t_mlp1_ = nn::Linear::create(ps, prefix + ".t_mlp.fc1", cfg_.d, cfg_.d, nn::Init::Xavier);
    t_mlp2_ = nn::Linear::create(ps, prefix + ".t_mlp.fc2", cfg_.d, cfg_.d, nn::Init::Xavier);
    pca_proj_ = nn::Linear::create(ps, prefix + ".pca_proj", cfg_.d_text, cfg_.d, nn::Init::Xavier);
    nn::BlockCfg bc{cfg_.d, cfg_.heads, cfg_.mlp_ratio, /*has_temporal=*/true, /*has_fusion=*/true,
                    /*has_mod=*/true};
    for (int64_t i = 0; i < half; ++i) {
        blocks_.push_back(nn::StDitBlock::create(ps, prefix + ".blocks." + std::to_string(i) + ".",
                                                 bc, cfg_.N));
        zero_out_.push_back(nn::Linear::create(
            ps, prefix + ".zero_out." + std::to_string(i), cfg_.d, cfg_.d, nn::Init::Zero));
    }
    // deep-copy the front-half parameter values from the denoiser
    const std::string src = denoiser.prefix();
    for (const auto& [name, p] : ps.all()) {
        if (name.rfind(src + ".", 0) != 0) continue;
        std::string rest = name.substr(src.size() + 1);
        bool copy = rest.rfind("patch_embed", 0) == 0 || rest.rfind("t_mlp", 0) == 0 ||
                    rest.rfind("pca_proj", 0) == 0;
        if (rest.rfind("blocks.", 0) == 0) {
            const int64_t bi = std::stoll(rest.substr(7));
            copy = bi < half;
        }
        if (!copy) continue;
        const std::string dst = prefix + "." + rest;
        if (!ps.has(dst)) continue;
        Var d = ps.get(dst);
        if (!d.val().same_shape(p.val())) throw DimError("ControlNet: copy shape mismatch " + dst);
        d.val() = p.val();
    }
}

ControlResidualSet ControlNet::forward(Tape* t, const ControlInput& control, const Var& z_t,
                                       int64_t timestep, const std::vector<Var>& garment_feats,
                                       const nn::PromptEmbedding& prompt) const {
    control.validate();
    const auto& cs = control.data.shape();
    const int64_t f = cs[0], h = cs[1], w = cs[2];
    const int64_t half = static_cast<int64_t>(blocks_.size());
    if (static_cast<int64_t>(garment_feats.size()) < half)
        throw DimError("ControlNet: garment feature count shortfall");
    if (!conditions_only_) {
        const auto& zs = z_t.val().shape();
        if (zs != std::vector<int64_t>{f, h, w, 4})
            throw DimError("ControlNet: z_t shape mismatch with control input");
    }

    Var ctl = zero_in_.forward(
        t, ag::patches_from_latent(t, ag::constant(control.data), cfg_.p));
    Var x = ctl;
    if (!conditions_only_) {
        Var zt_tok = patch_embed_.forward(t, ag::patches_from_latent(t, z_t, cfg_.p));
        x = ag::add(t, zt_tok, ctl);
    }
    x = add_pos2d(t, x, nn::sincos_2d(h / cfg_.p, w / cfg_.p, cfg_.d));

    Var t_emb = mlp_timestep(t, t_mlp1_, t_mlp2_, timestep, cfg_.d);
    Var prompt_kv = ag::reshape(t, pca_proj_.forward(t, ag::constant(prompt.tokens)),
                                {1, prompt.tokens.dim(0), cfg_.d});
    const Tensor tpe = f > 1 ? nn::sincos_1d(f, cfg_.d) : Tensor();

    ControlResidualSet out;
    out.residuals.reserve(blocks_.size());
    for (size_t i = 0; i < blocks_.size(); ++i) {
        x = blocks_[i].forward(t, x, t_emb, prompt_kv, garment_feats[i], tpe);
        out.residuals.push_back(zero_out_[i].forward(t, x));
    }
    return out;
}

}  // namespace vdt
