#pragma once

#include <memory>
#include <string>

#include "vdt/nn.hpp"
#include "vdt/rng.hpp"
#include "vdt/tensor.hpp"

namespace vdt {

/// Raw frames [f,H,W,3], values in [-1,1]. fps is metadata only.
struct VideoTensor {
    Tensor data;
    double fps = 8.0;

    int64_t frames() const { return data.dim(0); }
    int64_t height() const { return data.dim(1); }
    int64_t width() const { return data.dim(2); }
    void validate() const;
};

/// Encoded latent [f,h,w,4] with h=H/8, w=W/8.
struct VideoLatent {
    Tensor data;

    int64_t frames() const { return data.dim(0); }
    int64_t h() const { return data.dim(1); }
    int64_t w() const { return data.dim(2); }
    void validate() const;
};

/// Patchified latent [f,s,d] with grid metadata for exact inversion.
struct TokenSequence {
    Tensor data;
    int64_t p = 0;
    int64_t gh = 0, gw = 0;

    int64_t tokens() const { return data.dim(1); }
};

struct CodecSpec {
    std::string kind = "linear";  // "linear" | "conv"
    uint64_t seed = 0;
    double latent_scale = 1.0;
    std::string weights_path;  // conv codec parameter directory

    bool operator==(const CodecSpec&) const = default;
};

/// Pixel <-> latent transform. Deterministic given the spec; per-frame
/// independent; spatial factor exactly 8, latent channels exactly 4.
class Codec {
public:
    virtual ~Codec() = default;
    virtual VideoLatent encode(const VideoTensor& v) const = 0;
    virtual VideoTensor decode(const VideoLatent& z) const = 0;
    const CodecSpec& spec() const { return spec_; }

protected:
    explicit Codec(CodecSpec spec) : spec_(std::move(spec)) {}
    CodecSpec spec_;
};

std::unique_ptr<Codec> make_codec(const CodecSpec& spec);

/// space-to-depth(8) followed by a fixed seeded orthonormal projection
/// 192 -> 4; decode via the transpose. Used by all architecture tests.
class LinearCodec : public Codec {
public:
    explicit LinearCodec(CodecSpec spec);
    VideoLatent encode(const VideoTensor& v) const override;
    VideoTensor decode(const VideoLatent& z) const override;

private:
    Tensor basis_;  // [4,192], orthonormal rows
};

/// Small convolutional autoencoder (3 stride-2 stages each way), fitted once
/// on the synthetic corpus; weights live in spec.weights_path.
class ConvCodec : public Codec {
public:
    explicit ConvCodec(CodecSpec spec);  // loads weights if path exists
    VideoLatent encode(const VideoTensor& v) const override;
    VideoTensor decode(const VideoLatent& z) const override;

    nn::ParamStore& params() { return *ps_; }
    const nn::ParamStore& params() const { return *ps_; }
    void save_weights(const std::string& dir) const;
    void load_weights(const std::string& dir);
    /// Raw (unscaled) encode used during fitting.
    ag::Var encode_var(ag::Tape* t, const ag::Var& frames) const;
    ag::Var decode_var(ag::Tape* t, const ag::Var& latent) const;
    void set_latent_scale(double s) { spec_.latent_scale = s; }

private:
    struct ConvLayer {
        ag::Var W, b;  // W[kh,kw,Cin,Cout]
        int64_t stride = 1, pad = 1;
        int act = 0;  // 0 none, 1 gelu, 2 tanh
        bool upsample_before = false;
    };
    ag::Var run_stack(ag::Tape* t, ag::Var x, const std::vector<ConvLayer>& stack) const;

    std::shared_ptr<nn::ParamStore> ps_;
    std::vector<ConvLayer> enc_, dec_;
};

struct CodecFitOptions {
    int64_t steps = 600;
    int64_t batch = 8;
    double lr = 2e-3;
    uint64_t seed = 7;
    double target_latent_std = 0.5;
};
struct CodecFitResult {
    double final_loss = 0.0;
    double latent_std_raw = 0.0;
};
/// Fits the conv codec on a stack of frames [n,H,W,3]; sets latent_scale so
/// the corpus latent std is about target_latent_std.
CodecFitResult fit_conv_codec(ConvCodec& codec, const Tensor& frames, const CodecFitOptions& opt);

/// Invertible patch embedding: seeded injective linear map p^2*C -> d with a
/// stored pseudo-inverse, so unpatchify is exact on patchify's image.
class PatchProjector {
public:
    PatchProjector(int64_t p, int64_t channels, int64_t d, uint64_t seed);
    TokenSequence patchify(const VideoLatent& z) const;
    VideoLatent unpatchify(const TokenSequence& tok) const;
    int64_t hidden_dim() const { return W_.dim(1); }

private:
    int64_t p_, channels_;
    Tensor W_;     // [p^2*C, d]
    Tensor pinv_;  // [d, p^2*C]
};

/// [f,H,W,C] -> [f,H/b,W/b,C*b*b], cell order (py,px,c); and its inverse.
Tensor space_to_depth(const Tensor& x, int64_t block);
Tensor depth_to_space(const Tensor& x, int64_t block, int64_t channels);

}  // namespace vdt
