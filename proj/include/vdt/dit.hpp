#pragma once

#include <optional>
#include <vector>

#include "vdt/codec.hpp"
#include "vdt/nn.hpp"

namespace vdt {

using ag::Tape;
using ag::Var;

struct DenoiserConfig {
    int64_t N = 28;       // ST-DiT block count (must be even)
    int64_t p = 2;        // patch size
    int64_t d = 1152;     // hidden dim
    int64_t heads = 16;
    int64_t mlp_ratio = 4;
    int64_t f_max = 36;   // max frames per clip
    int64_t T = 1000;     // diffusion steps
    int64_t d_text = 64;  // prompt stub embedding width
    int64_t prompt_len = 8;

    /// Tiny configuration used by desk-scale tests and training.
    static DenoiserConfig desk() {
        DenoiserConfig c;
        c.N = 8;
        c.p = 2;
        c.d = 128;
        c.heads = 4;
        c.mlp_ratio = 4;
        c.f_max = 8;
        c.T = 50;
        return c;
    }

    void validate() const;
};

/// The denoising ST-DiT stack: patch embedding, N blocks with attention
/// fusion, timestep/prompt conditioning and the output head. Every block
/// consumes garment feature i; blocks 0..N/2-1 accept an additive control
/// residual on their output.
class Denoiser {
public:
    Denoiser(nn::ParamStore& ps, const DenoiserConfig& cfg, const std::string& prefix = "denoiser");

    /// z_t[f,h,w,4] -> eps prediction [f,h,w,4].
    /// garment_feats: nullptr or exactly N features [1,s,d].
    /// residuals: nullptr or exactly N/2 tensors [f,s,d].
    Var forward(Tape* t, const Var& z_t, int64_t timestep,
                const std::vector<Var>* garment_feats, const std::vector<Var>* residuals,
                const nn::PromptEmbedding& prompt) const;

    Var timestep_embedding(Tape* t, int64_t timestep) const;
    Var project_prompt(Tape* t, const nn::PromptEmbedding& prompt) const;
    /// Token stream entering block 0 (patch embed + 2-D positional encoding).
    Var embed_tokens(Tape* t, const Var& z_latent) const;

    const DenoiserConfig& config() const { return cfg_; }
    const std::vector<nn::StDitBlock>& blocks() const { return blocks_; }
    const std::string& prefix() const { return prefix_; }

private:
    friend class ControlNet;
    DenoiserConfig cfg_;
    std::string prefix_;
    nn::Linear patch_embed_;
    nn::Linear t_mlp1_, t_mlp2_;
    nn::Linear pca_proj_;
    std::vector<nn::StDitBlock> blocks_;
    nn::Linear head_mod_;  // d -> 2d (scale, shift) for the final norm
    nn::Linear head_;      // d -> p*p*4, zero-init
};

/// Per-block garment features: the raw token stream entering each extractor
/// block, before normalization. features.size() == N.
struct GarmentFeatureSet {
    std::vector<Var> features;  // each [1,s,d]
    uint64_t source_hash = 0;
};

/// Garment DiT: N blocks of SSA+PCA+FF (no TSA, no fusion, no timestep
/// modulation). Input is a single-frame garment latent.
class GarmentExtractor {
public:
    GarmentExtractor(nn::ParamStore& ps, const DenoiserConfig& cfg,
                     const std::string& prefix = "garment_extractor");

    /// garment_latent must have f == 1.
    GarmentFeatureSet extract(Tape* t, const VideoLatent& garment_latent,
                              const nn::PromptEmbedding& prompt) const;

    const DenoiserConfig& config() const { return cfg_; }

private:
    DenoiserConfig cfg_;
    std::string prefix_;
    nn::Linear patch_embed_;
    nn::Linear pca_proj_;
    std::vector<nn::StDitBlock> blocks_;
};

/// [1,s,d] -> [f,s,d], all frame slices identical.
Tensor broadcast_temporal(const Tensor& feature, int64_t f);

/// 9-channel control latent [f,h,w,9] = concat(z_agnostic, z_pose, mask).
struct ControlInput {
    Tensor data;
    void validate() const;
};

/// Per-block additive residuals for the denoiser's front half.
struct ControlResidualSet {
    std::vector<Var> residuals;  // N/2 tensors [f,s,d]
};

/// Trainable replica of the denoiser front half with zero-initialized
/// boundary linears. Residual i is meant for denoiser block i.
class ControlNet {
public:
    /// Copies the denoiser's front-half parameters by value (deep copy).
    ControlNet(nn::ParamStore& ps, const Denoiser& denoiser, bool conditions_only = false,
               const std::string& prefix = "controlnet");

    ControlResidualSet forward(Tape* t, const ControlInput& control, const Var& z_t,
                               int64_t timestep, const std::vector<Var>& garment_feats,
                               const nn::PromptEmbedding& prompt) const;

    int64_t half_blocks() const { return static_cast<int64_t>(blocks_.size()); }
    bool conditions_only() const { return conditions_only_; }

private:
    DenoiserConfig cfg_;
    std::string prefix_;
    bool conditions_only_;
    nn::Linear zero_in_;  // p*p*9 -> d, zero-init
    nn::Linear patch_embed_;
    nn::Linear t_mlp1_, t_mlp2_;
    nn::Linear pca_proj_;
    std::vector<nn::StDitBlock> blocks_;
    std::vector<nn::Linear> zero_out_;  // one per residual tap, zero-init
};

}  // namespace vdt
