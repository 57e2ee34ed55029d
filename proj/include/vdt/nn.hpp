#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "vdt/autograd.hpp"
#include "vdt/rng.hpp"

namespace vdt::nn {

using ag::Tape;
using ag::Var;

enum class Init { Zero, Xavier, ResidualScaled };

/// Owns every named parameter of a model stack. Initialization is seeded per
/// parameter name, so creation order never affects values.
class ParamStore {
public:
    explicit ParamStore(uint64_t seed = 0) : seed_(seed) {}

    /// Creates (or returns the existing) parameter. residual_blocks scales
    /// ResidualScaled init by 1/sqrt(2*residual_blocks).
    Var create(const std::string& name, std::vector<int64_t> shape, Init init,
               int64_t residual_blocks = 1);
    Var get(const std::string& name) const;
    bool has(const std::string& name) const { return params_.count(name) > 0; }
    const std::map<std::string, Var>& all() const { return params_; }
    void zero_grads();
    int64_t total_params() const;
    uint64_t seed() const { return seed_; }

private:
    uint64_t seed_;
    std::map<std::string, Var> params_;
};

/// '*' matches any (possibly empty) substring; all other characters literal.
bool glob_match(const std::string& pattern, const std::string& name);

struct Linear {
    Var W, b;  // W[in,out]; b may be undefined (no bias)
    static Linear create(ParamStore& ps, const std::string& name, int64_t in, int64_t out,
                         Init init, bool bias = true, int64_t residual_blocks = 1);
    Var forward(Tape* t, const Var& x) const { return ag::linear(t, x, W, b); }
};

/// Multi-head attention; no biases on the projections. kv_dim may differ
/// from the query dim (prompt cross-attention).
struct Attention {
    Var wq, wk, wv, wo;
    int64_t heads = 1;
    static Attention create(ParamStore& ps, const std::string& name, int64_t d, int64_t heads,
                            int64_t kv_dim, int64_t residual_blocks);
    /// q_src[B,Lq,d], kv_src[B,Lk,kv_dim] -> [B,Lq,d]
    Var forward(Tape* t, const Var& q_src, const Var& kv_src) const;
};

struct BlockCfg {
    int64_t d = 128;
    int64_t heads = 4;
    int64_t mlp_ratio = 4;
    bool has_temporal = true;
    bool has_fusion = false;
    bool has_mod = true;  // timestep scale/shift modulation
};

/// One ST-DiT block: [SSA or attention-fusion] -> [TSA] -> [PCA] -> [FF],
/// each as a pre-norm residual sublayer. The TSA sublayer is skipped when the
/// input has a single frame. Timestep conditioning (when has_mod) applies a
/// per-sublayer scale/shift to the normalized activations.
struct StDitBlock {
    BlockCfg cfg;
    Attention ssa, sca, tsa, pca;
    Linear ff1, ff2;
    Linear mod;  // d -> 4*2*d (scale,shift per sublayer), zero-init

    static StDitBlock create(ParamStore& ps, const std::string& prefix, const BlockCfg& cfg,
                             int64_t residual_blocks);

    /// x[f,s,d]; t_emb[d] required iff cfg.has_mod; prompt_kv[1,Lp,d];
    /// garment[1,s,d] required iff cfg.has_fusion; tpe: temporal positional
    /// encoding [f,d] (may be empty to disable).
    Var forward(Tape* t, Var x, const Var& t_emb, const Var& prompt_kv, const Var& garment,
                const Tensor& tpe) const;
};

/// Decoupled-weight-decay Adam. Moments are keyed by parameter name so
/// optimizer state can be checkpointed and restored exactly.
class AdamW {
public:
    struct Hyper {
        double lr = 1e-3;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
        double weight_decay = 0.0;
    };
    explicit AdamW(Hyper h) : h_(h) {}

    /// Applies one update to every named parameter whose gradient is ready.
    void step(const std::vector<std::pair<std::string, Var>>& trainable);

    const Hyper& hyper() const { return h_; }
    void set_lr(double lr) { h_.lr = lr; }
    int64_t steps_taken() const { return t_; }
    std::map<std::string, Tensor>& moment1() { return m_; }
    std::map<std::string, Tensor>& moment2() { return v_; }
    void set_steps_taken(int64_t t) { t_ = t; }

private:
    Hyper h_;
    int64_t t_ = 0;
    std::map<std::string, Tensor> m_, v_;
};

/// Global-norm gradient clipping over the given parameters; returns the
/// pre-clip norm.
double clip_grad_norm(const std::vector<std::pair<std::string, Var>>& params, double max_norm);

// ---- fixed sinusoidal encodings ----

/// [len, d] standard 1-D sin/cos table (pairs per frequency).
Tensor sincos_1d(int64_t len, int64_t d);
/// [gh*gw, d]: first half encodes row index, second half column index.
Tensor sincos_2d(int64_t gh, int64_t gw, int64_t d);
/// [d] timestep embedding for integer t.
Tensor sincos_scalar(double t, int64_t d);

/// Fixed seeded prompt-embedding table (replaces the text encoder).
struct PromptEmbedding {
    Tensor tokens;  // [Lp, d_text]
    std::string source;
};
PromptEmbedding make_prompt_stub(const std::string& text = "a dancing person", int64_t Lp = 8,
                                 int64_t d_text = 64);

}  // namespace vdt::nn
