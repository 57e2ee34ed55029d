#include "vdt/nn.hpp"

#include <cmath>

namespace vdt::nn {

Var ParamStore::create(const std::string& name, std::vector<int64_t> shape, Init init,
                       int64_t residual_blocks) {
    auto it = params_.find(name);
    if (it != params_.end()) return it->second;
    Tensor v(shape);
    if (init != Init::Zero) {
        double fan_in = static_cast<double>(shape.size() >= 2 ? shape[0] : shape.back());
        double fan_out = static_cast<double>(shape.back());
        double std = std::sqrt(2.0 / (fan_in + fan_out));
        if (init == Init::ResidualScaled)
            std /= std::sqrt(2.0 * static_cast<double>(residual_blocks));
        Rng rng = Rng::stream(seed_, name);
        rng.fill_normal(v.data(), v.numel(), 0.0, std);
    }
    Var p(std::move(v), true);
    params_.emplace(name, p);
    return p;
}

Var ParamStore::get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw Error("ParamStore: unknown parameter " + name);
    return it->second;
}

void ParamStore::zero_grads() {
    for (auto& [name, p] : params_) p.reset_grad();
}

int64_t ParamStore::total_params() const {
    int64_t n = 0;
    for (const auto& [name, p] : params_) n += p.val().numel();
    return n;
}

void AdamW::step(const std::vector<std::pair<std::string, Var>>& trainable) {
    ++t_;
    const double bc1 = 1.0 - std::pow(h_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(h_.beta2, static_cast<double>(t_));
    for (const auto& [name, p] : trainable) {
        if (!p.grad_ready()) continue;
        Var pv = p;
        const Tensor& g = pv.grad_view();
        auto mi = m_.find(name);
        if (mi == m_.end()) {
            m_.emplace(name, Tensor(pv.val().shape()));
            v_.emplace(name, Tensor(pv.val().shape()));
            mi = m_.find(name);
        }
        Tensor& m = mi->second;
        Tensor& v = v_.at(name);
        double* mp = m.data();
        double* vp = v.data();
        double* w = pv.val().data();
        const double* gp = g.data();
        const int64_t n = pv.val().numel();
        for (int64_t i = 0; i < n; ++i) {
            mp[i] = h_.beta1 * mp[i] + (1.0 - h_.beta1) * gp[i];
            vp[i] = h_.beta2 * vp[i] + (1.0 - h_.beta2) * gp[i] * gp[i];
            const double mhat = mp[i] / bc1;
            const double vhat = vp[i] / bc2;
            w[i] -= h_.lr * (mhat / (std::sqrt(vhat) + h_.eps) + h_.weight_decay * w[i]);
        }
    }
}

double clip_grad_norm(const std::vector<std::pair<std::string, Var>>& params, double max_norm) {
    double sq = 0.0;
    for (const auto& [name, p] : params) {
        if (!p.grad_ready()) continue;
        const Tensor& g = p.grad_view();
        for (int64_t i = 0; i < g.numel(); ++i) sq += g[i] * g[i];
    }
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const double sc = max_norm / norm;
        for (const auto& [name, p] : params) {
            if (!p.grad_ready()) continue;
            Var pv = p;
            Tensor& g = pv.grad();
            for (int64_t i = 0; i < g.numel(); ++i) g[i] *= sc;
        }
    }
    return norm;
}

bool glob_match(const std::string& pattern, const std::string& name) {
    // iterative wildcard match, '*' only
    size_t p = 0, n = 0, star = std::string::npos, mark = 0;
    while (n < name.size()) {
        if (p < pattern.size() && (pattern[p] == name[n])) {
            ++p;
            ++n;
        } else if (p < pattern.size() && pattern[p] == '*') {
            star = p++;
            mark = n;
        } else if (star != std::string::npos) {
            p = star + 1;
            n = ++mark;
        } else {
            return false;
        }
    }
    while (p < pattern.size() && pattern[p] == '*') ++p;
    return p == pattern.size();
}

Linear Linear::create(ParamStore& ps, const std::string& name, int64_t in, int64_t out, Init init,
                      bool bias, int64_t residual_blocks) {
    Linear l;
    l.W = ps.create(name + ".w", {in, out}, init, residual_blocks);
    if (bias) l.b = ps.create(name + ".b", {out}, Init::Zero);
    return l;
}

Attention Attention::create(ParamStore& ps, const std::string& name, int64_t d, int64_t heads,
                            int64_t kv_dim, int64_t residual_blocks) {
    if (d % heads != 0) throw DimError("Attention: d not divisible by heads");
    Attention a;
    a.heads = heads;
    a.wq = ps.create(name + ".wq", {d, d}, Init::Xavier);
    a.wk = ps.create(name + ".wk", {kv_dim, d}, Init::Xavier);
    a.wv = ps.create(name + ".wv", {kv_dim, d}, Init::Xavier);
    a.wo = ps.create(name + ".wo", {d, d}, Init::ResidualScaled, residual_blocks);
    return a;
}

Var Attention::forward(Tape* t, const Var& q_src, const Var& kv_src) const {
    const int64_t d = wq.val().dim(1);
    const int64_t dh = d / heads;
    Var q = ag::linear(t, q_src, wq, Var());
    Var k = ag::linear(t, kv_src, wk, Var());
    Var v = ag::linear(t, kv_src, wv, Var());
    Var qh = ag::to_heads(t, q, heads);  // [B*H, Lq, dh]
    Var kh = ag::to_heads(t, k, heads);
    Var vh = ag::to_heads(t, v, heads);
    Var scores = ag::scale(t, ag::bmm_nt(t, qh, kh), 1.0 / std::sqrt(static_cast<double>(dh)));
    Var attn = ag::softmax_last(t, scores);
    Var ctx = ag::from_heads(t, ag::bmm_nn(t, attn, vh), heads);
    return ag::linear(t, ctx, wo, Var());
}

StDitBlock StDitBlock::create(ParamStore& ps, const std::string& prefix, const BlockCfg& cfg,
                              int64_t residual_blocks) {
    StDitBlock b;
    b.cfg = cfg;
    b.ssa = Attention::create(ps, prefix + "ssa", cfg.d, cfg.heads, cfg.d, residual_blocks);
    if (cfg.has_fusion)
        b.sca = Attention::create(ps, prefix + "sca", cfg.d, cfg.heads, cfg.d, residual_blocks);
    if (cfg.has_temporal)
        b.tsa = Attention::create(ps, prefix + "tsa", cfg.d, cfg.heads, cfg.d, residual_blocks);
    b.pca = Attention::create(ps, prefix + "pca", cfg.d, cfg.heads, cfg.d, residual_blocks);
    b.ff1 = Linear::create(ps, prefix + "ff.fc1", cfg.d, cfg.d * cfg.mlp_ratio, Init::Xavier);
    b.ff2 = Linear::create(ps, prefix + "ff.fc2", cfg.d * cfg.mlp_ratio, cfg.d,
                           Init::ResidualScaled, true, residual_blocks);
    if (cfg.has_mod) b.mod = Linear::create(ps, prefix + "mod", cfg.d, 4 * 2 * cfg.d, Init::Zero);
    return b;
}

namespace {
// pre-norm input with optional timestep scale/shift for sublayer k
Var norm_in(Tape* t, const Var& x, const Var& mod_vec, int64_t k, int64_t d, bool has_mod) {
    Var xn = ag::layernorm(t, x);
    if (!has_mod) return xn;
    Var sc = ag::slice1d(t, mod_vec, (2 * k) * d, d);
    Var sh = ag::slice1d(t, mod_vec, (2 * k + 1) * d, d);
    return ag::modulate(t, xn, sc, sh);
}
}  // namespace

Var StDitBlock::forward(Tape* t, Var x, const Var& t_emb, const Var& prompt_kv, const Var& garment,
                        const Tensor& tpe) const {
    const int64_t f = x.val().dim(0);
    const int64_t d = cfg.d;
    Var mod_vec;
    if (cfg.has_mod) {
        if (!t_emb.defined()) throw DimError("StDitBlock: missing timestep embedding");
        mod_vec = mod.forward(t, t_emb);
    }
    // spatial self-attention, fused with garment cross-attention when enabled
    {
        Var xn = norm_in(t, x, mod_vec, 0, d, cfg.has_mod);
        Var out = ssa.forward(t, xn, xn);
        if (cfg.has_fusion) {
            if (!garment.defined()) throw DimError("StDitBlock: fusion enabled but no garment feature");
            Var g = garment.val().dim(0) == f ? garment : ag::broadcast_temporal(t, garment, f);
            out = ag::add(t, out, sca.forward(t, xn, g));
        }
        x = ag::add(t, x, out);
    }
    // temporal self-attention; single-frame inputs skip it (image mode)
    if (cfg.has_temporal && f > 1) {
        Var xn = norm_in(t, x, mod_vec, 1, d, cfg.has_mod);
        if (tpe.numel() > 0) {
            const int64_t s = x.val().dim(1);
            Tensor full({f, s, d});
            for (int64_t fr = 0; fr < f; ++fr)
                for (int64_t j = 0; j < s; ++j)
                    std::copy(tpe.data() + fr * d, tpe.data() + (fr + 1) * d,
                              full.data() + (fr * s + j) * d);
            xn = ag::add(t, xn, ag::constant(std::move(full)));
        }
        Var xt = ag::swap01(t, xn);  // [s,f,d]
        Var out = ag::swap01(t, tsa.forward(t, xt, xt));
        x = ag::add(t, x, out);
    }
    // prompt cross-attention
    {
        if (!prompt_kv.defined()) throw DimError("StDitBlock: missing prompt embedding");
        Var xn = norm_in(t, x, mod_vec, 2, d, cfg.has_mod);
        Var pk = prompt_kv.val().dim(0) == f ? prompt_kv : ag::broadcast_temporal(t, prompt_kv, f);
        x = ag::add(t, x, pca.forward(t, xn, pk));
    }
    // point-wise feed-forward
    {
        Var xn = norm_in(t, x, mod_vec, 3, d, cfg.has_mod);
        x = ag::add(t, x, ff2.forward(t, ag::gelu(t, ff1.forward(t, xn))));
    }
    return x;
}

Tensor sincos_1d(int64_t len, int64_t d) {
    if (d % 2 != 0) throw DimError("sincos_1d: d must be even");
    Tensor out({len, d});
    const int64_t half = d / 2;
    for (int64_t i = 0; i < len; ++i)
        for (int64_t j = 0; j < half; ++j) {
            const double freq =
                std::exp(-std::log(10000.0) * static_cast<double>(j) / static_cast<double>(half));
            const double a = static_cast<double>(i) * freq;
            out.at(i, 2 * j) = std::sin(a);
            out.at(i, 2 * j + 1) = std::cos(a);
        }
    return out;
}

Tensor sincos_2d(int64_t gh, int64_t gw, int64_t d) {
    if (d % 2 != 0) throw DimError("sincos_2d: d must be even");
    const int64_t dh = d / 2;
    Tensor ey = sincos_1d(gh, dh + (dh % 2));  // even sub-dims
    Tensor ex = sincos_1d(gw, d - dh + ((d - dh) % 2));
    Tensor out({gh * gw, d});
    for (int64_t y = 0; y < gh; ++y)
        for (int64_t x = 0; x < gw; ++x) {
            double* o = out.data() + (y * gw + x) * d;
            for (int64_t j = 0; j < dh; ++j) o[j] = ey.at(y, j);
            for (int64_t j = 0; j < d - dh; ++j) o[dh + j] = ex.at(x, j);
        }
    return out;
}

Tensor sincos_scalar(double t, int64_t d) {
    if (d % 2 != 0) throw DimError("sincos_scalar: d must be even");
    Tensor out({d});
    const int64_t half = d / 2;
    for (int64_t j = 0; j < half; ++j) {
        const double freq =
            std::exp(-std::log(10000.0) * static_cast<double>(j) / static_cast<double>(half));
        out[2 * j] = std::sin(t * freq);
        out[2 * j + 1] = std::cos(t * freq);
    }
    return out;
}

PromptEmbedding make_prompt_stub(const std::string& text, int64_t Lp, int64_t d_text) {
    if (text.empty()) throw DimError("make_prompt_stub: empty prompt");
    PromptEmbedding p;
    p.source = text;
    p.tokens = Tensor({Lp, d_text});
    Rng rng = Rng::stream(fnv1a(text), "prompt_stub");
    rng.fill_normal(p.tokens.data(), p.tokens.numel(), 0.0, 1.0);
    return p;
}

}  // namespace vdt::nn
