#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "vdt/tensor.hpp"

namespace vdt::ag {

/// One value in the computation graph plus its (lazily allocated) gradient.
struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool grad_ready = false;

    Tensor& ensure_grad() {
        if (!grad_ready) {
            grad = Tensor(value.shape());
            grad_ready = true;
        }
        return grad;
    }
    void reset_grad() { grad_ready = false; }
};

/// Shared handle to a Node. Copies alias the same value/gradient.
class Var {
public:
    Var() = default;
    explicit Var(Tensor v, bool requires_grad = false)
        : n_(std::make_shared<Node>()) {
        n_->value = std::move(v);
        n_->requires_grad = requires_grad;
    }

    bool defined() const { return static_cast<bool>(n_); }
    const Tensor& val() const { return n_->value; }
    Tensor& val() { return n_->value; }
    bool requires_grad() const { return n_ && n_->requires_grad; }
    bool grad_ready() const { return n_ && n_->grad_ready; }
    Tensor& grad() { return n_->ensure_grad(); }
    const Tensor& grad_view() const { return n_->grad; }
    void reset_grad() { n_->reset_grad(); }
    Node* node() const { return n_.get(); }
    std::shared_ptr<Node> shared() const { return n_; }

private:
    std::shared_ptr<Node> n_;
};

/// Records backward closures in forward order; backward() replays them in
/// reverse. A null Tape* in any op means inference mode (no recording).
class Tape {
public:
    void record(std::function<void()> fn) { ops_.push_back(std::move(fn)); }
    /// Seeds d(loss)/d(loss)=1 for a scalar loss and runs the tape backwards.
    void backward(const Var& loss);
    void clear() { ops_.clear(); }
    size_t size() const { return ops_.size(); }

private:
    std::vector<std::function<void()>> ops_;
};

// ---- ops ----
// All ops validate shapes, compute the forward value, and (when tape != null
// and some input requires grad) record the accumulate-into-inputs backward.

Var constant(Tensor v);

Var add(Tape* t, const Var& a, const Var& b);
Var sub(Tape* t, const Var& a, const Var& b);
Var mul(Tape* t, const Var& a, const Var& b);
Var scale(Tape* t, const Var& a, double s);

/// x[..., in] * W[in, out] + b[out]; b may be undefined.
Var linear(Tape* t, const Var& x, const Var& W, const Var& b);
/// Row-wise layer norm over the last axis, no affine.
Var layernorm(Tape* t, const Var& x, double eps = 1e-6);
Var softmax_last(Tape* t, const Var& x);
Var gelu(Tape* t, const Var& x);
Var tanh_op(Tape* t, const Var& x);

Var reshape(Tape* t, const Var& x, std::vector<int64_t> shape);
/// [a,b,rest...] -> [b,a,rest...] (swap of the two leading axes).
Var swap01(Tape* t, const Var& x);
/// [B,L,H*dh] -> [B*H,L,dh]
Var to_heads(Tape* t, const Var& x, int64_t heads);
/// [B*H,L,dh] -> [B,L,H*dh]
Var from_heads(Tape* t, const Var& x, int64_t heads);

Var bmm_nn(Tape* t, const Var& a, const Var& b);  // [B,m,k]x[B,k,n]
Var bmm_nt(Tape* t, const Var& a, const Var& b);  // [B,m,k]x[B,n,k]^T

/// [1,s,d] -> [f,s,d] (every frame identical); backward sums over frames.
Var broadcast_temporal(Tape* t, const Var& x, int64_t f);
/// y = x*(1+scale)+shift with scale/shift of shape [d] broadcast over rows.
Var modulate(Tape* t, const Var& x, const Var& scale, const Var& shift);
/// 1-D slice [start, start+len) of a vector.
Var slice1d(Tape* t, const Var& x, int64_t start, int64_t len);
/// Concatenate along the last axis (all leading dims equal).
Var concat_last(Tape* t, const std::vector<Var>& xs);

/// mean((pred-target)^2) -> scalar [1]
Var mse(Tape* t, const Var& pred, const Var& target);

/// z[f,h,w,C] -> tokens [f, (h/p)*(w/p), p*p*C]; pure data rearrangement.
Var patches_from_latent(Tape* t, const Var& z, int64_t p);
/// tokens [f,s,p*p*C] -> z[f,h,w,C]; inverse of patches_from_latent.
Var latent_from_patches(Tape* t, const Var& x, int64_t p, int64_t h, int64_t w, int64_t C);

/// Channels-last conv2d, input [B,H,W,Cin], weight [kh,kw,Cin,Cout].
Var conv2d(Tape* t, const Var& x, const Var& W, const Var& b, int64_t stride, int64_t pad);
Var upsample2x(Tape* t, const Var& x);

}  // namespace vdt::ag
