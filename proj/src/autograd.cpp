#include "vdt/autograd.hpp"

#include <cmath>

#include "vdt/kernels.hpp"

namespace vdt::ag {

namespace k = vdt::kernels;

namespace {

bool want_grad(Tape* t, std::initializer_list<const Var*> ins) {
    if (!t) return false;
    for (const Var* v : ins)
        if (v->defined() && v->requires_grad()) return true;
    return false;
}

void acc(Tensor& dst, const Tensor& src) {
    k::ew_axpy_acc(src.data(), 1.0, dst.data(), dst.numel());
}

// out += a * b (elementwise)
void fma_acc(const double* a, const double* b, double* out, int64_t n) {
    for (int64_t i = 0; i < n; ++i) out[i] += a[i] * b[i];
}

int64_t rows_of(const Tensor& x) {
    return x.numel() / x.shape().back();
}

}  // namespace

void Tape::backward(const Var& loss) {
    if (loss.val().numel() != 1) throw DimError("Tape::backward: loss must be scalar");
    loss.node()->ensure_grad()[0] = 1.0;
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
}

Var constant(Tensor v) { return Var(std::move(v), false); }

Var add(Tape* t, const Var& a, const Var& b) {
    if (!a.val().same_shape(b.val())) throw DimError("add: shape mismatch");
    Tensor out(a.val().shape());
    k::ew_add(a.val().data(), b.val().data(), out.data(), out.numel());
    const bool need = want_grad(t, {&a, &b});
    Var y(std::move(out), need);
    if (need) {
        auto an = a.shared(), bn = b.shared(), yn = y.shared();
        t->record([an, bn, yn] {
            if (!yn->grad_ready) return;
            if (an->requires_grad) acc(an->ensure_grad(), yn->grad);
            if (bn->requires_grad) acc(bn->ensure_grad(), yn->grad);
        });
    }
    return y;
}

Var sub(Tape* t, const Var& a, const Var& b) {
    if (!a.val().same_shape(b.val())) throw DimError("sub: shape mismatch");
    Tensor out(a.val().shape());
    k::ew_sub(a.val().data(), b.val().data(), out.data(), out.numel());
    const bool need = want_grad(t, {&a, &b});
    Var y(std::move(out), need);
    if (need) {
        auto an = a.shared(), bn = b.shared(), yn = y.shared();
        t->record([an, bn, yn] {
            if (!yn->grad_ready) return;
            if (an->requires_grad) acc(an->ensure_grad(), yn->grad);
            if (bn->requires_grad)
                k::ew_axpy_acc(yn->grad.data(), -1.0, bn->ensure_grad().data(),
                               yn->grad.numel());
        });
    }
    return y;
}

Var mul(Tape* t, const Var& a, const Var& b) {
    if (!a.val().same_shape(b.val())) throw DimError("mul: shape mismatch");
    Tensor out(a.val().shape());
    k::ew_mul(a.val().data(), b.val().data(), out.data(), out.numel());
    const bool need = want_grad(t, {&a, &b});
    Var y(std::move(out), need);
    if (need) {
        auto an = a.shared(), bn = b.shared(), yn = y.shared();
        t->record([an, bn, yn] {
            if (!yn->grad_ready) return;
            const int64_t n = yn->grad.numel();
            if (an->requires_grad)
                fma_acc(yn->grad.data(), bn->value.data(), an->ensure_grad().data(), n);
            if (bn->requires_grad)
                fma_acc(yn->grad.data(), an->value.data(), bn->ensure_grad().data(), n);
        });
    }
    return y;
}

Var scale(Tape* t, const Var& a, double s) {
    Tensor out(a.val().shape());
    k::ew_scale(a.val().data(), s, out.data(), out.numel());
    const bool need = want_grad(t, {&a});
    Var y(std::move(out), need);
    if (need) {
        auto an = a.shared(), yn = y.shared();
        t->record([an, yn, s] {
            if (!yn->grad_ready) return;
            k::ew_axpy_acc(yn->grad.data(), s, an->ensure_grad().data(), yn->grad.numel());
        });
    }
    return y;
}

Var linear(Tape* t, const Var& x, const Var& W, const Var& b) {
    const int64_t in = W.val().dim(0), out_dim = W.val().dim(1);
    if (x.val().shape().back() != in) throw DimError("linear: input dim mismatch");
    if (b.defined() && (b.val().ndim() != 1 || b.val().dim(0) != out_dim))
        throw DimError("linear: bias dim mismatch");
    const int64_t m = rows_of(x.val());
    std::vector<int64_t> out_shape = x.val().shape();
    out_shape.back() = out_dim;
    Tensor out(out_shape);
    k::matmul_nn(x.val().data(), W.val().data(), out.data(), m, in, out_dim);
    if (b.defined()) k::add_bias(out.data(), b.val().data(), m, out_dim);
    const bool need = b.defined() ? want_grad(t, {&x, &W, &b}) : want_grad(t, {&x, &W});
    Var y(std::move(out), need);
    if (need) {
        auto xn = x.shared(), Wn = W.shared(), yn = y.shared();
        auto bn = b.defined() ? b.shared() : nullptr;
        t->record([xn, Wn, bn, yn, m, in, out_dim] {
            if (!yn->grad_ready) return;
            const double* dY = yn->grad.data();
            if (xn->requires_grad)
                k::matmul_nt_acc(dY, Wn->value.data(), xn->ensure_grad().data(), m, out_dim, in);
            if (Wn->requires_grad)
                k::matmul_tn_acc(xn->value.data(), dY, Wn->ensure_grad().data(), in, m, out_dim);
            if (bn && bn->requires_grad)
                k::bias_grad_acc(dY, bn->ensure_grad().data(), m, out_dim);
        });
    }
    return y;
}

Var layernorm(Tape* t, const Var& x, double eps) {
    const int64_t d = x.val().shape().back();
    const int64_t m = rows_of(x.val());
    Tensor out(x.val().shape());
    Tensor mean({m}), rstd({m});
    k::layernorm_rows(x.val().data(), out.data(), mean.data(), rstd.data(), m, d, eps);
    const bool need = want_grad(t, {&x});
    Var y(std::move(out), need);
    if (need) {
        auto xn = x.shared(), yn = y.shared();
        auto mu = std::make_shared<Tensor>(std::move(mean));
        auto rs = std::make_shared<Tensor>(std::move(rstd));
        t->record([xn, yn, mu, rs, m, d] {
            if (!yn->grad_ready) return;
            k::layernorm_rows_grad_acc(xn->value.data(), yn->grad.data(), mu->data(), rs->data(),
                                       xn->ensure_grad().data(), m, d);
        });
    }
    return y;
}

Var softmax_last(Tape* t, const Var& x) {
    const int64_t d = x.val().shape().back();
    const int64_t m = rows_of(x.val());
    Tensor out(x.val().shape());
    k::softmax_rows(x.val().data(), out.data(), m, d);
    const bool need = want_grad(t, {&x});
    Var y(std::move(out), need);
    if (need) {
        auto xn = x.shared(), yn = y.shared();
        t->record([xn, yn, m, d] {
            if (!yn->grad_ready) return;
            k::softmax_rows_grad_acc(yn->value.data(), yn->grad.data(),
                                     xn->ensure_grad().data(), m, d);
        });
    }
    return y;
}

Var gelu(Tape* t, const Var& x) {
    Tensor out(x.val().shape());
    k::gelu(x.val().data(), out.data(), out.numel());
    const bool need = want_grad(t, {&x});
    Var y(std::move(out), need);
    if (need) {
        auto xn = x.shared(), yn = y.shared();
        t->record([xn, yn] {
            if (!yn->grad_ready) return;
            k::gelu_grad_acc(xn->value.data(), yn->grad.data(), xn->ensure_grad().data(),
                             yn->grad.numel());
        });
    }
    return y;
}

Var tanh_op(Tape* t, const Var& x) {
    Tensor out(x.val().shape());
    k::tanh_fwd(x.val().data(), out.data(), out.numel());
    const bool need = want_grad(t, {&x});
    Var y(std::move(out), need);
    if (need) {
        auto xn = x.shared(), yn = y.shared();
        t->record([xn, yn] {
            if (!yn->grad_ready) return;
            k::tanh_grad_acc(yn->value.data(), yn->grad.data(), xn->ensure_grad().data(),
                             yn->grad.numel());
        });
    }
    return y;
}

Var reshape(Tape* t, const Var& x, std::vector<int64_t> shape) {
    Tensor out = x.val();
    out.set_shape(shape);
    const bool need = want_grad(t, {&x});
    Var y(std::move(out), need);
    if (need) {
        auto xn = x.shared(), yn = y.shared();
        t->record([xn, yn] {
            if (!yn->grad_ready) return;
            acc(xn->ensure_grad(), yn->grad);  // same element order
        });
    }
    return y;
}

namespace {
// y[j,i,rest] = x[i,j,rest]
void swap01_copy(const double* x, double* y, int64_t a, int64_t b, int64_t rest) {
    for (int64_t i = 0; i < a; ++i)
        for (int64_t j = 0; j < b; ++j) {
            const double* s = x + (i * b + j) * rest;
            double* d = y + (j * a + i) * rest;
            std::copy(s, s + rest, d);
        }
}
void swap01_acc(const double* y, double* x, int64_t a, int64_t b, int64_t rest) {
    for (int64_t i = 0; i < a; ++i)
        for (int64_t j = 0; j < b; ++j) {
            const double* s = y + (j * a + i) * rest;
            double* d = x + (i * b + j) * rest;
            for (int64_t r = 0; r < rest; ++r) d[r] += s[r];
        }
}
}  // namespace

Var swap01(Tape* t, const Var& x) {
    if (x.val().ndim() < 2) throw DimError("swap01: rank < 2");
    auto shape = x.val().shape();
    const int64_t a = shape[0], b = shape[1];
    int64_t rest = 1;
    for (size_t i = 2; i < shape.size(); ++i) rest *= shape[i];
    std::swap(shape[0], shape[1]);
    Tensor out(shape);
    swap01_copy(x.val().data(), out.data(), a, b, rest);
    const bool need = want_grad(t, {&x});
    Var y(std::move(out), need);
    if (need) {
        auto xn = x.shared(), yn = y.shared();
        t->record([xn, yn, a, b, rest] {
            if (!yn->grad_ready) return;
            swap01_acc(yn->grad.data(), xn->ensure_grad().data(), a, b, rest);
        });
    }
    return y;
}

namespace {
// x[B,L,H,dh] -> y[B,H,L,dh]
void heads_split(const double* x, double* y, int64_t B, int64_t L, int64_t H, int64_t dh) {
    for (int64_t b = 0; b < B; ++b)
        for (int64_t l = 0; l < L; ++l)
            for (int64_t h = 0; h < H; ++h) {
                const double* s = x + ((b * L + l) * H + h) * dh;
                double* d = y + ((b * H + h) * L + l) * dh;
                std::copy(s, s + dh, d);
            }
}
void heads_split_acc_back(const double* dy, double* dx, int64_t B, int64_t L, int64_t H,
                          int64_t dh) {
    for (int64_t b = 0; b < B; ++b)
        for (int64_t l = 0; l < L; ++l)
            for (int64_t h = 0; h < H; ++h) {
                const double* s = dy + ((b * H + h) * L + l) * dh;
                double* d = dx + ((b * L + l) * H + h) * dh;
                for (int64_t e = 0; e < dh; ++e) d[e] += s[e];
            }
}
// dx[B*H,L,dh] += dy[B,L,H*dh] mapped through the head split
void heads_split_acc(const double* dy, double* dx, int64_t B, int64_t L, int64_t H, int64_t dh) {
    for (int64_t b = 0; b < B; ++b)
        for (int64_t l = 0; l < L; ++l)
            for (int64_t h = 0; h < H; ++h) {
                const double* s = dy + ((b * L + l) * H + h) * dh;
                double* d = dx + ((b * H + h) * L + l) * dh;
                for (int64_t e = 0; e < dh; ++e) d[e] += s[e];
            }
}
}  // namespace

Var to_heads(Tape* t, const Var& x, int64_t heads) {
    if (x.val().ndim() != 3) throw DimError("to_heads: expect [B,L,D]");
    const int64_t B = x.val().dim(0), L = x.val().dim(1), D = x.val().dim(2);
    if (D % heads != 0) throw DimError("to_heads: D not divisible by heads");
    const int64_t dh = D / heads;
    Tensor out({B * heads, L, dh});
    heads_split(x.val().data(), out.data(), B, L, heads, dh);
    const bool need = want_grad(t, {&x});
    Var y(std::move(out), need);
    if (need) {
        auto xn = x.shared(), yn = y.shared();
        t->record([xn, yn, B, L, heads, dh] {
            if (!yn->grad_ready) return;
            heads_split_acc_back(yn->grad.data(), xn->ensure_grad().data(), B, L, heads, dh);
        });
    }
    return y;
}

Var from_heads(Tape* t, const Var& x, int64_t heads) {
    if (x.val().ndim() != 3) throw DimError("from_heads: expect [B*H,L,dh]");
    const int64_t BH = x.val().dim(0), L = x.val().dim(1), dh = x.val().dim(2);
    if (BH % heads != 0) throw DimError("from_heads: batch not divisible by heads");
    const int64_t B = BH / heads;
    Tensor out({B, L, heads * dh});
    // inverse of heads_split
    for (int64_t b = 0; b < B; ++b)
        for (int64_t h = 0; h < heads; ++h)
            for (int64_t l = 0; l < L; ++l) {
                const double* s = x.val().data() + ((b * heads + h) * L + l) * dh;
                double* d = out.data() + ((b * L + l) * heads + h) * dh;
                std::copy(s, s + dh, d);
            }
    const bool need = want_grad(t, {&x});
    Var y(std::move(out), need);
    if (need) {
        auto xn = x.shared(), yn = y.shared();
        t->record([xn, yn, B, L, heads, dh] {
            if (!yn->grad_ready) return;
            heads_split_acc(yn->grad.data(), xn->ensure_grad().data(), B, L, heads, dh);
        });
    }
    return y;
}

Var bmm_nn(Tape* t, const Var& a, const Var& b) {
    const auto& as = a.val().shape();
    const auto& bs = b.val().shape();
    if (as.size() != 3 || bs.size() != 3 || as[0] != bs[0] || as[2] != bs[1])
        throw DimError("bmm_nn: shape mismatch");
    const int64_t B = as[0], m = as[1], kk = as[2], n = bs[2];
    Tensor out({B, m, n});
    k::bmm_nn(a.val().data(), b.val().data(), out.data(), B, m, kk, n);
    const bool need = want_grad(t, {&a, &b});
    Var y(std::move(out), need);
    if (need) {
        auto an = a.shared(), bn = b.shared(), yn = y.shared();
        t->record([an, bn, yn, B, m, kk, n] {
            if (!yn->grad_ready) return;
            const double* dC = yn->grad.data();
            if (an->requires_grad)
                k::bmm_nt_acc(dC, bn->value.data(), an->ensure_grad().data(), B, m, n, kk);
            if (bn->requires_grad)
                k::bmm_tn_acc(an->value.data(), dC, bn->ensure_grad().data(), B, kk, m, n);
        });
    }
    return y;
}

Var bmm_nt(Tape* t, const Var& a, const Var& b) {
    const auto& as = a.val().shape();
    const auto& bs = b.val().shape();
    if (as.size() != 3 || bs.size() != 3 || as[0] != bs[0] || as[2] != bs[2])
        throw DimError("bmm_nt: shape mismatch");
    const int64_t B = as[0], m = as[1], kk = as[2], n = bs[1];
    Tensor out({B, m, n});
    k::bmm_nt(a.val().data(), b.val().data(), out.data(), B, m, kk, n);
    const bool need = want_grad(t, {&a, &b});
    Var y(std::move(out), need);
    if (need) {
        auto an = a.shared(), bn = b.shared(), yn = y.shared();
        t->record([an, bn, yn, B, m, kk, n] {
            if (!yn->grad_ready) return;
            const double* dC = yn->grad.data();
            if (an->requires_grad)
                k::bmm_nn_acc(dC, bn->value.data(), an->ensure_grad().data(), B, m, n, kk);
            if (bn->requires_grad)
                k::bmm_tn_acc(dC, an->value.data(), bn->ensure_grad().data(), B, n, m, kk);
        });
    }
    return y;
}

Var broadcast_temporal(Tape* t, const Var& x, int64_t f) {
    const auto& s = x.val().shape();
    if (s.size() != 3 || s[0] != 1) throw DimError("broadcast_temporal: expect [1,s,d]");
    const int64_t sd = s[1] * s[2];
    Tensor out({f, s[1], s[2]});
    for (int64_t i = 0; i < f; ++i)
        std::copy(x.val().data(), x.val().data() + sd, out.data() + i * sd);
    const bool need = want_grad(t, {&x});
    Var y(std::move(out), need);
    if (need) {
        auto xn = x.shared(), yn = y.shared();
        t->record([xn, yn, f, sd] {
            if (!yn->grad_ready) return;
            double* dx = xn->ensure_grad().data();
            const double* dy = yn->grad.data();
            for (int64_t i = 0; i < f; ++i)
                for (int64_t j = 0; j < sd; ++j) dx[j] += dy[i * sd + j];
        });
    }
    return y;
}

Var modulate(Tape* t, const Var& x, const Var& sc, const Var& sh) {
    const int64_t d = x.val().shape().back();
    if (sc.val().numel() != d || sh.val().numel() != d)
        throw DimError("modulate: scale/shift must have last-dim size");
    const int64_t m = rows_of(x.val());
    Tensor out(x.val().shape());
    {
        const double* xp = x.val().data();
        const double* scp = sc.val().data();
        const double* shp = sh.val().data();
        double* yp = out.data();
        for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < d; ++j)
                yp[i * d + j] = xp[i * d + j] * (1.0 + scp[j]) + shp[j];
    }
    const bool need = want_grad(t, {&x, &sc, &sh});
    Var y(std::move(out), need);
    if (need) {
        auto xn = x.shared(), scn = sc.shared(), shn = sh.shared(), yn = y.shared();
        t->record([xn, scn, shn, yn, m, d] {
            if (!yn->grad_ready) return;
            const double* dy = yn->grad.data();
            if (xn->requires_grad) {
                double* dx = xn->ensure_grad().data();
                const double* scp = scn->value.data();
                for (int64_t i = 0; i < m; ++i)
                    for (int64_t j = 0; j < d; ++j) dx[i * d + j] += dy[i * d + j] * (1.0 + scp[j]);
            }
            if (scn->requires_grad) {
                double* dsc = scn->ensure_grad().data();
                const double* xp = xn->value.data();
                for (int64_t j = 0; j < d; ++j) {
                    double s = 0.0;
                    for (int64_t i = 0; i < m; ++i) s += dy[i * d + j] * xp[i * d + j];
                    dsc[j] += s;
                }
            }
            if (shn->requires_grad) k::bias_grad_acc(dy, shn->ensure_grad().data(), m, d);
        });
    }
    return y;
}

Var slice1d(Tape* t, const Var& x, int64_t start, int64_t len) {
    if (x.val().ndim() != 1 || start < 0 || start + len > x.val().numel())
        throw DimError("slice1d: out of range");
    Tensor out({len});
    std::copy(x.val().data() + start, x.val().data() + start + len, out.data());
    const bool need = want_grad(t, {&x});
    Var y(std::move(out), need);
    if (need) {
        auto xn = x.shared(), yn = y.shared();
        t->record([xn, yn, start, len] {
            if (!yn->grad_ready) return;
            double* dx = xn->ensure_grad().data();
            const double* dy = yn->grad.data();
            for (int64_t i = 0; i < len; ++i) dx[start + i] += dy[i];
        });
    }
    return y;
}

Var concat_last(Tape* t, const std::vector<Var>& xs) {
    if (xs.empty()) throw DimError("concat_last: empty input");
    auto lead = xs[0].val().shape();
    lead.pop_back();
    int64_t total = 0;
    for (const Var& v : xs) {
        auto s = v.val().shape();
        const int64_t last = s.back();
        s.pop_back();
        if (s != lead) throw DimError("concat_last: leading dims differ");
        total += last;
    }
    int64_t m = 1;
    for (int64_t v : lead) m *= v;
    auto out_shape = lead;
    out_shape.push_back(total);
    Tensor out(out_shape);
    {
        int64_t off = 0;
        for (const Var& v : xs) {
            const int64_t c = v.val().shape().back();
            for (int64_t i = 0; i < m; ++i)
                std::copy(v.val().data() + i * c, v.val().data() + (i + 1) * c,
                          out.data() + i * total + off);
            off += c;
        }
    }
    bool need = false;
    if (t)
        for (const Var& v : xs)
            if (v.requires_grad()) need = true;
    Var y(std::move(out), need);
    if (need) {
        std::vector<std::shared_ptr<Node>> ins;
        for (const Var& v : xs) ins.push_back(v.shared());
        auto yn = y.shared();
        t->record([ins, yn, m, total] {
            if (!yn->grad_ready) return;
            const double* dy = yn->grad.data();
            int64_t off = 0;
            for (auto& in : ins) {
                const int64_t c = in->value.shape().back();
                if (in->requires_grad) {
                    double* dx = in->ensure_grad().data();
                    for (int64_t i = 0; i < m; ++i)
                        for (int64_t j = 0; j < c; ++j) dx[i * c + j] += dy[i * total + off + j];
                }
                off += c;
            }
        });
    }
    return y;
}

Var mse(Tape* t, const Var& pred, const Var& target) {
    if (!pred.val().same_shape(target.val())) throw DimError("mse: shape mismatch");
    const int64_t n = pred.val().numel();
    double s = 0.0;
    const double* p = pred.val().data();
    const double* q = target.val().data();
    for (int64_t i = 0; i < n; ++i) {
        const double d = p[i] - q[i];
        s += d * d;
    }
    const bool need = want_grad(t, {&pred, &target});
    Var y(Tensor::scalar(s / static_cast<double>(n)), need);
    if (need) {
        auto pn = pred.shared(), qn = target.shared(), yn = y.shared();
        t->record([pn, qn, yn, n] {
            if (!yn->grad_ready) return;
            const double g = yn->grad[0] * 2.0 / static_cast<double>(n);
            const double* p = pn->value.data();
            const double* q = qn->value.data();
            if (pn->requires_grad) {
                double* d = pn->ensure_grad().data();
                for (int64_t i = 0; i < n; ++i) d[i] += g * (p[i] - q[i]);
            }
            if (qn->requires_grad) {
                double* d = qn->ensure_grad().data();
                for (int64_t i = 0; i < n; ++i) d[i] -= g * (p[i] - q[i]);
            }
        });
    }
    return y;
}

namespace {
// z[f,h,w,C] <-> tokens [f, gh*gw, p*p*C], token cell order (py, px, c)
void pack_patches(const double* z, double* tok, int64_t f, int64_t h, int64_t w, int64_t C,
                  int64_t p, bool forward_dir, bool accumulate) {
    const int64_t gh = h / p, gw = w / p, s = gh * gw, patch = p * p * C;
    for (int64_t fr = 0; fr < f; ++fr)
        for (int64_t gy = 0; gy < gh; ++gy)
            for (int64_t gx = 0; gx < gw; ++gx)
                for (int64_t py = 0; py < p; ++py)
                    for (int64_t px = 0; px < p; ++px) {
                        const int64_t zoff =
                            ((fr * h + gy * p + py) * w + gx * p + px) * C;
                        const int64_t toff =
                            (fr * s + gy * gw + gx) * patch + (py * p + px) * C;
                        for (int64_t c = 0; c < C; ++c) {
                            if (forward_dir) {
                                if (accumulate)
                                    tok[toff + c] += z[zoff + c];
                                else
                                    tok[toff + c] = z[zoff + c];
                            } else {
                                if (accumulate)
                                    const_cast<double*>(z)[zoff + c] += tok[toff + c];
                                else
                                    const_cast<double*>(z)[zoff + c] = tok[toff + c];
                            }
                        }
                    }
}
}  // namespace

Var patches_from_latent(Tape* t, const Var& z, int64_t p) {
    const auto& s = z.val().shape();
    if (s.size() != 4) throw DimError("patches_from_latent: expect [f,h,w,C]");
    const int64_t f = s[0], h = s[1], w = s[2], C = s[3];
    if (p < 1 || h % p != 0 || w % p != 0)
        throw DimError("patches_from_latent: spatial dims not divisible by patch size");
    Tensor out({f, (h / p) * (w / p), p * p * C});
    pack_patches(z.val().data(), out.data(), f, h, w, C, p, true, false);
    const bool need = want_grad(t, {&z});
    Var y(std::move(out), need);
    if (need) {
        auto zn = z.shared(), yn = y.shared();
        t->record([zn, yn, f, h, w, C, p] {
            if (!yn->grad_ready) return;
            pack_patches(zn->ensure_grad().data(), yn->grad.data(), f, h, w, C, p, false, true);
        });
    }
    return y;
}

Var latent_from_patches(Tape* t, const Var& x, int64_t p, int64_t h, int64_t w, int64_t C) {
    const auto& s = x.val().shape();
    if (s.size() != 3) throw DimError("latent_from_patches: expect [f,s,patch]");
    const int64_t f = s[0];
    if (p < 1 || h % p != 0 || w % p != 0) throw DimError("latent_from_patches: bad patch size");
    if (s[1] != (h / p) * (w / p) || s[2] != p * p * C)
        throw DimError("latent_from_patches: token geometry mismatch");
    Tensor out({f, h, w, C});
    pack_patches(out.data(), const_cast<double*>(x.val().data()), f, h, w, C, p, false, false);
    const bool need = want_grad(t, {&x});
    Var y(std::move(out), need);
    if (need) {
        auto xn = x.shared(), yn = y.shared();
        t->record([xn, yn, f, h, w, C, p] {
            if (!yn->grad_ready) return;
            pack_patches(yn->grad.data(), xn->ensure_grad().data(), f, h, w, C, p, true, true);
        });
    }
    return y;
}

Var conv2d(Tape* t, const Var& x, const Var& W, const Var& b, int64_t stride, int64_t pad) {
    const auto& xs = x.val().shape();
    const auto& ws = W.val().shape();
    if (xs.size() != 4 || ws.size() != 4) throw DimError("conv2d: bad ranks");
    const int64_t B = xs[0], H = xs[1], Wd = xs[2], Cin = xs[3];
    const int64_t kh = ws[0], kw = ws[1], Cout = ws[3];
    if (ws[2] != Cin) throw DimError("conv2d: channel mismatch");
    const int64_t Ho = (H + 2 * pad - kh) / stride + 1;
    const int64_t Wo = (Wd + 2 * pad - kw) / stride + 1;
    const int64_t rows = B * Ho * Wo, patch = kh * kw * Cin;
    auto cols = std::make_shared<Tensor>(Tensor({rows, patch}));
    k::im2col(x.val().data(), cols->data(), B, H, Wd, Cin, kh, kw, stride, pad);
    Tensor out({B, Ho, Wo, Cout});
    k::matmul_nn(cols->data(), W.val().data(), out.data(), rows, patch, Cout);
    if (b.defined()) k::add_bias(out.data(), b.val().data(), rows, Cout);
    const bool need = b.defined() ? want_grad(t, {&x, &W, &b}) : want_grad(t, {&x, &W});
    Var y(std::move(out), need);
    if (need) {
        auto xn = x.shared(), Wn = W.shared(), yn = y.shared();
        auto bn = b.defined() ? b.shared() : nullptr;
        t->record([xn, Wn, bn, yn, cols, B, H, Wd, Cin, kh, kw, stride, pad, rows, patch, Cout] {
            if (!yn->grad_ready) return;
            const double* dY = yn->grad.data();
            if (Wn->requires_grad)
                k::matmul_tn_acc(cols->data(), dY, Wn->ensure_grad().data(), patch, rows, Cout);
            if (bn && bn->requires_grad) k::bias_grad_acc(dY, bn->ensure_grad().data(), rows, Cout);
            if (xn->requires_grad) {
                Tensor dcols({rows, patch});
                k::matmul_nt(dY, Wn->value.data(), dcols.data(), rows, Cout, patch);
                k::col2im_acc(dcols.data(), xn->ensure_grad().data(), B, H, Wd, Cin, kh, kw,
                              stride, pad);
            }
        });
    }
    return y;
}

Var upsample2x(Tape* t, const Var& x) {
    const auto& s = x.val().shape();
    if (s.size() != 4) throw DimError("upsample2x: expect [B,H,W,C]");
    const int64_t B = s[0], H = s[1], W = s[2], C = s[3];
    Tensor out({B, 2 * H, 2 * W, C});
    k::upsample2x(x.val().data(), out.data(), B, H, W, C);
    const bool need = want_grad(t, {&x});
    Var y(std::move(out), need);
    if (need) {
        auto xn = x.shared(), yn = y.shared();
        t->record([xn, yn, B, H, W, C] {
            if (!yn->grad_ready) return;
            k::upsample2x_grad_acc(yn->grad.data(), xn->ensure_grad().data(), B, H, W, C);
        });
    }
    return y;
}

}  // namespace vdt::ag
