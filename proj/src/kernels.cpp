#include "vdt/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace vdt::kernels {

namespace {
Exec g_default = Exec::Parallel;
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
}  // namespace

Exec default_exec() { return g_default; }
void set_default_exec(Exec e) { g_default = e; }

// Each parallel loop iterates over independent output elements; the work for
// one element never crosses threads, so Serial and Parallel are bit-identical.

void matmul_nn(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n,
               Exec ex) {
    const bool par = ex == Exec::Parallel;
#pragma omp parallel for schedule(static) if (par)
    for (int64_t i = 0; i < m; ++i) {
        double* c = C + i * n;
        std::fill(c, c + n, 0.0);
        const double* a = A + i * k;
        for (int64_t l = 0; l < k; ++l) {
            const double av = a[l];
            const double* b = B + l * n;
            for (int64_t j = 0; j < n; ++j) c[j] += av * b[j];
        }
    }
}

void matmul_nn_acc(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n,
                   Exec ex) {
    const bool par = ex == Exec::Parallel;
#pragma omp parallel for schedule(static) if (par)
    for (int64_t i = 0; i < m; ++i) {
        double* c = C + i * n;
        const double* a = A + i * k;
        for (int64_t l = 0; l < k; ++l) {
            const double av = a[l];
            const double* b = B + l * n;
            for (int64_t j = 0; j < n; ++j) c[j] += av * b[j];
        }
    }
}

void matmul_nt(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n,
               Exec ex) {
    const bool par = ex == Exec::Parallel;
#pragma omp parallel for schedule(static) if (par)
    for (int64_t i = 0; i < m; ++i) {
        const double* a = A + i * k;
        double* c = C + i * n;
        for (int64_t j = 0; j < n; ++j) {
            const double* b = B + j * k;
            double s = 0.0;
            for (int64_t l = 0; l < k; ++l) s += a[l] * b[l];
            c[j] = s;
        }
    }
}

void matmul_nt_acc(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n,
                   Exec ex) {
    const bool par = ex == Exec::Parallel;
#pragma omp parallel for schedule(static) if (par)
    for (int64_t i = 0; i < m; ++i) {
        const double* a = A + i * k;
        double* c = C + i * n;
        for (int64_t j = 0; j < n; ++j) {
            const double* b = B + j * k;
            double s = 0.0;
            for (int64_t l = 0; l < k; ++l) s += a[l] * b[l];
            c[j] += s;
        }
    }
}

void matmul_tn(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n,
               Exec ex) {
    const bool par = ex == Exec::Parallel;
#pragma omp parallel for schedule(static) if (par)
    for (int64_t i = 0; i < m; ++i) {
        double* c = C + i * n;
        std::fill(c, c + n, 0.0);
        for (int64_t l = 0; l < k; ++l) {
            const double av = A[l * m + i];
            const double* b = B + l * n;
            for (int64_t j = 0; j < n; ++j) c[j] += av * b[j];
        }
    }
}

void matmul_tn_acc(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n,
                   Exec ex) {
    const bool par = ex == Exec::Parallel;
#pragma omp parallel for schedule(static) if (par)
    for (int64_t i = 0; i < m; ++i) {
        double* c = C + i * n;
        for (int64_t l = 0; l < k; ++l) {
            const double av = A[l * m + i];
            const double* b = B + l * n;
            for (int64_t j = 0; j < n; ++j) c[j] += av * b[j];
        }
    }
}

void bmm_nn(const double* A, const double* B, double* C, int64_t b, int64_t m, int64_t k,
            int64_t n, Exec ex) {
    const bool par = ex == Exec::Parallel;
#pragma omp parallel for schedule(static) if (par)
    for (int64_t r = 0; r < b * m; ++r) {
        const int64_t bi = r / m, i = r % m;
        const double* a = A + (bi * m + i) * k;
        const double* Bb = B + bi * k * n;
        double* c = C + (bi * m + i) * n;
        std::fill(c, c + n, 0.0);
        for (int64_t l = 0; l < k; ++l) {
            const double av = a[l];
            const double* bp = Bb + l * n;
            for (int64_t j = 0; j < n; ++j) c[j] += av * bp[j];
        }
    }
}

void bmm_nt(const double* A, const double* B, double* C, int64_t b, int64_t m, int64_t k,
            int64_t n, Exec ex) {
    const bool par = ex == Exec::Parallel;
#pragma omp parallel for schedule(static) if (par)
    for (int64_t r = 0; r < b * m; ++r) {
        const int64_t bi = r / m, i = r % m;
        const double* a = A + (bi * m + i) * k;
        const double* Bb = B + bi * n * k;
        double* c = C + (bi * m + i) * n;
        for (int64_t j = 0; j < n; ++j) {
            const double* bp = Bb + j * k;
            double s = 0.0;
            for (int64_t l = 0; l < k; ++l) s += a[l] * bp[l];
            c[j] = s;
        }
    }
}

void bmm_tn_acc(const double* A, const double* B, double* C, int64_t b, int64_t m, int64_t k,
                int64_t n, Exec ex) {
    const bool par = ex == Exec::Parallel;
#pragma omp parallel for schedule(static) if (par)
    for (int64_t r = 0; r < b * m; ++r) {
        const int64_t bi = r / m, i = r % m;
        const double* Ab = A + bi * k * m;
        const double* Bb = B + bi * k * n;
        double* c = C + (bi * m + i) * n;
        for (int64_t l = 0; l < k; ++l) {
            const double av = Ab[l * m + i];
            const double* bp = Bb + l * n;
            for (int64_t j = 0; j < n; ++j) c[j] += av * bp[j];
        }
    }
}

void bmm_nn_acc(const double* A, const double* B, double* C, int64_t b, int64_t m, int64_t k,
                int64_t n, Exec ex) {
    const bool par = ex == Exec::Parallel;
#pragma omp parallel for schedule(static) if (par)
    for (int64_t r = 0; r < b * m; ++r) {
        const int64_t bi = r / m, i = r % m;
        const double* a = A + (bi * m + i) * k;
        const double* Bb = B + bi * k * n;
        double* c = C + (bi * m + i) * n;
        for (int64_t l = 0; l < k; ++l) {
            const double av = a[l];
            const double* bp = Bb + l * n;
            for (int64_t j = 0; j < n; ++j) c[j] += av * bp[j];
        }
    }
}

void bmm_nt_acc(const double* A, const double* B, double* C, int64_t b, int64_t m, int64_t k,
                int64_t n, Exec ex) {
    const bool par = ex == Exec::Parallel;
#pragma omp parallel for schedule(static) if (par)
    for (int64_t r = 0; r < b * m; ++r) {
        const int64_t bi = r / m, i = r % m;
        const double* a = A + (bi * m + i) * k;
        const double* Bb = B + bi * n * k;
        double* c = C + (bi * m + i) * n;
        for (int64_t j = 0; j < n; ++j) {
            const double* bp = Bb + j * k;
            double s = 0.0;
            for (int64_t l = 0; l < k; ++l) s += a[l] * bp[l];
            c[j] += s;
        }
    }
}

void add_bias(double* Y, const double* b, int64_t rows, int64_t cols, Exec ex) {
    const bool par = ex == Exec::Parallel;
#pragma omp parallel for schedule(static) if (par)
    for (int64_t i = 0; i < rows; ++i) {
        double* y = Y + i * cols;
        for (int64_t j = 0; j < cols; ++j) y[j] += b[j];
    }
}

void bias_grad_acc(const double* dY, double* db, int64_t rows, int64_t cols, Exec ex) {
    const bool par = ex == Exec::Parallel;
#pragma omp parallel for schedule(static) if (par)
    for (int64_t j = 0; j < cols; ++j) {
        double s = 0.0;
        for (int64_t i = 0; i < rows; ++i) s += dY[i * cols + j];
        db[j] += s;
    }
}

void ew_add(const double* a, const double* b, double* out, int64_t n, Exec ex) {
    const bool par = ex == Exec::Parallel;
#pragma omp parallel for schedule(static) if (par)
    for (int64_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void ew_sub(const double* a, const double* b, double* out, int64_t n, Exec ex) {
    const bool par = ex == Exec::Parallel;
#pragma omp parallel for schedule(static) if (par)
    for (int64_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void ew_mul(const double* a, const double* b, double* out, int64_t n, Exec ex) {
    const bool par = ex == Exec::Parallel;
#pragma omp parallel for schedule(static) if (par)
    for (int64_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void ew_scale(const double* a, double s, double* out, int64_t n, Exec ex) {
    const bool par = ex == Exec::Parallel;
#pragma omp parallel for schedule(static) if (par)
    for (int64_t i = 0; i < n; ++i) out[i] = a[i] * s;
}

void ew_axpy_acc(const double* a, double s, double* out, int64_t n, Exec ex) {
    const bool par = ex == Exec::Parallel;
#pragma omp parallel for schedule(static) if (par)
    for (int64_t i = 0; i < n; ++i) out[i] += a[i] * s;
}

void softmax_rows(const double* X, double* Y, int64_t rows, int64_t cols, Exec ex) {
    const bool par = ex == Exec::Parallel;
#pragma omp parallel for schedule(static) if (par)
    for (int64_t i = 0; i < rows; ++i) {
        const double* x = X + i * cols;
        double* y = Y + i * cols;
        double mx = x[0];
        for (int64_t j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
        double s = 0.0;
        for (int64_t j = 0; j < cols; ++j) {
            y[j] = std::exp(x[j] - mx);
            s += y[j];
        }
        const double inv = 1.0 / s;
        for (int64_t j = 0; j < cols; ++j) y[j] *= inv;
    }
}

void softmax_rows_grad_acc(const double* Y, const double* dY, double* dX, int64_t rows,
                           int64_t cols, Exec ex) {
    const bool par = ex == Exec::Parallel;
#pragma omp parallel for schedule(static) if (par)
    for (int64_t i = 0; i < rows; ++i) {
        const double* y = Y + i * cols;
        const double* dy = dY + i * cols;
        double* dx = dX + i * cols;
        double dot = 0.0;
        for (int64_t j = 0; j < cols; ++j) dot += y[j] * dy[j];
        for (int64_t j = 0; j < cols; ++j) dx[j] += (dy[j] - dot) * y[j];
    }
}

void layernorm_rows(const double* X, double* Y, double* mean, double* rstd, int64_t rows,
                    int64_t cols, double eps, Exec ex) {
    const bool par = ex == Exec::Parallel;
#pragma omp parallel for schedule(static) if (par)
    for (int64_t i = 0; i < rows; ++i) {
        const double* x = X + i * cols;
        double* y = Y + i * cols;
        double mu = 0.0;
        for (int64_t j = 0; j < cols; ++j) mu += x[j];
        mu /= static_cast<double>(cols);
        double var = 0.0;
        for (int64_t j = 0; j < cols; ++j) {
            const double d = x[j] - mu;
            var += d * d;
        }
        var /= static_cast<double>(cols);
        const double rs = 1.0 / std::sqrt(var + eps);
        for (int64_t j = 0; j < cols; ++j) y[j] = (x[j] - mu) * rs;
        mean[i] = mu;
        rstd[i] = rs;
    }
}

void layernorm_rows_grad_acc(const double* X, const double* dY, const double* mean,
                             const double* rstd, double* dX, int64_t rows, int64_t cols, Exec ex) {
    const bool par = ex == Exec::Parallel;
    const double invc = 1.0 / static_cast<double>(cols);
#pragma omp parallel for schedule(static) if (par)
    for (int64_t i = 0; i < rows; ++i) {
        const double* x = X + i * cols;
        const double* dy = dY + i * cols;
        double* dx = dX + i * cols;
        const double mu = mean[i], rs = rstd[i];
        double sum_dy = 0.0, sum_dyxh = 0.0;
        for (int64_t j = 0; j < cols; ++j) {
            const double xh = (x[j] - mu) * rs;
            sum_dy += dy[j];
            sum_dyxh += dy[j] * xh;
        }
        for (int64_t j = 0; j < cols; ++j) {
            const double xh = (x[j] - mu) * rs;
            dx[j] += rs * (dy[j] - invc * sum_dy - invc * xh * sum_dyxh);
        }
    }
}

void gelu(const double* x, double* y, int64_t n, Exec ex) {
    const bool par = ex == Exec::Parallel;
#pragma omp parallel for schedule(static) if (par)
    for (int64_t i = 0; i < n; ++i) y[i] = 0.5 * x[i] * (1.0 + std::erf(x[i] * kInvSqrt2));
}

void gelu_grad_acc(const double* x, const double* dy, double* dx, int64_t n, Exec ex) {
    const bool par = ex == Exec::Parallel;
#pragma omp parallel for schedule(static) if (par)
    for (int64_t i = 0; i < n; ++i) {
        const double cdf = 0.5 * (1.0 + std::erf(x[i] * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x[i] * x[i]);
        dx[i] += dy[i] * (cdf + x[i] * pdf);
    }
}

void tanh_fwd(const double* x, double* y, int64_t n, Exec ex) {
    const bool par = ex == Exec::Parallel;
#pragma omp parallel for schedule(static) if (par)
    for (int64_t i = 0; i < n; ++i) y[i] = std::tanh(x[i]);
}

void tanh_grad_acc(const double* y, const double* dy, double* dx, int64_t n, Exec ex) {
    const bool par = ex == Exec::Parallel;
#pragma omp parallel for schedule(static) if (par)
    for (int64_t i = 0; i < n; ++i) dx[i] += dy[i] * (1.0 - y[i] * y[i]);
}

void im2col(const double* x, double* cols, int64_t B, int64_t H, int64_t W, int64_t C, int64_t kh,
            int64_t kw, int64_t stride, int64_t pad, Exec ex) {
    const int64_t Ho = (H + 2 * pad - kh) / stride + 1;
    const int64_t Wo = (W + 2 * pad - kw) / stride + 1;
    const int64_t patch = kh * kw * C;
    const bool par = ex == Exec::Parallel;
#pragma omp parallel for schedule(static) if (par)
    for (int64_t r = 0; r < B * Ho * Wo; ++r) {
        const int64_t b = r / (Ho * Wo);
        const int64_t oy = (r / Wo) % Ho;
        const int64_t ox = r % Wo;
        double* dst = cols + r * patch;
        for (int64_t ky = 0; ky < kh; ++ky) {
            const int64_t iy = oy * stride - pad + ky;
            for (int64_t kx = 0; kx < kw; ++kx) {
                const int64_t ix = ox * stride - pad + kx;
                double* d = dst + (ky * kw + kx) * C;
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) {
                    std::fill(d, d + C, 0.0);
                } else {
                    const double* s = x + ((b * H + iy) * W + ix) * C;
                    std::copy(s, s + C, d);
                }
            }
        }
    }
}

void col2im_acc(const double* cols, double* dx, int64_t B, int64_t H, int64_t W, int64_t C,
                int64_t kh, int64_t kw, int64_t stride, int64_t pad, Exec ex) {
    const int64_t Ho = (H + 2 * pad - kh) / stride + 1;
    const int64_t Wo = (W + 2 * pad - kw) / stride + 1;
    const int64_t patch = kh * kw * C;
    const bool par = ex == Exec::Parallel;
    // gather formulation: each input pixel sums the column entries that read it
#pragma omp parallel for schedule(static) if (par)
    for (int64_t r = 0; r < B * H * W; ++r) {
        const int64_t b = r / (H * W);
        const int64_t iy = (r / W) % H;
        const int64_t ix = r % W;
        double* d = dx + r * C;
        for (int64_t ky = 0; ky < kh; ++ky) {
            const int64_t num_y = iy + pad - ky;
            if (num_y < 0 || num_y % stride != 0) continue;
            const int64_t oy = num_y / stride;
            if (oy >= Ho) continue;
            for (int64_t kx = 0; kx < kw; ++kx) {
                const int64_t num_x = ix + pad - kx;
                if (num_x < 0 || num_x % stride != 0) continue;
                const int64_t ox = num_x / stride;
                if (ox >= Wo) continue;
                const double* s =
                    cols + ((b * Ho + oy) * Wo + ox) * patch + (ky * kw + kx) * C;
                for (int64_t c = 0; c < C; ++c) d[c] += s[c];
            }
        }
    }
}

void upsample2x(const double* x, double* y, int64_t B, int64_t H, int64_t W, int64_t C, Exec ex) {
    const int64_t H2 = 2 * H, W2 = 2 * W;
    const bool par = ex == Exec::Parallel;
#pragma omp parallel for schedule(static) if (par)
    for (int64_t r = 0; r < B * H2 * W2; ++r) {
        const int64_t b = r / (H2 * W2);
        const int64_t oy = (r / W2) % H2;
        const int64_t ox = r % W2;
        const double* s = x + ((b * H + oy / 2) * W + ox / 2) * C;
        double* d = y + r * C;
        std::copy(s, s + C, d);
    }
}

void upsample2x_grad_acc(const double* dy, double* dx, int64_t B, int64_t H, int64_t W, int64_t C,
                         Exec ex) {
    const int64_t H2 = 2 * H, W2 = 2 * W;
    const bool par = ex == Exec::Parallel;
#pragma omp parallel for schedule(static) if (par)
    for (int64_t r = 0; r < B * H * W; ++r) {
        const int64_t b = r / (H * W);
        const int64_t iy = (r / W) % H;
        const int64_t ix = r % W;
        double* d = dx + r * C;
        for (int64_t dy2 = 0; dy2 < 2; ++dy2)
            for (int64_t dx2 = 0; dx2 < 2; ++dx2) {
                const double* s = dy + ((b * H2 + 2 * iy + dy2) * W2 + 2 * ix + dx2) * C;
                for (int64_t c = 0; c < C; ++c) d[c] += s[c];
            }
    }
}

void conv3d(const double* x, const double* w, const double* bias, double* y, int64_t F, int64_t H,
            int64_t W, int64_t Cin, int64_t Cout, int64_t kf, int64_t kh, int64_t kw, int64_t sf,
            int64_t sh, int64_t sw, int64_t pf, int64_t ph, int64_t pw, Exec ex) {
    const int64_t Fo = (F + 2 * pf - kf) / sf + 1;
    const int64_t Ho = (H + 2 * ph - kh) / sh + 1;
    const int64_t Wo = (W + 2 * pw - kw) / sw + 1;
    const bool par = ex == Exec::Parallel;
#pragma omp parallel for schedule(static) if (par)
    for (int64_t r = 0; r < Fo * Ho * Wo; ++r) {
        const int64_t of = r / (Ho * Wo);
        const int64_t oy = (r / Wo) % Ho;
        const int64_t ox = r % Wo;
        double* out = y + r * Cout;
        for (int64_t c = 0; c < Cout; ++c) out[c] = bias ? bias[c] : 0.0;
        for (int64_t tf = 0; tf < kf; ++tf) {
            const int64_t ifr = of * sf - pf + tf;
            if (ifr < 0 || ifr >= F) continue;
            for (int64_t ty = 0; ty < kh; ++ty) {
                const int64_t iy = oy * sh - ph + ty;
                if (iy < 0 || iy >= H) continue;
                for (int64_t tx = 0; tx < kw; ++tx) {
                    const int64_t ix = ox * sw - pw + tx;
                    if (ix < 0 || ix >= W) continue;
                    const double* xin = x + ((ifr * H + iy) * W + ix) * Cin;
                    const double* wk = w + (((tf * kh + ty) * kw + tx) * Cin) * Cout;
                    for (int64_t ci = 0; ci < Cin; ++ci) {
                        const double xv = xin[ci];
                        const double* wrow = wk + ci * Cout;
                        for (int64_t c = 0; c < Cout; ++c) out[c] += xv * wrow[c];
                    }
                }
            }
        }
    }
}

}  // namespace vdt::kernels
