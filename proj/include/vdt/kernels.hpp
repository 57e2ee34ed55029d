#pragma once

#include <cstdint>

namespace vdt::kernels {

/// Execution policy for every kernel. Serial is the reference implementation;
/// Parallel uses OpenMP over independent output elements only (no split
/// reductions), so both policies produce bit-identical results for any
/// thread count.
enum class Exec { Serial, Parallel };

Exec default_exec();
void set_default_exec(Exec e);

// ---- dense linear algebra ----

/// C[m,n] = A[m,k] * B[k,n]  (C overwritten)
void matmul_nn(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n,
               Exec ex = default_exec());
/// C[m,n] = A[m,k] * B[n,k]^T
void matmul_nt(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n,
               Exec ex = default_exec());
/// C[m,n] = A[k,m]^T * B[k,n]
void matmul_tn(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n,
               Exec ex = default_exec());
/// C[m,n] += A[m,k] * B[k,n]
void matmul_nn_acc(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n,
                   Exec ex = default_exec());
/// C[m,n] += A[m,k] * B[n,k]^T
void matmul_nt_acc(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n,
                   Exec ex = default_exec());
/// C[m,n] += A[k,m]^T * B[k,n]
void matmul_tn_acc(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n,
                   Exec ex = default_exec());

/// Batched variants over leading dimension b: C[i] = op(A[i], B[i]).
void bmm_nn(const double* A, const double* B, double* C, int64_t b, int64_t m, int64_t k,
            int64_t n, Exec ex = default_exec());
void bmm_nt(const double* A, const double* B, double* C, int64_t b, int64_t m, int64_t k,
            int64_t n, Exec ex = default_exec());
void bmm_tn_acc(const double* A, const double* B, double* C, int64_t b, int64_t m, int64_t k,
                int64_t n, Exec ex = default_exec());
void bmm_nt_acc(const double* A, const double* B, double* C, int64_t b, int64_t m, int64_t k,
                int64_t n, Exec ex = default_exec());
void bmm_nn_acc(const double* A, const double* B, double* C, int64_t b, int64_t m, int64_t k,
                int64_t n, Exec ex = default_exec());

// ---- elementwise / rows ----

void add_bias(double* Y, const double* b, int64_t rows, int64_t cols, Exec ex = default_exec());
/// db[j] += sum_i dY[i,j]
void bias_grad_acc(const double* dY, double* db, int64_t rows, int64_t cols,
                   Exec ex = default_exec());

void ew_add(const double* a, const double* b, double* out, int64_t n, Exec ex = default_exec());
void ew_sub(const double* a, const double* b, double* out, int64_t n, Exec ex = default_exec());
void ew_mul(const double* a, const double* b, double* out, int64_t n, Exec ex = default_exec());
void ew_scale(const double* a, double s, double* out, int64_t n, Exec ex = default_exec());
/// out += s * a
void ew_axpy_acc(const double* a, double s, double* out, int64_t n, Exec ex = default_exec());

/// Row-wise softmax of X[rows,cols] into Y (numerically shifted by row max).
void softmax_rows(const double* X, double* Y, int64_t rows, int64_t cols,
                  Exec ex = default_exec());
/// dX += (dY - rowdot(dY,Y)) * Y, given Y = softmax_rows(X).
void softmax_rows_grad_acc(const double* Y, const double* dY, double* dX, int64_t rows,
                           int64_t cols, Exec ex = default_exec());

/// Row-wise layer norm (no affine): Y = (X - mean) * rstd per row; saves
/// mean/rstd for the backward pass.
void layernorm_rows(const double* X, double* Y, double* mean, double* rstd, int64_t rows,
                    int64_t cols, double eps, Exec ex = default_exec());
void layernorm_rows_grad_acc(const double* X, const double* dY, const double* mean,
                             const double* rstd, double* dX, int64_t rows, int64_t cols,
                             Exec ex = default_exec());

/// Exact GELU (erf form) and its derivative.
void gelu(const double* x, double* y, int64_t n, Exec ex = default_exec());
void gelu_grad_acc(const double* x, const double* dy, double* dx, int64_t n,
                   Exec ex = default_exec());
void tanh_fwd(const double* x, double* y, int64_t n, Exec ex = default_exec());
/// dx += dy * (1 - y^2) with y = tanh(x).
void tanh_grad_acc(const double* y, const double* dy, double* dx, int64_t n,
                   Exec ex = default_exec());

// ---- convolution (channels-last, zero padding) ----

/// x[B,H,W,Cin] -> cols[B*Ho*Wo, kh*kw*Cin] with output size Ho=(H+2p-kh)/s+1.
void im2col(const double* x, double* cols, int64_t B, int64_t H, int64_t W, int64_t C, int64_t kh,
            int64_t kw, int64_t stride, int64_t pad, Exec ex = default_exec());
/// Adjoint of im2col: dx[B,H,W,C] += scatter(cols). Written as a gather over
/// input pixels so it is deterministic under parallel execution.
void col2im_acc(const double* cols, double* dx, int64_t B, int64_t H, int64_t W, int64_t C,
                int64_t kh, int64_t kw, int64_t stride, int64_t pad, Exec ex = default_exec());

/// Nearest-neighbour 2x upsample, x[B,H,W,C] -> y[B,2H,2W,C], and adjoint.
void upsample2x(const double* x, double* y, int64_t B, int64_t H, int64_t W, int64_t C,
                Exec ex = default_exec());
void upsample2x_grad_acc(const double* dy, double* dx, int64_t B, int64_t H, int64_t W, int64_t C,
                         Exec ex = default_exec());

/// 3-D convolution forward (used by the video feature extractor; no backward).
/// x[F,H,W,Cin], w[kf,kh,kw,Cin,Cout], strides (sf,sh,sw), zero padding
/// (pf,ph,pw). y[Fo,Ho,Wo,Cout].
void conv3d(const double* x, const double* w, const double* bias, double* y, int64_t F, int64_t H,
            int64_t W, int64_t Cin, int64_t Cout, int64_t kf, int64_t kh, int64_t kw, int64_t sf,
            int64_t sh, int64_t sw, int64_t pf, int64_t ph, int64_t pw, Exec ex = default_exec());

}  // namespace vdt::kernels
