#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "vdt/kernels.hpp"
#include "vdt/rng.hpp"
#include "vdt/tensor.hpp"

using namespace vdt;
namespace k = vdt::kernels;

namespace {

Tensor random_tensor(std::vector<int64_t> shape, uint64_t seed) {
    Tensor t(std::move(shape));
    Rng rng(seed);
    rng.fill_normal(t.data(), t.numel());
    return t;
}

// textbook triple loop, the independent oracle for all matmul variants
Tensor naive_mm(const Tensor& A, const Tensor& B, bool ta, bool tb) {
    const int64_t m = ta ? A.dim(1) : A.dim(0);
    const int64_t kk = ta ? A.dim(0) : A.dim(1);
    const int64_t n = tb ? B.dim(0) : B.dim(1);
    Tensor C({m, n});
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (int64_t l = 0; l < kk; ++l) {
                const double a = ta ? A.at(l, i) : A.at(i, l);
                const double b = tb ? B.at(j, l) : B.at(l, j);
                s += a * b;
            }
            C.at(i, j) = s;
        }
    return C;
}

}  // namespace

TEST_CASE("matmul variants match the naive oracle") {
    Tensor A = random_tensor({7, 5}, 1);
    Tensor B = random_tensor({5, 9}, 2);
    Tensor At = random_tensor({5, 7}, 3);
    Tensor Bt = random_tensor({9, 5}, 4);

    Tensor C({7, 9});
    k::matmul_nn(A.data(), B.data(), C.data(), 7, 5, 9);
    CHECK(max_abs_diff(C, naive_mm(A, B, false, false)) < 1e-12);

    k::matmul_nt(A.data(), Bt.data(), C.data(), 7, 5, 9);
    CHECK(max_abs_diff(C, naive_mm(A, Bt, false, true)) < 1e-12);

    k::matmul_tn(At.data(), B.data(), C.data(), 7, 5, 9);
    CHECK(max_abs_diff(C, naive_mm(At, B, true, false)) < 1e-12);
}

TEST_CASE("serial and parallel kernels are bit-identical") {
    Tensor A = random_tensor({33, 17}, 5);
    Tensor B = random_tensor({17, 21}, 6);
    Tensor Cs({33, 21}), Cp({33, 21});
    k::matmul_nn(A.data(), B.data(), Cs.data(), 33, 17, 21, k::Exec::Serial);
    k::matmul_nn(A.data(), B.data(), Cp.data(), 33, 17, 21, k::Exec::Parallel);
    CHECK(max_abs_diff(Cs, Cp) == 0.0);

    Tensor X = random_tensor({19, 13}, 7);
    Tensor Ys({19, 13}), Yp({19, 13});
    k::softmax_rows(X.data(), Ys.data(), 19, 13, k::Exec::Serial);
    k::softmax_rows(X.data(), Yp.data(), 19, 13, k::Exec::Parallel);
    CHECK(max_abs_diff(Ys, Yp) == 0.0);

    Tensor mean_s({19}), rstd_s({19}), mean_p({19}), rstd_p({19});
    Tensor Ls({19, 13}), Lp({19, 13});
    k::layernorm_rows(X.data(), Ls.data(), mean_s.data(), rstd_s.data(), 19, 13, 1e-6,
                      k::Exec::Serial);
    k::layernorm_rows(X.data(), Lp.data(), mean_p.data(), rstd_p.data(), 19, 13, 1e-6,
                      k::Exec::Parallel);
    CHECK(max_abs_diff(Ls, Lp) == 0.0);
}

TEST_CASE("softmax rows sum to one") {
    Tensor X = random_tensor({40, 23}, 8);
    Tensor Y({40, 23});
    k::softmax_rows(X.data(), Y.data(), 40, 23);
    for (int64_t i = 0; i < 40; ++i) {
        double s = 0.0;
        for (int64_t j = 0; j < 23; ++j) s += Y.at(i, j);
        CHECK(std::fabs(s - 1.0) < 1e-12);
    }
}

TEST_CASE("layernorm rows have zero mean and unit variance") {
    Tensor X = random_tensor({11, 64}, 9);
    Tensor Y({11, 64}), mean({11}), rstd({11});
    k::layernorm_rows(X.data(), Y.data(), mean.data(), rstd.data(), 11, 64, 1e-10);
    for (int64_t i = 0; i < 11; ++i) {
        double mu = 0.0, var = 0.0;
        for (int64_t j = 0; j < 64; ++j) mu += Y.at(i, j);
        mu /= 64.0;
        for (int64_t j = 0; j < 64; ++j) var += (Y.at(i, j) - mu) * (Y.at(i, j) - mu);
        var /= 64.0;
        CHECK(std::fabs(mu) < 1e-12);
        CHECK(std::fabs(var - 1.0) < 1e-6);
    }
}

TEST_CASE("im2col/col2im adjoint identity <cols, im2col(x)> == <col2im(cols), x>") {
    const int64_t B = 2, H = 6, W = 5, C = 3, kh = 3, kw = 3, stride = 2, pad = 1;
    const int64_t Ho = (H + 2 * pad - kh) / stride + 1;
    const int64_t Wo = (W + 2 * pad - kw) / stride + 1;
    Tensor x = random_tensor({B, H, W, C}, 10);
    Tensor cols({B * Ho * Wo, kh * kw * C});
    k::im2col(x.data(), cols.data(), B, H, W, C, kh, kw, stride, pad);
    Tensor u = random_tensor({B * Ho * Wo, kh * kw * C}, 11);
    Tensor back({B, H, W, C});
    k::col2im_acc(u.data(), back.data(), B, H, W, C, kh, kw, stride, pad);
    double lhs = 0.0, rhs = 0.0;
    for (int64_t i = 0; i < cols.numel(); ++i) lhs += cols[i] * u[i];
    for (int64_t i = 0; i < x.numel(); ++i) rhs += back[i] * x[i];
    CHECK(std::fabs(lhs - rhs) < 1e-9);
}

TEST_CASE("conv3d matches direct summation on a tiny case") {
    const int64_t F = 3, H = 4, W = 4, Cin = 2, Cout = 3;
    Tensor x = random_tensor({F, H, W, Cin}, 12);
    Tensor w = random_tensor({3, 3, 3, Cin, Cout}, 13);
    Tensor bias = random_tensor({Cout}, 14);
    Tensor y({F, H, W, Cout});
    k::conv3d(x.data(), w.data(), bias.data(), y.data(), F, H, W, Cin, Cout, 3, 3, 3, 1, 1, 1, 1,
              1, 1);
    // check one output element against an explicit sum
    const int64_t of = 1, oy = 2, ox = 1, oc = 2;
    double s = bias[oc];
    for (int64_t tf = 0; tf < 3; ++tf)
        for (int64_t ty = 0; ty < 3; ++ty)
            for (int64_t tx = 0; tx < 3; ++tx) {
                const int64_t ifr = of - 1 + tf, iy = oy - 1 + ty, ix = ox - 1 + tx;
                if (ifr < 0 || ifr >= F || iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                for (int64_t ci = 0; ci < Cin; ++ci)
                    s += x.at(ifr, iy, ix, ci) * w.at(tf, ty, tx, ci, oc);
            }
    CHECK(std::fabs(y.at(of, oy, ox, oc) - s) < 1e-12);
}

TEST_CASE("gelu matches erf closed form and tanh backward uses 1-y^2") {
    Tensor x = random_tensor({100}, 15);
    Tensor y({100});
    k::gelu(x.data(), y.data(), 100);
    for (int64_t i = 0; i < 100; ++i) {
        const double ref = 0.5 * x[i] * (1.0 + std::erf(x[i] / std::sqrt(2.0)));
        CHECK(std::fabs(y[i] - ref) < 1e-14);
    }
    Tensor ty({100});
    k::tanh_fwd(x.data(), ty.data(), 100);
    Tensor dy = random_tensor({100}, 16), dx({100});
    k::tanh_grad_acc(ty.data(), dy.data(), dx.data(), 100);
    for (int64_t i = 0; i < 100; ++i)
        CHECK(std::fabs(dx[i] - dy[i] * (1.0 - ty[i] * ty[i])) < 1e-14);
}
