#include "vdt/linalg.hpp"

#include <cmath>

namespace vdt::linalg {

Tensor inverse(const Tensor& a) {
    if (a.ndim() != 2 || a.dim(0) != a.dim(1)) throw DimError("inverse: square matrix expected");
    const int64_t n = a.dim(0);
    Tensor m = a;
    Tensor inv({n, n});
    for (int64_t i = 0; i < n; ++i) inv.at(i, i) = 1.0;
    for (int64_t col = 0; col < n; ++col) {
        int64_t piv = col;
        double best = std::fabs(m.at(col, col));
        for (int64_t r = col + 1; r < n; ++r)
            if (std::fabs(m.at(r, col)) > best) {
                best = std::fabs(m.at(r, col));
                piv = r;
            }
        if (best < 1e-14) throw NumericError("inverse: singular matrix");
        if (piv != col)
            for (int64_t c = 0; c < n; ++c) {
                std::swap(m.at(piv, c), m.at(col, c));
                std::swap(inv.at(piv, c), inv.at(col, c));
            }
        const double d = 1.0 / m.at(col, col);
        for (int64_t c = 0; c < n; ++c) {
            m.at(col, c) *= d;
            inv.at(col, c) *= d;
        }
        for (int64_t r = 0; r < n; ++r) {
            if (r == col) continue;
            const double f = m.at(r, col);
            if (f == 0.0) continue;
            for (int64_t c = 0; c < n; ++c) {
                m.at(r, c) -= f * m.at(col, c);
                inv.at(r, c) -= f * inv.at(col, c);
            }
        }
    }
    return inv;
}

SymEig sym_eig(const Tensor& a, int max_sweeps, double tol) {
    if (a.ndim() != 2 || a.dim(0) != a.dim(1)) throw DimError("sym_eig: square matrix expected");
    const int64_t n = a.dim(0);
    Tensor m = a;
    // enforce symmetry
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = i + 1; j < n; ++j) {
            const double v = 0.5 * (m.at(i, j) + m.at(j, i));
            m.at(i, j) = v;
            m.at(j, i) = v;
        }
    Tensor V({n, n});
    for (int64_t i = 0; i < n; ++i) V.at(i, i) = 1.0;

    double scale = 0.0;
    for (int64_t i = 0; i < n * n; ++i) scale = std::max(scale, std::fabs(m[i]));
    if (scale == 0.0) scale = 1.0;

    bool converged = false;
    for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
        double off = 0.0;
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = i + 1; j < n; ++j) off += m.at(i, j) * m.at(i, j);
        if (std::sqrt(off) <= tol * scale * static_cast<double>(n)) {
            converged = true;
            break;
        }
        for (int64_t p = 0; p < n - 1; ++p)
            for (int64_t q = p + 1; q < n; ++q) {
                const double apq = m.at(p, q);
                if (std::fabs(apq) <= 1e-300) continue;
                const double app = m.at(p, p), aqq = m.at(q, q);
                const double theta = 0.5 * (aqq - app) / apq;
                const double t_val =
                    (theta >= 0 ? 1.0 : -1.0) /
                    (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t_val * t_val + 1.0);
                const double s = t_val * c;
                for (int64_t k = 0; k < n; ++k) {
                    const double mkp = m.at(k, p), mkq = m.at(k, q);
                    m.at(k, p) = c * mkp - s * mkq;
                    m.at(k, q) = s * mkp + c * mkq;
                }
                for (int64_t k = 0; k < n; ++k) {
                    const double mpk = m.at(p, k), mqk = m.at(q, k);
                    m.at(p, k) = c * mpk - s * mqk;
                    m.at(q, k) = s * mpk + c * mqk;
                }
                for (int64_t k = 0; k < n; ++k) {
                    const double vkp = V.at(k, p), vkq = V.at(k, q);
                    V.at(k, p) = c * vkp - s * vkq;
                    V.at(k, q) = s * vkp + c * vkq;
                }
            }
    }
    if (!converged) {
        // final residual check
        double off = 0.0;
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = i + 1; j < n; ++j) off += m.at(i, j) * m.at(i, j);
        if (std::sqrt(off) > 1e-8 * scale * static_cast<double>(n))
            throw NumericError("sym_eig: Jacobi iteration did not converge");
    }
    // sort ascending
    std::vector<int64_t> idx(n);
    for (int64_t i = 0; i < n; ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(),
              [&](int64_t x, int64_t y) { return m.at(x, x) < m.at(y, y); });
    SymEig out;
    out.values = Tensor({n});
    out.vectors = Tensor({n, n});
    for (int64_t r = 0; r < n; ++r) {
        out.values[r] = m.at(idx[r], idx[r]);
        for (int64_t k = 0; k < n; ++k) out.vectors.at(k, r) = V.at(k, idx[r]);
    }
    return out;
}

Tensor sym_sqrt(const Tensor& a) {
    SymEig e = sym_eig(a);
    const int64_t n = a.dim(0);
    Tensor out({n, n});
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (int64_t k = 0; k < n; ++k) {
                const double lam = e.values[k];
                if (lam <= 0.0) continue;
                s += e.vectors.at(i, k) * std::sqrt(lam) * e.vectors.at(j, k);
            }
            out.at(i, j) = s;
        }
    return out;
}

}  // namespace vdt::linalg
