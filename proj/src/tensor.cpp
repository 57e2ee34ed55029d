#include "vdt/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace vdt {

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw DimError("max_abs_diff: shape mismatch");
    double m = 0.0;
    const double* pa = a.data();
    const double* pb = b.data();
    for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::fabs(pa[i] - pb[i]));
    return m;
}

double max_abs(const Tensor& a) {
    double m = 0.0;
    const double* p = a.data();
    for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::fabs(p[i]));
    return m;
}

}  // namespace vdt
