#pragma once

#include "vdt/tensor.hpp"

namespace vdt::linalg {

/// Inverse of a square matrix by Gauss-Jordan with partial pivoting.
Tensor inverse(const Tensor& a);

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues (ascending) and the matrix V whose COLUMNS are the
/// eigenvectors: A = V diag(w) V^T.
struct SymEig {
    Tensor values;   // [n]
    Tensor vectors;  // [n,n]
};
SymEig sym_eig(const Tensor& a, int max_sweeps = 64, double tol = 1e-12);

/// Symmetric PSD square root via eigendecomposition (negative eigenvalues
/// clipped at zero).
Tensor sym_sqrt(const Tensor& a);

}  // namespace vdt::linalg
