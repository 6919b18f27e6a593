#pragma once

#include <Eigen/Dense>

namespace elastic {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

namespace linalg {

/// (M + M^T) / 2.
Matrix symmetrize(const Matrix& m);

/// Symmetric square root via eigendecomposition; negative eigenvalues are
/// clipped at zero before taking roots.
Matrix sym_sqrt(const Matrix& m);

/// Symmetric inverse square root. Throws SingularInformation when the
/// smallest eigenvalue is not positive.
Matrix sym_inv_sqrt(const Matrix& m);

/// Solve S x = b for symmetric positive definite S through a Cholesky
/// factorization. Throws SingularInformation if S is not numerically SPD.
Vector spd_solve(const Matrix& s, const Vector& b);
Matrix spd_solve(const Matrix& s, const Matrix& b);

/// Inverse of an SPD matrix through its Cholesky factor, symmetrized.
Matrix spd_inverse(const Matrix& s);

/// Solve a general square system with a rank-revealing LU. Throws
/// SingularInformation when the matrix is numerically singular.
Vector general_solve(const Matrix& a, const Vector& b);
Matrix general_inverse(const Matrix& a);

/// True when the smallest eigenvalue of sym(M) is >= -tol * max(1, |M|).
bool is_psd(const Matrix& m, double tol = 1e-10);

/// Quadratic form x^T S^{-1} x via Cholesky.
double inverse_quadratic_form(const Matrix& s, const Vector& x);

}  // namespace linalg
}  // namespace elastic
