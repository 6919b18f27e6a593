#include "elastic/linalg.hpp"

#include "elastic/errors.hpp"

#include <algorithm>
#include <cmath>

namespace elastic::linalg {

Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

Matrix sym_sqrt(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(m));
  Vector ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return symmetrize(es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose());
}

Matrix sym_inv_sqrt(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(m));
  const Vector& ev = es.eigenvalues();
  const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
  if (ev.minCoeff() <= 1e-14 * scale) {
    throw SingularInformation("matrix is not positive definite; inverse square root undefined");
  }
  Vector inv = ev.cwiseSqrt().cwiseInverse();
  return symmetrize(es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose());
}

namespace {

Eigen::LLT<Matrix> checked_llt(const Matrix& s) {
  Eigen::LLT<Matrix> llt(symmetrize(s));
  if (llt.info() != Eigen::Success) {
    throw SingularInformation("matrix is not numerically positive definite");
  }
  // LLT succeeds on some badly conditioned inputs; reject a collapsed pivot.
  const Vector d = llt.matrixL().toDenseMatrix().diagonal();
  const double dmax = d.cwiseAbs().maxCoeff();
  if (!(dmax > 0.0) || d.cwiseAbs().minCoeff() <= 1e-10 * dmax) {
    throw SingularInformation("matrix is numerically singular (condition number exceeds 1e20)");
  }
  return llt;
}

}  // namespace

Vector spd_solve(const Matrix& s, const Vector& b) { return checked_llt(s).solve(b); }

Matrix spd_solve(const Matrix& s, const Matrix& b) { return checked_llt(s).solve(b); }

Matrix spd_inverse(const Matrix& s) {
  return symmetrize(checked_llt(s).solve(Matrix::Identity(s.rows(), s.cols())));
}

Vector general_solve(const Matrix& a, const Vector& b) {
  Eigen::FullPivLU<Matrix> lu(a);
  lu.setThreshold(1e-12);
  if (!lu.isInvertible()) {
    throw SingularInformation("Jacobian is numerically singular");
  }
  return lu.solve(b);
}

Matrix general_inverse(const Matrix& a) {
  Eigen::FullPivLU<Matrix> lu(a);
  lu.setThreshold(1e-12);
  if (!lu.isInvertible()) {
    throw SingularInformation("matrix is numerically singular");
  }
  return lu.inverse();
}

bool is_psd(const Matrix& m, double tol) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(m), Eigen::EigenvaluesOnly);
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  return es.eigenvalues().minCoeff() >= -tol * scale;
}

double inverse_quadratic_form(const Matrix& s, const Vector& x) {
  const Vector y = spd_solve(s, x);
  return x.dot(y);
}

}  // namespace elastic::linalg
