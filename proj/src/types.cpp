#include "cdg/types.hpp"

#include <cmath>

#include "cdg/errors.hpp"

namespace cdg {

CorrMatrix::CorrMatrix(Matrix m) : m_(std::move(m)) {
  if (m_.rows() != m_.cols() || m_.rows() == 0)
    throw MatrixError("correlation matrix must be square and nonempty");
  if (!m_.allFinite()) throw MatrixError("correlation matrix has non-finite entries");
  if ((m_ - m_.transpose()).cwiseAbs().maxCoeff() > 1e-12)
    throw MatrixError("correlation matrix is not symmetric");
  for (Eigen::Index i = 0; i < m_.rows(); ++i) {
    if (std::abs(m_(i, i) - 1.0) > 1e-12) throw MatrixError("correlation matrix diagonal must be 1");
    m_(i, i) = 1.0;
  }
  m_ = 0.5 * (m_ + m_.transpose()).eval();
  Eigen::LLT<Matrix> llt(m_);
  if (llt.info() != Eigen::Success) throw MatrixError("correlation matrix is not positive definite");
  chol_ = llt.matrixL();
  log_det_ = 2.0 * chol_.diagonal().array().log().sum();
  if (!std::isfinite(log_det_) || chol_.diagonal().minCoeff() <= 0.0)
    throw MatrixError("correlation matrix is not positive definite");
}

CorrMatrix CorrMatrix::identity(Eigen::Index n) { return CorrMatrix(Matrix::Identity(n, n)); }

Matrix cov_to_corr(const Matrix& cov) {
  Vector d = cov.diagonal().cwiseSqrt().cwiseInverse();
  Matrix r = d.asDiagonal() * cov * d.asDiagonal();
  r = 0.5 * (r + r.transpose()).eval();
  r.diagonal().setOnes();
  return r;
}

}  // namespace cdg
