#pragma once

#include <Eigen/Dense>

namespace cdg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Symmetric positive-definite matrix with unit diagonal.
///
/// Construction validates symmetry (1e-12), unit diagonal and positive
/// definiteness and throws MatrixError otherwise.
class CorrMatrix {
 public:
  CorrMatrix() = default;
  explicit CorrMatrix(Matrix m);

  static CorrMatrix identity(Eigen::Index n);

  const Matrix& matrix() const { return m_; }
  Eigen::Index dim() const { return m_.rows(); }
  double operator()(Eigen::Index i, Eigen::Index j) const { return m_(i, j); }

  /// Lower Cholesky factor, cached at construction.
  const Matrix& cholesky() const { return chol_; }
  double log_det() const { return log_det_; }

 private:
  Matrix m_;
  Matrix chol_;
  double log_det_ = 0.0;
};

/// Rescales a covariance-like symmetric matrix to unit diagonal.
Matrix cov_to_corr(const Matrix& cov);

}  // namespace cdg
