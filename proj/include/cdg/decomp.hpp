#pragma once

#include <deque>
#include <span>
#include <string>

#include "cdg/types.hpp"

namespace cdg {

/// Factorizations Xi with Xi Xi' = R.
///
///   Sqrt      symmetric square root V sqrt(D) V'
///   Sqrt2     diag(sigma)^-1 sqrt(H), H = diag(sigma) R diag(sigma)
///   Cholesky  lower triangular, positive diagonal
///   Eigen     V* sqrt(D*), eigenvectors sorted and signed over time
///   Eigen2    diag(sigma)^-1 times the Eigen factor of H
enum class DecompKind { Sqrt, Sqrt2, Cholesky, Eigen, Eigen2 };

struct DecompMethod {
  DecompKind kind = DecompKind::Cholesky;
  int tau = 50;  // eigen-sort window
};

std::string to_string(DecompKind k);
DecompKind parse_decomp_kind(const std::string& name);

/// True for the covariance-based variants, which need the volatilities.
bool needs_sigma(DecompKind k);

/// Signed eigenvectors of the most recent periods, newest last.
struct EigenSortState {
  std::deque<Matrix> history;
  void clear() { history.clear(); }
};

struct SortedEigen {
  Matrix vectors;  // columns in descending eigenvalue order, signs fixed
  Vector values;
};

/// Orders an eigen-decomposition by descending eigenvalue and chooses each
/// column's sign to minimize the summed squared angles to the stored signed
/// vectors of up to `tau` previous periods; appends the result to `state`.
/// Without history, each column's largest-magnitude entry is made positive.
SortedEigen eigen_sort_step(const Matrix& eigvecs, const Vector& eigvals, EigenSortState& state, int tau);

/// Angle between two nonzero vectors, in [0, pi].
double angle(const Vector& u, const Vector& v);

/// Xi for one period. `sigma` is required by Sqrt2 and Eigen2, and `state`
/// by Eigen and Eigen2. Throws MatrixError when R is not positive definite.
Matrix decompose(const DecompMethod& method, const Matrix& r, std::span<const double> sigma = {},
                 EigenSortState* state = nullptr);

/// Threads the eigen-sort state through a sequence of periods.
class Decomposer {
 public:
  explicit Decomposer(DecompMethod method) : method_(method) {}

  Matrix next(const Matrix& r, std::span<const double> sigma = {}) {
    return decompose(method_, r, sigma, &state_);
  }
  const DecompMethod& method() const { return method_; }
  const EigenSortState& state() const { return state_; }

 private:
  DecompMethod method_;
  EigenSortState state_;
};

}  // namespace cdg
