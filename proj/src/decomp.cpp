#include "cdg/decomp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "cdg/errors.hpp"

namespace cdg {

std::string to_string(DecompKind k) {
  switch (k) {
    case DecompKind::Sqrt: return "sqrt";
    case DecompKind::Sqrt2: return "sqrt2";
    case DecompKind::Cholesky: return "cholesky";
    case DecompKind::Eigen: return "eigen";
    case DecompKind::Eigen2: return "eigen2";
  }
  return "?";
}

DecompKind parse_decomp_kind(const std::string& name) {
  for (auto k : {DecompKind::Sqrt, DecompKind::Sqrt2, DecompKind::Cholesky, DecompKind::Eigen, DecompKind::Eigen2})
    if (to_string(k) == name) return k;
  throw ConfigError("unknown decomposition '" + name + "' (expected sqrt, sqrt2, cholesky, eigen or eigen2)");
}

bool needs_sigma(DecompKind k) { return k == DecompKind::Sqrt2 || k == DecompKind::Eigen2; }

double angle(const Vector& u, const Vector& v) {
  double nu = u.norm(), nv = v.norm();
  if (nu == 0.0 || nv == 0.0) throw DomainError("angle of a zero vector");
  return std::acos(std::clamp(u.dot(v) / (nu * nv), -1.0, 1.0));
}

namespace {

// Sign making the largest-magnitude entry positive (first index on ties).
double base_sign(const Vector& v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (std::abs(v[i]) > std::abs(v[best])) best = i;
  return v[best] < 0.0 ? -1.0 : 1.0;
}

void reorthonormalize(Matrix& v) {
  const Eigen::Index n = v.cols();
  Matrix gram = v.transpose() * v - Matrix::Identity(n, n);
  if (gram.cwiseAbs().maxCoeff() <= 1e-10) return;
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index k = 0; k < j; ++k) v.col(j) -= v.col(k).dot(v.col(j)) * v.col(k);
    v.col(j).normalize();
  }
}

struct Eig {
  Vector values;
  Matrix vectors;
};

Eig symmetric_eigen(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m);
  if (es.info() != Eigen::Success) throw MatrixError("eigen-decomposition failed");
  if (!(es.eigenvalues().minCoeff() > 0.0)) throw MatrixError("matrix is not positive definite");
  return {es.eigenvalues(), es.eigenvectors()};
}

Matrix sqrt_factor(const Matrix& m) {
  Eig e = symmetric_eigen(m);
  Matrix s = e.vectors * e.values.cwiseSqrt().asDiagonal() * e.vectors.transpose();
  return 0.5 * (s + s.transpose());
}

Matrix eigen_factor(const Matrix& m, EigenSortState* state, int tau) {
  if (state == nullptr) throw ParamError("eigen decomposition requires a sort state");
  Eig e = symmetric_eigen(m);
  SortedEigen s = eigen_sort_step(e.vectors, e.values, *state, tau);
  return s.vectors * s.values.cwiseSqrt().asDiagonal();
}

void check_input(const Matrix& r) {
  if (r.rows() != r.cols() || r.rows() == 0) throw MatrixError("correlation matrix must be square");
  if (!r.allFinite()) throw MatrixError("correlation matrix has non-finite entries");
  if ((r - r.transpose()).cwiseAbs().maxCoeff() > 1e-12) throw MatrixError("correlation matrix is not symmetric");
}

}  // namespace

SortedEigen eigen_sort_step(const Matrix& eigvecs, const Vector& eigvals, EigenSortState& state, int tau) {
  if (tau < 1) throw ParamError("eigen-sort window must be at least 1");
  const Eigen::Index n = eigvals.size();
  if (eigvecs.rows() != n || eigvecs.cols() != n) throw ParamError("eigenvector matrix has the wrong shape");

  // Canonical signs make the tie order independent of the solver's signs.
  Matrix canon = eigvecs;
  for (Eigen::Index j = 0; j < n; ++j) canon.col(j) *= base_sign(canon.col(j));

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    if (eigvals[a] != eigvals[b]) return eigvals[a] > eigvals[b];
    for (Eigen::Index i = 0; i < n; ++i)
      if (canon(i, a) != canon(i, b)) return canon(i, a) > canon(i, b);
    return false;
  });

  SortedEigen out{Matrix(n, n), Vector(n)};
  for (Eigen::Index j = 0; j < n; ++j) {
    out.vectors.col(j) = canon.col(order[static_cast<std::size_t>(j)]);
    out.values[j] = eigvals[order[static_cast<std::size_t>(j)]];
  }
  reorthonormalize(out.vectors);

  if (!state.history.empty()) {
    for (Eigen::Index j = 0; j < n; ++j) {
      Vector v = out.vectors.col(j);
      Vector w = -v;
      double keep = 0.0, flip = 0.0;
      for (const Matrix& past : state.history) {
        Vector p = past.col(j);
        double a = angle(v, p), b = angle(w, p);
        keep += a * a;
        flip += b * b;
      }
      // On an exact tie the canonical sign stays.
      if (flip < keep) out.vectors.col(j) = w;
    }
  }

  state.history.push_back(out.vectors);
  while (static_cast<int>(state.history.size()) > tau) state.history.pop_front();
  return out;
}

Matrix decompose(const DecompMethod& method, const Matrix& r, std::span<const double> sigma, EigenSortState* state) {
  check_input(r);
  const Eigen::Index n = r.rows();
  Vector s;
  if (needs_sigma(method.kind)) {
    if (static_cast<Eigen::Index>(sigma.size()) != n) throw ParamError("decomposition needs one volatility per asset");
    s = Eigen::Map<const Vector>(sigma.data(), n);
    if (!(s.minCoeff() > 0.0)) throw ParamError("volatilities must be positive");
  }
  switch (method.kind) {
    case DecompKind::Sqrt: return sqrt_factor(r);
    case DecompKind::Cholesky: {
      Eigen::LLT<Matrix> llt(r);
      if (llt.info() != Eigen::Success) throw MatrixError("matrix is not positive definite");
      return llt.matrixL();
    }
    case DecompKind::Eigen: return eigen_factor(r, state, method.tau);
    case DecompKind::Sqrt2: {
      Matrix h = s.asDiagonal() * r * s.asDiagonal();
      return s.cwiseInverse().asDiagonal() * sqrt_factor(h);
    }
    case DecompKind::Eigen2: {
      Matrix h = s.asDiagonal() * r * s.asDiagonal();
      return s.cwiseInverse().asDiagonal() * eigen_factor(h, state, method.tau);
    }
  }
  throw ParamError("unknown decomposition");
}

}  // namespace cdg
