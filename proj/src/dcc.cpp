#include "cdg/dcc.hpp"

#include <array>
#include <cmath>

#include "cdg/errors.hpp"
#include "cdg/optim.hpp"

namespace cdg {

namespace {

constexpr double kPersistenceCap = 1.0 - 1e-6;

Matrix normalize(const Matrix& q) {
  Vector d = q.diagonal().cwiseSqrt().cwiseInverse();
  Matrix r = d.asDiagonal() * q * d.asDiagonal();
  r.diagonal().setOnes();
  return r;
}

template <class Visit>
void run_filter(double a, double b, const Matrix& q_bar, const Matrix& q0, const Matrix& xi, Visit&& visit) {
  Matrix q = q0;
  const Matrix base = (1.0 - a - b) * q_bar;
  for (Eigen::Index t = 0; t < xi.rows(); ++t) {
    if (t > 0) {
      Vector e = xi.row(t - 1).transpose();
      q = base + a * (e * e.transpose()) + b * q;
    }
    visit(t, q);
  }
}

// Contribution of one period; NaN when R is not positive definite.
double ll_term(const Matrix& q, const Eigen::Ref<const Vector>& x) {
  Matrix r = normalize(q);
  Eigen::LLT<Matrix> llt(r);
  if (llt.info() != Eigen::Success) return std::numeric_limits<double>::quiet_NaN();
  Vector w = llt.matrixL().solve(x);
  double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return -0.5 * (log_det + w.squaredNorm() - x.squaredNorm());
}

}  // namespace

void validate(const DccParams& p) {
  if (!(p.a >= 0.0) || !(p.b >= 0.0)) throw ParamError("DCC a and b must be nonnegative");
  if (!(p.a + p.b < 1.0)) throw ParamError("DCC a + b must be below 1");
  if (p.q_bar.dim() == 0 || p.q_bar.dim() != p.q0.dim()) throw ParamError("DCC Qbar and Q0 dimensions differ");
}

CorrPath filter_dcc(const DccParams& p, const Matrix& xi) {
  validate(p);
  if (xi.cols() != p.q_bar.dim()) throw ParamError("DCC residual dimension does not match Qbar");
  CorrPath path;
  path.q.reserve(static_cast<std::size_t>(xi.rows()));
  path.r.reserve(static_cast<std::size_t>(xi.rows()));
  run_filter(p.a, p.b, p.q_bar.matrix(), p.q0.matrix(), xi, [&](Eigen::Index, const Matrix& q) {
    path.q.push_back(q);
    path.r.push_back(normalize(q));
  });
  return path;
}

double ll_c(const DccParams& p, const Matrix& xi) {
  validate(p);
  double total = 0.0;
  run_filter(p.a, p.b, p.q_bar.matrix(), p.q0.matrix(), xi, [&](Eigen::Index t, const Matrix& q) {
    double v = ll_term(q, xi.row(t).transpose());
    if (!std::isfinite(v)) throw MatrixError("singular correlation matrix at t=" + std::to_string(t));
    total += v;
  });
  return total;
}

Matrix dcc_target(const Matrix& xi) {
  return cov_to_corr(xi.transpose() * xi / static_cast<double>(xi.rows()));
}

DccFit fit_dcc(const Matrix& xi) {
  if (xi.rows() < 100) throw FitError("DCC fit needs at least 100 observations");
  if (xi.cols() < 2) throw FitError("DCC fit needs at least two assets");
  if (!xi.allFinite()) throw FitError("DCC fit received non-finite residuals");
  if (!((xi.colwise().squaredNorm().array() > 0.0).all())) throw FitError("DCC fit on a zero-variance residual");

  CorrMatrix q_bar(dcc_target(xi));
  const Matrix& qb = q_bar.matrix();
  auto loglik = [&](double a, double b) {
    double total = 0.0;
    bool ok = true;
    run_filter(a, b, qb, qb, xi, [&](Eigen::Index t, const Matrix& q) {
      if (!ok) return;
      double v = ll_term(q, xi.row(t).transpose());
      if (!std::isfinite(v)) ok = false;
      total += v;
    });
    return ok ? total : std::numeric_limits<double>::quiet_NaN();
  };

  // Coarse grid for the starting point.
  static constexpr std::array<std::array<double, 2>, 6> grid{
      {{0.01, 0.97}, {0.02, 0.95}, {0.03, 0.90}, {0.05, 0.90}, {0.05, 0.80}, {0.10, 0.80}}};
  std::array<double, 2> best = grid[0];
  double best_ll = -std::numeric_limits<double>::infinity();
  for (const auto& g : grid) {
    double v = loglik(g[0], g[1]);
    if (std::isfinite(v) && v > best_ll) {
      best_ll = v;
      best = g;
    }
  }

  auto [z0, z1] = persistence_to(best[0], best[1], kPersistenceCap);
  Vector start(2);
  start << z0, z1;
  auto objective = [&](const Vector& z) {
    auto [a, b] = persistence_from(z[0], z[1], kPersistenceCap);
    return -loglik(a, b);
  };
  OptimResult res = nelder_mead(objective, start);
  auto [a, b] = persistence_from(res.x[0], res.x[1], kPersistenceCap);
  DccFit fit{DccParams{a, b, q_bar, q_bar}, {}};
  fit.report.converged = res.converged;
  fit.report.iterations = res.iterations;
  fit.report.evaluations = res.evaluations;
  fit.report.loglik = -res.value;
  if (!res.converged || !std::isfinite(res.value)) {
    throw FitError("DCC optimizer did not converge after " + std::to_string(res.iterations) + " iterations");
  }
  fit.report.message = "converged";
  return fit;
}

Matrix dcc_residuals(const CorrPath& path, const Matrix& xi, const DecompMethod& method, const Matrix* sigma) {
  if (path.r.size() != static_cast<std::size_t>(xi.rows())) throw ParamError("path length does not match residuals");
  if (needs_sigma(method.kind) && (sigma == nullptr || sigma->rows() != xi.rows() || sigma->cols() != xi.cols()))
    throw ParamError("decomposition '" + to_string(method.kind) + "' needs the volatility path");
  Decomposer dec(method);
  Matrix eps(xi.rows(), xi.cols());
  Vector s(xi.cols());
  for (Eigen::Index t = 0; t < xi.rows(); ++t) {
    if (sigma) s = sigma->row(t).transpose();
    Matrix f = dec.next(path.r[static_cast<std::size_t>(t)], std::span<const double>(s.data(), sigma ? s.size() : 0));
    Eigen::PartialPivLU<Matrix> lu(f);
    if (!(std::abs(lu.determinant()) > 0.0)) throw MatrixError("singular factor at t=" + std::to_string(t));
    eps.row(t) = lu.solve(Vector(xi.row(t).transpose())).transpose();
  }
  return eps;
}

DccSimulation simulate_dcc(const DccParams& p, std::size_t T, const VectorSampler& sampler, const DecompMethod& method,
                           std::uint64_t seed, const Matrix* sigma) {
  validate(p);
  const Eigen::Index n = p.q_bar.dim();
  const auto steps = static_cast<Eigen::Index>(T);
  if (sigma && (sigma->rows() != steps || sigma->cols() != n)) throw ParamError("volatility path has the wrong shape");
  Rng rng = make_rng(seed);
  Decomposer dec(method);
  DccSimulation sim{Matrix(steps, n), Matrix(steps, n), {}};
  Matrix q = p.q0.matrix();
  const Matrix base = (1.0 - p.a - p.b) * p.q_bar.matrix();
  Vector s = Vector::Ones(n);
  for (Eigen::Index t = 0; t < steps; ++t) {
    if (t > 0) {
      Vector e = sim.xi.row(t - 1).transpose();
      q = base + p.a * (e * e.transpose()) + p.b * q;
    }
    Matrix r = normalize(q);
    if (sigma) s = sigma->row(t).transpose();
    Vector eps = sampler(rng);
    sim.xi.row(t) = (dec.next(r, std::span<const double>(s.data(), s.size())) * eps).transpose();
    sim.eps.row(t) = eps.transpose();
    sim.path.q.push_back(q);
    sim.path.r.push_back(std::move(r));
  }
  return sim;
}

}  // namespace cdg
