#include "cdg/garch.hpp"

#include <cmath>
#include <numbers>

#include "cdg/errors.hpp"
#include "cdg/optim.hpp"

namespace cdg {

namespace {

constexpr double kPersistenceCap = 1.0 - 1e-6;
constexpr double kLog2Pi = 1.8378770664093454836;

}  // namespace

void validate(const GarchParams& p) {
  if (!(p.omega > 0.0) || !std::isfinite(p.omega)) throw ParamError("GARCH omega must be positive");
  if (!(p.alpha >= 0.0) || !(p.beta >= 0.0)) throw ParamError("GARCH alpha and beta must be nonnegative");
  if (!(p.alpha + p.beta < 1.0)) throw ParamError("GARCH alpha + beta must be below 1");
  if (!(p.sigma0 > 0.0) || !std::isfinite(p.sigma0)) throw ParamError("GARCH sigma0 must be positive");
}

double unconditional_sigma(const GarchParams& p) {
  if (!(p.alpha + p.beta < 1.0)) throw ParamError("GARCH alpha + beta must be below 1");
  if (!(p.omega > 0.0)) throw ParamError("GARCH omega must be positive");
  return std::sqrt(p.omega / (1.0 - p.alpha - p.beta));
}

VolPath filter_variance(const GarchParams& p, const Vector& r) {
  validate(p);
  const Eigen::Index T = r.size();
  VolPath out{Vector(T), Vector(T)};
  double var = p.sigma0 * p.sigma0;
  for (Eigen::Index t = 0; t < T; ++t) {
    if (t > 0) var = p.omega + p.alpha * r[t - 1] * r[t - 1] + p.beta * var;
    out.sigma[t] = std::sqrt(var);
    out.xi[t] = r[t] / out.sigma[t];
  }
  return out;
}

namespace {

double ll_v_unchecked(const GarchParams& p, const Vector& r) {
  double var = p.sigma0 * p.sigma0, total = 0.0;
  for (Eigen::Index t = 0; t < r.size(); ++t) {
    if (t > 0) var = p.omega + p.alpha * r[t - 1] * r[t - 1] + p.beta * var;
    total += std::log(var) + r[t] * r[t] / var;
  }
  return -0.5 * (static_cast<double>(r.size()) * kLog2Pi + total);
}

}  // namespace

double ll_v(const GarchParams& p, const Vector& r) {
  validate(p);
  return ll_v_unchecked(p, r);
}

double ll_v(const std::vector<GarchParams>& params, const Matrix& returns) {
  if (params.size() != static_cast<std::size_t>(returns.cols()))
    throw ParamError("one GARCH parameter set per asset is required");
  double total = 0.0;
  for (Eigen::Index i = 0; i < returns.cols(); ++i)
    total += ll_v(params[static_cast<std::size_t>(i)], Vector(returns.col(i)));
  return total;
}

GarchFit fit_garch(const Vector& r, bool constrain_sigma0) {
  const Eigen::Index T = r.size();
  if (T < 50) throw FitError("GARCH fit needs at least 50 observations");
  if (!r.allFinite()) throw FitError("GARCH fit received non-finite returns");
  const double var = r.squaredNorm() / static_cast<double>(T);
  if (!(var > 0.0)) throw FitError("GARCH fit on a zero-variance series");

  auto decode = [&](const Vector& z) {
    auto [a, b] = persistence_from(z[1], z[2], kPersistenceCap);
    GarchParams p{std::exp(z[0]), a, b, 0.0};
    p.sigma0 = constrain_sigma0 ? std::sqrt(p.omega / (1.0 - a - b)) : std::exp(z[3]);
    return p;
  };

  const double a0 = 0.05, b0 = 0.90;
  Vector z0(constrain_sigma0 ? 3 : 4);
  auto [zp, zs] = persistence_to(a0, b0, kPersistenceCap);
  z0[0] = std::log(var * (1.0 - a0 - b0));
  z0[1] = zp;
  z0[2] = zs;
  if (!constrain_sigma0) z0[3] = 0.5 * std::log(var);

  auto objective = [&](const Vector& z) {
    GarchParams p = decode(z);
    if (!(p.omega > 0.0) || !std::isfinite(p.omega) || !(p.sigma0 > 0.0) || !std::isfinite(p.sigma0))
      return std::numeric_limits<double>::quiet_NaN();
    return -ll_v_unchecked(p, r);
  };

  OptimResult res = nelder_mead(objective, z0);
  GarchFit fit{decode(res.x), {}};
  fit.report.converged = res.converged;
  fit.report.iterations = res.iterations;
  fit.report.evaluations = res.evaluations;
  fit.report.loglik = -res.value;
  if (!res.converged || !std::isfinite(res.value)) {
    throw FitError("GARCH optimizer did not converge after " + std::to_string(res.iterations) +
                   " iterations (log-likelihood " + std::to_string(-res.value) + ")");
  }
  fit.report.message = "converged";
  return fit;
}

GarchSimulation simulate_garch(const GarchParams& p, std::size_t T, const ScalarSampler& sampler,
                               std::uint64_t seed) {
  validate(p);
  Rng rng = make_rng(seed);
  const auto n = static_cast<Eigen::Index>(T);
  GarchSimulation sim{Vector(n), Vector(n)};
  double var = p.sigma0 * p.sigma0;
  for (Eigen::Index t = 0; t < n; ++t) {
    if (t > 0) var = p.omega + p.alpha * sim.returns[t - 1] * sim.returns[t - 1] + p.beta * var;
    sim.sigma[t] = std::sqrt(var);
    sim.returns[t] = sim.sigma[t] * sampler(rng);
  }
  return sim;
}

}  // namespace cdg
