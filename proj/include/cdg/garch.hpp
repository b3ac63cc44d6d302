#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cdg/rng.hpp"
#include "cdg/types.hpp"

namespace cdg {

/// GARCH(1,1): sigma_t^2 = omega + alpha r_{t-1}^2 + beta sigma_{t-1}^2.
struct GarchParams {
  double omega = 1e-6;
  double alpha = 0.05;
  double beta = 0.9;
  double sigma0 = 1e-3;  // volatility of the first observation
};

/// Throws ParamError unless omega > 0, alpha, beta >= 0, alpha + beta < 1, sigma0 > 0.
void validate(const GarchParams& p);

/// sqrt(omega / (1 - alpha - beta)).
double unconditional_sigma(const GarchParams& p);

struct VolPath {
  Vector sigma;
  Vector xi;  // r / sigma
};

/// sigma_1 = sigma0; the recursion starts at the second observation.
VolPath filter_variance(const GarchParams& p, const Vector& r);

/// Gaussian quasi-log-likelihood of one return series.
double ll_v(const GarchParams& p, const Vector& r);

/// Sum over assets; column i of `returns` uses params[i].
double ll_v(const std::vector<GarchParams>& params, const Matrix& returns);

struct FitReport {
  bool converged = false;
  int iterations = 0;
  int evaluations = 0;
  double loglik = 0.0;
  std::string message;
};

struct GarchFit {
  GarchParams params;
  FitReport report;
};

/// Quasi-maximum-likelihood fit. With `constrain_sigma0` the initial
/// volatility is tied to the unconditional level, otherwise it is a free
/// parameter. Throws FitError on degenerate data or non-convergence.
GarchFit fit_garch(const Vector& r, bool constrain_sigma0 = true);

struct GarchSimulation {
  Vector returns;
  Vector sigma;
};

using ScalarSampler = std::function<double(Rng&)>;

/// r_t = sigma_t xi_t with xi_t drawn from `sampler` on the stream of `seed`.
GarchSimulation simulate_garch(const GarchParams& p, std::size_t T, const ScalarSampler& sampler,
                               std::uint64_t seed);

}  // namespace cdg
