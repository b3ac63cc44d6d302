#pragma once

#include <algorithm>
#include <cmath>
#include <utility>
#include <functional>

#include "cdg/types.hpp"

namespace cdg {

struct NelderMeadOptions {
  double initial_step = 0.5;  // simplex edge length in unconstrained space
  double ftol = 1e-10;        // relative spread of simplex values
  double xtol = 1e-8;         // simplex diameter
  int max_iter = 2000;
  int max_restarts = 3;
};

struct OptimResult {
  Vector x;
  double value = 0.0;  // objective at x (minimized)
  int iterations = 0;
  int evaluations = 0;
  int restarts = 0;
  bool converged = false;
};

using Objective = std::function<double(const Vector&)>;

/// Derivative-free simplex minimization. Non-finite objective values are
/// treated as +inf so callers can reject infeasible points by returning NaN.
/// After convergence the simplex is rebuilt around the best vertex and the
/// search restarted, until a restart no longer improves the value.
OptimResult nelder_mead(const Objective& f, const Vector& x0,
                        const NelderMeadOptions& opts = {});

struct QuasiNewtonOptions {
  double function_tolerance = 1e-10;  // relative change of the objective
  double gradient_tolerance = 1e-8;
  double parameter_tolerance = 1e-10;
  int max_iter = 500;
};

/// Writes f(x) and, when `gradient` is non-null, its gradient. Returning
/// false marks x infeasible.
using GradientObjective = std::function<bool(const Vector& x, double& value, Vector* gradient)>;

/// BFGS with a Wolfe line search (Ceres). `converged` is set when one of the
/// tolerances is met; an exhausted iteration budget leaves it false.
OptimResult quasi_newton(const GradientObjective& f, const Vector& x0,
                         const QuasiNewtonOptions& opts = {});

inline double logistic(double z) {
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

/// Maps z to (lo, hi).
inline double to_interval(double z, double lo, double hi) {
  return lo + (hi - lo) * logistic(z);
}

inline double from_interval(double x, double lo, double hi) {
  return logit((x - lo) / (hi - lo));
}

/// Two nonnegative coefficients with sum at most `cap`, as used by the
/// GARCH (alpha, beta) and DCC (a, b) pairs: the persistence p = a + b is
/// cap * logistic(z0) and the share of `a` is logistic(z1).
struct PersistencePair {
  double first;
  double second;
};

inline PersistencePair persistence_from(double z0, double z1, double cap) {
  double p = cap * logistic(z0);
  double a = p * logistic(z1);
  return {a, p - a};
}

inline std::pair<double, double> persistence_to(double a, double b, double cap) {
  double p = std::clamp(a + b, 1e-12, cap * (1.0 - 1e-12));
  double share = std::clamp(a / p, 1e-12, 1.0 - 1e-12);
  return {logit(p / cap), logit(share)};
}

}  // namespace cdg
