#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "cdg/decomp.hpp"
#include "cdg/garch.hpp"
#include "cdg/rng.hpp"
#include "cdg/types.hpp"

namespace cdg {

/// Q_t = (1 - a - b) Qbar + a xi_{t-1} xi_{t-1}' + b Q_{t-1}, Q_1 = q0.
struct DccParams {
  double a = 0.0;
  double b = 0.0;
  CorrMatrix q_bar;
  CorrMatrix q0;
};

void validate(const DccParams& p);

struct CorrPath {
  std::vector<Matrix> q;
  std::vector<Matrix> r;  // Q_t rescaled to unit diagonal
};

CorrPath filter_dcc(const DccParams& p, const Matrix& xi);

/// -1/2 sum_t (log|R_t| + xi_t' R_t^-1 xi_t - xi_t' xi_t). Throws MatrixError on a singular R_t.
double ll_c(const DccParams& p, const Matrix& xi);

/// Second-moment matrix of xi rescaled to unit diagonal (the targeted Qbar).
Matrix dcc_target(const Matrix& xi);

struct DccFit {
  DccParams params;
  FitReport report;
};

/// Correlation-targeted fit of (a, b) with Q0 = Qbar. Throws FitError.
DccFit fit_dcc(const Matrix& xi);

/// eps_t = Xi_t^-1 xi_t. `sigma` (T x N) is needed by the covariance-based methods.
Matrix dcc_residuals(const CorrPath& path, const Matrix& xi, const DecompMethod& method, const Matrix* sigma = nullptr);

using VectorSampler = std::function<Vector(Rng&)>;

struct DccSimulation {
  Matrix xi;
  Matrix eps;
  CorrPath path;
};

/// xi_t = Xi_t eps_t with eps drawn from `sampler`. Covariance-based methods
/// use unit volatilities unless `sigma` is given.
DccSimulation simulate_dcc(const DccParams& p, std::size_t T, const VectorSampler& sampler, const DecompMethod& method,
                           std::uint64_t seed, const Matrix* sigma = nullptr);

}  // namespace cdg
