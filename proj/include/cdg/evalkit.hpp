#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cdg/dcc.hpp"
#include "cdg/decomp.hpp"
#include "cdg/garch.hpp"
#include "cdg/market_data.hpp"
#include "cdg/residual_fit.hpp"

namespace cdg {

/// E[(X - mx)^2 (Y - my)^2] / (E[(X - mx)^2] E[(Y - my)^2]) with 1/n sample
/// moments. Throws StatError on fewer than 4 points, unequal lengths or a
/// zero variance.
double cokurtosis22(std::span<const double> x, std::span<const double> y);

struct InformationCriteria {
  double aic = 0.0;
  double bic = 0.0;
};

InformationCriteria information_criteria(double loglik, int k, std::size_t n);

/// Residual log-density used to score returns.
using LogDensity = std::function<double(std::span<const double>)>;

/// Everything needed to turn a residual density into a density of returns.
/// Without `dcc` the residual density applies to the GARCH residuals directly.
struct ReturnsModel {
  std::vector<GarchParams> garch;
  std::optional<DccParams> dcc;
  DecompMethod method;
};

/// How the correlation recursion enters the out-of-sample window.
enum class OutOfSampleStart { Continue, ResetQ };

struct ReturnsLoglik {
  Vector per_observation;
  double llis = 0.0;   // average over rows [0, split)
  double lloos = 0.0;  // average over rows [split, T); NaN when empty
  std::size_t n_in = 0;
  std::size_t n_out = 0;
};

/// The residuals a returns model implies, with the per-row log-Jacobian
/// -log|det Xi_t| - sum_i log sigma_it.
struct ReturnsTerms {
  Matrix residuals;
  Vector log_jacobian;
  std::size_t split = 0;
};

ReturnsTerms returns_terms(const ReturnsModel& model, const Matrix& returns, std::size_t split,
                           OutOfSampleStart start = OutOfSampleStart::Continue);

ReturnsLoglik score_returns(const ReturnsTerms& terms, const LogDensity& density);
ReturnsLoglik score_returns(const ReturnsTerms& terms, const ResidualModel& residual);

/// Per-observation log p(Xi_t^-1 xi_t) - log|det Xi_t| - sum_i log sigma_it
/// with all recursions run over the whole sample at fixed parameters, so the
/// out-of-sample window continues from the last in-sample state (or restarts
/// Q at Qbar with ResetQ). Throws EvalError naming the first bad row.
ReturnsLoglik returns_loglik(const ReturnsModel& model, const LogDensity& density, const Matrix& returns,
                             std::size_t split, OutOfSampleStart start = OutOfSampleStart::Continue);

ReturnsLoglik returns_loglik(const ReturnsModel& model, const ResidualModel& residual, const Matrix& returns,
                             std::size_t split, OutOfSampleStart start = OutOfSampleStart::Continue);

/// Upper-triangle pairs (i, j), i < j, in row-major order.
std::vector<std::pair<int, int>> index_pairs(int n);

/// True when every off-diagonal model correlation lies inside the interval
/// of the matching pair; `intervals` follows index_pairs order.
bool correlation_test(const Matrix& model_corr, const std::vector<CorrInterval>& intervals);
bool correlation_test(const ResidualModel& model, const std::vector<CorrInterval>& intervals);

/// Pairwise 2-2 cokurtosis of the columns, in index_pairs order.
std::vector<double> cokurtosis_table(const Matrix& x);

struct EvalReport {
  std::string method;
  std::string type;
  double llis = 0.0;
  double lloos = 0.0;
  double aic = 0.0;
  double bic = 0.0;
  std::optional<bool> corr_test;
  bool addin_used = false;
  std::map<std::string, double> cokurtosis;  // "xy" pair label -> value
};

EvalReport make_report(const std::string& method, const FitResult& fit, const ReturnsLoglik& ll,
                       std::optional<bool> corr_test = std::nullopt);

}  // namespace cdg
