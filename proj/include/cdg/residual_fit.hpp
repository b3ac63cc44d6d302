#pragma once

#include <array>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "cdg/pair_copula.hpp"
#include "cdg/skewt.hpp"
#include "cdg/types.hpp"

namespace cdg {

/// Residual distributions: skew-t marginals joined by an independent (I),
/// Gaussian (G), t (T) or pair (P) copula; the C prefix adds the
/// correlation add-in.
enum class MenuItem { IC, CIC, GC, CGC, TC, CTC, PC, CPC };

std::string to_string(MenuItem m);
MenuItem parse_menu_item(const std::string& name);
const std::array<MenuItem, 8>& all_menu_items();
bool has_addin(MenuItem m);
MenuItem base_item(MenuItem m);  // CGC -> GC, GC -> GC
bool uses_pair_copula(MenuItem m);

/// Lower-triangular L with L(0, 0) = 1 and a positive diagonal. The model
/// variable is X = L Y with Y drawn from the base model.
struct AddInTransform {
  Matrix lower;

  static AddInTransform identity(Eigen::Index n);
  void validate() const;  // MatrixError unless lower triangular with L(0,0) = 1 and positive diagonal
  double log_det() const;
  int free_parameters() const;  // n(n+1)/2 - 1
};

struct IndependentCopula {};
struct GaussianCopula {
  CorrMatrix sigma;
};
struct StudentTCopula {
  CorrMatrix sigma;
  double nu = 10.0;
};
using ResidualCopula = std::variant<IndependentCopula, GaussianCopula, StudentTCopula, PairCopula>;

struct ResidualModel {
  std::vector<SkewTParams> marginals;
  ResidualCopula copula = IndependentCopula{};
  std::optional<AddInTransform> addin;

  Eigen::Index dim() const { return static_cast<Eigen::Index>(marginals.size()); }
  void validate() const;
};

/// Free parameters: 2 per marginal, the copula's, and the add-in's.
int parameter_count(const ResidualModel& m);

/// Copula log-density at (F_i(x_i)) plus the marginal log-densities; any
/// add-in is ignored. CDF values are clamped into [1e-12, 1 - 1e-12] and
/// counted in `clamp_count`.
double base_logdensity(const ResidualModel& m, std::span<const double> x, long* clamp_count = nullptr);

/// base_logdensity(L^-1 x) - log|det L|. Throws ParamError without an add-in.
double addin_logdensity(const ResidualModel& m, std::span<const double> x, long* clamp_count = nullptr);

/// Whichever of the two applies.
double residual_logdensity(const ResidualModel& m, std::span<const double> x, long* clamp_count = nullptr);

/// Inverse symmetric square root of a covariance matrix.
Matrix leelong_transform(const Matrix& s);

/// L_J L_{S_Y}^-1 from the Cholesky factors; maps covariance S_Y to J.
AddInTransform addin_from_target(const Matrix& j, const Matrix& s_y);

/// Target covariance used for the add-in's alternative starting point.
enum class AddInTarget { Identity, SampleCorrelation };

struct FitOptions {
  AddInTarget target = AddInTarget::Identity;
  int max_iterations = 500;
  double tolerance = 1e-6;  // log-likelihood change at convergence
};

struct FitResult {
  MenuItem item = MenuItem::IC;
  ResidualModel model;
  double loglik = 0.0;
  int k = 0;
  double aic = 0.0;
  double bic = 0.0;
  std::size_t n = 0;
  bool converged = false;
  bool at_boundary = false;
  long clamp_count = 0;
  int iterations = 0;

  /// Pair-copula spec string, empty for the other copulas.
  std::string spec() const;
};

/// Fits menu items to one data set. The independence fit, which is the first
/// stage of every other fit, is computed once at construction; fit() is
/// const and may be called from several threads.
class ResidualFitter {
 public:
  explicit ResidualFitter(Matrix data, FitOptions options = {});

  /// `spec` supplies the pair-copula families for PC/CPC. A C-variant starts
  /// from `nested` (the fitted base item) when given, otherwise it fits the
  /// base item first. Throws FitError.
  FitResult fit(MenuItem item, const std::optional<PairCopula>& spec = std::nullopt,
                const FitResult* nested = nullptr) const;

  const FitResult& independent() const { return ic_; }
  const Matrix& data() const { return data_; }
  const FitOptions& options() const { return options_; }

 private:
  friend struct FitterAccess;

  CopulaFamily edge_fit(int pair, const CopulaFamily& family) const;

  Matrix data_;
  FitOptions options_;
  FitResult ic_;
  Matrix ic_u_;  // marginal CDF values under the independence fit
  mutable std::mutex edge_mutex_;
  mutable std::map<std::pair<int, std::string>, CopulaFamily> edge_cache_;
};

FitResult fit_residual_model(const Matrix& data, MenuItem item, const std::optional<PairCopula>& spec = std::nullopt,
                             const FitOptions& options = {});

/// Fits one bivariate family to pseudo-observations by maximum likelihood.
CopulaFamily fit_bivariate(const CopulaFamily& family, std::span<const double> u, std::span<const double> v);

struct ModelMoments {
  Vector mean;
  Matrix covariance;
  Matrix correlation;
  double mass = 0.0;  // grid integral of the density
};

/// Midpoint-rule moments over [-bound, bound]^N in Gaussian-substituted
/// coordinates y (x_i = F_i^-1(Phi(y_i))), `sections` cells per axis. N <= 3.
ModelMoments model_moments(const ResidualModel& m, int sections = 100, double bound = 8.0);

CorrMatrix model_correlation(const ResidualModel& m);

/// Correlation-preserving parameterization: canonical partial correlations
/// to a correlation matrix, and back.
Matrix corr_from_partials(std::span<const double> partials, Eigen::Index n);
std::vector<double> partials_from_corr(const Matrix& r);

}  // namespace cdg
