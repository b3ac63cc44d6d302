#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "cdg/copula.hpp"
#include "cdg/skewt.hpp"

namespace cdg {

/// Which variable conditions the third (conditional) copula of a
/// three-dimensional pair-copula construction.
///
///   Pivot1: c12, c13, c23|1
///   Pivot2: c12, c23, c13|2
///   Pivot3: c13, c23, c12|3
enum class Pivot { P1 = 1, P2 = 2, P3 = 3 };

/// Copula part of a trivariate pair-copula construction. `edges` holds the
/// two unconditional copulas followed by the conditional one, in the order
/// listed for each pivot above. The conditional copula's parameters do not
/// depend on the conditioning value.
struct PairCopula {
  Pivot pivot = Pivot::P1;
  std::array<CopulaFamily, 3> edges{};

  bool operator==(const PairCopula&) const = default;
};

/// Pair copula plus skew-t marginals.
struct PairCopulaSpec {
  PairCopula copula;
  std::array<SkewTParams, 3> marginals{};
};

/// Variables (0-based) joined by each edge and the conditioning variable.
struct EdgeLayout {
  std::array<std::array<int, 2>, 2> unconditional;  // (a, b) with a < b
  int conditioning = 0;
  // Variables of the conditional copula, ascending; conditional[e] is the
  // variable that unconditional edge e links to the conditioning one.
  std::array<int, 2> conditional;
};

EdgeLayout edge_layout(Pivot p);

/// Clamping bound applied to h-function outputs before they enter the conditional copula.
inline constexpr double kHClamp = 1e-12;

/// Repeated evaluation of one pair copula. Counts how often an h-function
/// output had to be clamped into [kHClamp, 1 - kHClamp].
class PairCopulaEvaluator {
 public:
  explicit PairCopulaEvaluator(const PairCopula& pc);

  double logpdf(double u1, double u2, double u3, long* clamp_count = nullptr) const;

  /// Copula log-density given precomputed unconditional edge terms; used by
  /// grid integration where the unconditional edges are tabulated.
  double conditional_logpdf(double a, double b, long* clamp_count = nullptr) const;

  const EdgeLayout& layout() const { return layout_; }
  const BivariateCopula& edge(int i) const { return edges_[static_cast<std::size_t>(i)]; }

  /// Conditional CDF carried by unconditional edge `e` (before clamping);
  /// arguments are that edge's variables in ascending order.
  double conditional_cdf(int e, double u_first, double u_second) const;

  /// Clamped arguments of the conditional copula at u.
  std::array<double, 2> conditional_arguments(double u1, double u2, double u3, long* clamp_count = nullptr) const;

 private:
  PairCopula pc_;
  EdgeLayout layout_;
  std::array<BivariateCopula, 3> edges_;
};

/// Copula log-density at u in (0, 1)^3.
double pair_copula_logdensity(const PairCopula& pc, std::span<const double> u, long* clamp_count = nullptr);

/// Joint log-density of the skew-t marginals joined by the pair copula.
double pair_logdensity(const PairCopulaSpec& spec, std::span<const double> x, long* clamp_count = nullptr);

void validate(const PairCopula& pc);

/// The twelve-family menu: Gaussian, Frank, Plackett, Clayton (0/90/180/270),
/// Gumbel (0/90/180/270), t. Parameters are left at zero (templates).
std::vector<CopulaFamily> pair_family_menu();

/// Cartesian product of pivots x families^3, pivot-major then edge 1, 2, 3.
std::vector<PairCopula> enumerate_specs(std::span<const CopulaFamily> families,
                                        std::span<const Pivot> pivots = std::span<const Pivot>());

/// Compact form `P{1|2|3}:{fam}:{fam}:{fam}`, e.g. `P1:ga:cl90:t`.
std::string spec_string(const PairCopula& pc);
PairCopula parse_spec_string(const std::string& text);

}  // namespace cdg
