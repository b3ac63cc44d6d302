#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "cdg/types.hpp"

namespace cdg {

enum class Family { Independent, Gaussian, StudentT, Clayton, Frank, Gumbel, Plackett };

/// Counter-clockwise rotation of a two-dimensional copula density.
enum class Rotation { R0 = 0, R90 = 90, R180 = 180, R270 = 270 };

/// A parametric bivariate copula (or the N-dimensional product copula).
///
/// `theta` is the dependence parameter: the correlation rho for Gaussian and
/// StudentT, the generator parameter for the Archimedean families and the
/// odds ratio for Plackett. `nu` is only used by StudentT.
struct CopulaFamily {
  Family family = Family::Independent;
  Rotation rotation = Rotation::R0;
  double theta = 0.0;
  double nu = 0.0;

  static CopulaFamily independent() { return {}; }
  static CopulaFamily gaussian(double rho) { return {Family::Gaussian, Rotation::R0, rho, 0.0}; }
  static CopulaFamily student_t(double rho, double nu) { return {Family::StudentT, Rotation::R0, rho, nu}; }
  static CopulaFamily clayton(double theta, Rotation r = Rotation::R0) { return {Family::Clayton, r, theta, 0.0}; }
  static CopulaFamily frank(double theta) { return {Family::Frank, Rotation::R0, theta, 0.0}; }
  static CopulaFamily gumbel(double theta, Rotation r = Rotation::R0) { return {Family::Gumbel, r, theta, 0.0}; }
  static CopulaFamily plackett(double theta) { return {Family::Plackett, Rotation::R0, theta, 0.0}; }

  /// Number of free parameters (0 for Independent, 2 for StudentT, else 1).
  int param_count() const;

  /// Same copula with arguments swapped: C'(u, v) = C(v, u).
  CopulaFamily transposed() const;

  bool operator==(const CopulaFamily&) const = default;
};

/// Throws ParamError when the parameters are outside the family's domain.
void validate(const CopulaFamily& fam);

/// Short code used in reports: in, ga, t, cl, fr, gu, pl plus an optional
/// rotation suffix (cl90, gu270, ...).
std::string family_code(const CopulaFamily& fam);

/// Family and rotation from a code; parameters are left at zero.
CopulaFamily parse_family_code(const std::string& code);

/// Bivariate CDF; u, v in [0, 1] (grounded, uniform margins at the boundary).
double copula_cdf(const CopulaFamily& fam, double u, double v);

/// CDF for a vector argument. Independent accepts any dimension, the other
/// families require exactly two components.
double copula_cdf(const CopulaFamily& fam, std::span<const double> u);

/// Bivariate log-density on the open unit square; DomainError at the boundary.
double copula_logdensity(const CopulaFamily& fam, double u, double v);
double copula_logdensity(const CopulaFamily& fam, std::span<const double> u);

/// Conditional distribution dC(u, v)/dv (conditioning on the second argument).
double h_function(const CopulaFamily& fam, double u, double v);

/// dC(u, v)/du: the conditional distribution of the second argument given the first.
double h_function_first(const CopulaFamily& fam, double u, double v);

/// Precomputed evaluator for repeated calls with one parameter set. Skips
/// parameter and domain validation; arguments must lie in (0, 1).
class BivariateCopula {
 public:
  explicit BivariateCopula(const CopulaFamily& fam);

  const CopulaFamily& family() const { return fam_; }
  double logpdf(double u, double v) const;
  double h(double u, double v) const;        // dC/dv
  double h_first(double u, double v) const;  // dC/du
  double cdf(double u, double v) const;

 private:
  double base_logpdf(double u, double v) const;
  double base_h(double u, double v) const;
  double base_cdf(double u, double v) const;

  CopulaFamily fam_;
  double c0_ = 0.0;  // family-specific constants
  double c1_ = 0.0;
  double c2_ = 0.0;
};

/// Standard bivariate normal CDF P(X <= x, Y <= y) with correlation rho.
double bivariate_normal_cdf(double x, double y, double rho);

/// Elliptical copula densities in any dimension, evaluated through the Cholesky factor of R.
double gaussian_copula_logdensity_nd(const CorrMatrix& r, std::span<const double> u);
double t_copula_logdensity_nd(const CorrMatrix& r, double nu, std::span<const double> u);

/// Elliptical copula CDFs. Two dimensions use the bivariate routines; higher
/// dimensions use randomized lattice quasi-Monte-Carlo with a fixed seed and
/// absolute error target `tol`.
double gaussian_copula_cdf_nd(const CorrMatrix& r, std::span<const double> u, double tol = 1e-4,
                              std::uint64_t seed = 12345);
double t_copula_cdf_nd(const CorrMatrix& r, double nu, std::span<const double> u, double tol = 1e-4,
                       std::uint64_t seed = 12345);

}  // namespace cdg
