#include "cdg/skewt.hpp"

#include <cmath>
#include <limits>

#include "cdg/errors.hpp"
#include "cdg/special.hpp"

namespace cdg {

void validate(const SkewTParams& p) {
  if (!(p.nu > kMinNu) || !std::isfinite(p.nu))
    throw ParamError("skew-t degrees of freedom must exceed 2.001");
  if (!(p.gamma > 0.0) || !std::isfinite(p.gamma))
    throw ParamError("skew-t skewness must be positive");
}

SkewT::SkewT(const SkewTParams& p) : p_(p) {
  validate(p);
  const double nu = p.nu, g = p.gamma;
  // E|Z| of the unit-variance Student-t.
  double log_beta = std::lgamma(0.5) + std::lgamma(0.5 * nu) - std::lgamma(0.5 * (nu + 1.0));
  double m1 = 2.0 * std::sqrt(nu - 2.0) / (nu - 1.0) * std::exp(-log_beta);
  mu_ = m1 * (g - 1.0 / g);
  sigma_ = std::sqrt((1.0 - m1 * m1) * (g * g + 1.0 / (g * g)) + 2.0 * m1 * m1 - 1.0);
  g_ = 2.0 / (g + 1.0 / g);
  log_g_ = std::log(g_);
  log_sigma_ = std::log(sigma_);
  t_scale_ = std::sqrt(nu / (nu - 2.0));
  log_norm_ = std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) - 0.5 * std::log(M_PI * (nu - 2.0));
}

double SkewT::std_logpdf(double z) const {
  return log_norm_ - 0.5 * (p_.nu + 1.0) * std::log1p(z * z / (p_.nu - 2.0));
}

double SkewT::std_cdf(double z) const { return special::t_cdf(z * t_scale_, p_.nu); }

double SkewT::std_quantile(double u) const { return special::t_quantile(u, p_.nu) / t_scale_; }

double SkewT::logpdf(double x) const {
  double z = x * sigma_ + mu_;
  double scaled = z >= 0.0 ? z / p_.gamma : z * p_.gamma;
  return log_g_ + std_logpdf(scaled) + log_sigma_;
}

double SkewT::pdf(double x) const { return std::exp(logpdf(x)); }

double SkewT::cdf(double x) const {
  if (x == std::numeric_limits<double>::infinity()) return 1.0;
  if (x == -std::numeric_limits<double>::infinity()) return 0.0;
  double z = x * sigma_ + mu_;
  if (z < 0.0) return g_ / p_.gamma * std_cdf(z * p_.gamma);
  return 1.0 - g_ * p_.gamma * std_cdf(-z / p_.gamma);
}

double SkewT::quantile(double u) const {
  if (!(u > 0.0 && u < 1.0)) throw ParamError("skew-t quantile needs u in (0, 1)");
  const double g = p_.gamma;
  // Closed-form inversion of the piecewise CDF as the starting point.
  double z0 = 1.0 / (1.0 + g * g);
  double z = u < z0 ? std_quantile(u * g / g_) / g : -g * std_quantile((1.0 - u) / (g_ * g));
  double x = (z - mu_) / sigma_;
  if (!std::isfinite(x)) x = 0.0;

  // Safeguarded Newton polish inside an expanding bracket.
  double lo = x - 1.0, hi = x + 1.0;
  while (cdf(lo) > u) lo -= 2.0 * (hi - lo);
  while (cdf(hi) < u) hi += 2.0 * (hi - lo);
  for (int it = 0; it < 200; ++it) {
    double f = cdf(x) - u;
    if (f == 0.0) return x;
    if (f > 0.0) hi = x; else lo = x;
    double step = f / pdf(x);
    double next = x - step;
    if (!(next > lo && next < hi) || !std::isfinite(next)) next = 0.5 * (lo + hi);
    if (std::abs(next - x) <= 1e-12 * std::max(1.0, std::abs(x))) return next;
    x = next;
    if (hi - lo <= 1e-12 * std::max(1.0, std::abs(x))) return x;
  }
  return x;
}

double skewt_logpdf(double x, const SkewTParams& p) { return SkewT(p).logpdf(x); }
double skewt_pdf(double x, const SkewTParams& p) { return SkewT(p).pdf(x); }
double skewt_cdf(double x, const SkewTParams& p) { return SkewT(p).cdf(x); }
double skewt_quantile(double u, const SkewTParams& p) { return SkewT(p).quantile(u); }

}  // namespace cdg
