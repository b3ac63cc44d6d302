#pragma once

// Thin wrappers over Boost.Math with a policy that avoids long double
// promotion and reports errors as NaN/inf instead of throwing.

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

namespace cdg::special {

using Policy = boost::math::policies::policy<
    boost::math::policies::promote_double<false>, boost::math::policies::promote_float<false>,
    boost::math::policies::domain_error<boost::math::policies::ignore_error>,
    boost::math::policies::overflow_error<boost::math::policies::ignore_error>,
    boost::math::policies::evaluation_error<boost::math::policies::ignore_error>>;

inline double norm_cdf(double x) {
  return 0.5 * std::erfc(-x * 0.70710678118654752440);
}

inline double norm_logpdf(double x) { return -0.5 * x * x - 0.91893853320467274178; }

inline double norm_quantile(double u) {
  return boost::math::quantile(boost::math::normal_distribution<double, Policy>(), u);
}

inline double t_cdf(double x, double nu) {
  return boost::math::cdf(boost::math::students_t_distribution<double, Policy>(nu), x);
}

inline double t_quantile(double u, double nu) {
  return boost::math::quantile(boost::math::students_t_distribution<double, Policy>(nu), u);
}

/// log density of the (unscaled) Student-t with nu degrees of freedom.
inline double t_logpdf(double x, double nu) {
  return std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) - 0.5 * std::log(nu * M_PI) -
         0.5 * (nu + 1.0) * std::log1p(x * x / nu);
}

}  // namespace cdg::special
