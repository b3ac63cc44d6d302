#pragma once

#include <span>

namespace cdg {

/// Lower bound on the skew-t degrees of freedom; the variance must exist.
inline constexpr double kMinNu = 2.001;

/// Standardized skew-t: Fernandez-Steel skewing of a Student-t, shifted and
/// scaled so the distribution has mean 0 and variance 1.
struct SkewTParams {
  double nu = 10.0;    // degrees of freedom, > kMinNu
  double gamma = 1.0;  // skewness, > 0; 1 is symmetric
};

/// Throws ParamError unless nu > kMinNu and gamma > 0.
void validate(const SkewTParams& p);

/// Precomputes the constants of one parameter set; cheap to evaluate in loops.
class SkewT {
 public:
  explicit SkewT(const SkewTParams& p);

  const SkewTParams& params() const { return p_; }

  double logpdf(double x) const;
  double pdf(double x) const;
  double cdf(double x) const;
  double quantile(double u) const;

  double mean_shift() const { return mu_; }
  double scale() const { return sigma_; }

 private:
  double std_logpdf(double z) const;  // unit-variance Student-t
  double std_cdf(double z) const;
  double std_quantile(double u) const;

  SkewTParams p_;
  double mu_ = 0.0;
  double sigma_ = 1.0;
  double log_g_ = 0.0;
  double g_ = 1.0;
  double log_sigma_ = 0.0;
  double t_scale_ = 1.0;  // sqrt(nu / (nu - 2))
  double log_norm_ = 0.0;
};

double skewt_logpdf(double x, const SkewTParams& p);
double skewt_pdf(double x, const SkewTParams& p);
double skewt_cdf(double x, const SkewTParams& p);
double skewt_quantile(double u, const SkewTParams& p);

}  // namespace cdg
