#include <doctest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <functional>
#include <limits>

#include "cdg/errors.hpp"
#include "cdg/skewt.hpp"

using namespace cdg;

namespace {

double integrate(const std::function<double(double)>& f, double a, double b) {
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b, 15, 1e-13);
}

// Core [-1, 1] split at the mode (where the density has a kink); tails use
// x = +-exp(s) so the slowly decaying nu = 2.5 variance integrand stays tractable.
double moment(const SkewTParams& p, int k) {
  auto f = [&](double x) { return std::pow(x, k) * skewt_pdf(x, p); };
  SkewT d(p);
  double mode = -d.mean_shift() / d.scale();
  double core = integrate(f, -1.0, mode) + integrate(f, mode, 1.0);
  double sign = k % 2 == 0 ? 1.0 : -1.0;
  auto right = [&](double s) { return std::exp((k + 1) * s + skewt_logpdf(std::exp(s), p)); };
  auto left = [&](double s) { return sign * std::exp((k + 1) * s + skewt_logpdf(-std::exp(s), p)); };
  return core + integrate(right, 0.0, 40.0) + integrate(right, 40.0, 400.0) + integrate(left, 0.0, 40.0) +
         integrate(left, 40.0, 400.0);
}

}  // namespace

TEST_CASE("parameter validation") {
  CHECK_THROWS_AS(skewt_pdf(0.0, {2.0, 1.0}), ParamError);
  CHECK_THROWS_AS(skewt_pdf(0.0, {5.0, 0.0}), ParamError);
  CHECK_THROWS_AS(skewt_quantile(1.0, {5.0, 1.0}), ParamError);
  CHECK_THROWS_AS(skewt_quantile(0.0, {5.0, 1.0}), ParamError);
}

TEST_CASE("symmetric case") {
  SkewTParams p{6.0, 1.0};
  for (double x : {0.1, 0.7, 1.9, 4.2}) CHECK(skewt_pdf(x, p) == doctest::Approx(skewt_pdf(-x, p)).epsilon(1e-14));
  CHECK(skewt_cdf(0.0, p) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(std::abs(skewt_quantile(0.5, p)) < 1e-8);
  CHECK(skewt_pdf(0.0, {1e6, 1.0}) == doctest::Approx(0.3989422804).epsilon(1e-3));
  CHECK(skewt_quantile(0.975, {3.0, 1.0}) == doctest::Approx(1.8374).epsilon(1e-3 / 1.8374));
}

TEST_CASE("gamma one is the standardized Student-t") {
  for (double nu : {2.5, 4.0, 30.0}) {
    boost::math::students_t t(nu);
    double s = std::sqrt(nu / (nu - 2.0));
    for (double x : {-3.0, -0.4, 0.0, 1.1, 5.0}) {
      double expect = s * boost::math::pdf(t, x * s);
      CHECK(std::abs(skewt_pdf(x, {nu, 1.0}) - expect) < 1e-10);
    }
  }
}

TEST_CASE("density integrates to one with zero mean and unit variance") {
  for (double nu : {2.5, 4.0, 10.0}) {
    for (double g : {0.7, 1.0, 1.4}) {
      SkewTParams p{nu, g};
      CAPTURE(nu);
      CAPTURE(g);
      CHECK(std::abs(integrate([&](double x) { return skewt_pdf(x, p); }, -40, 0) +
                     integrate([&](double x) { return skewt_pdf(x, p); }, 0, 40) -
                     (skewt_cdf(40, p) - skewt_cdf(-40, p))) < 1e-8);
      CHECK(std::abs(moment(p, 0) - 1.0) < 1e-6);
      CHECK(std::abs(moment(p, 1)) < 1e-6);
      CHECK(std::abs(moment(p, 2) - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("cdf matches density and quantile inverts cdf") {
  for (double nu : {2.5, 5.0, 50.0}) {
    for (double g : {0.6, 1.0, 1.7}) {
      SkewTParams p{nu, g};
      for (double x : {-2.5, -0.3, 0.2, 1.3, 3.0}) {
        double h = 1e-6;
        double fd = (skewt_cdf(x + h, p) - skewt_cdf(x, p)) / h;
        CHECK(std::abs(fd / skewt_pdf(x, p) - 1.0) < 1e-4);
      }
      CHECK(skewt_quantile(skewt_cdf(1.3, p), p) == doctest::Approx(1.3).epsilon(1e-8));
      for (double u : {1e-9, 0.01, 0.3, 0.5, 0.77, 0.999, 1 - 1e-9}) {
        CHECK(std::abs(skewt_cdf(skewt_quantile(u, p), p) - u) < 1e-10);
      }
      CHECK(skewt_cdf(-1e12, p) < 1e-12);
      CHECK(skewt_cdf(1e12, p) > 1 - 1e-12);
      double prev = 0.0;
      for (double x = -6; x <= 6; x += 0.25) {
        double c = skewt_cdf(x, p);
        CHECK(c > prev);
        CHECK(skewt_pdf(x, p) > 0.0);
        prev = c;
      }
    }
  }
}
