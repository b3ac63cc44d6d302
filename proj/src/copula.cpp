#include "cdg/copula.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "cdg/errors.hpp"
#include "cdg/rng.hpp"
#include "cdg/skewt.hpp"
#include "cdg/special.hpp"

namespace cdg {
namespace {

constexpr double kTwoPi = 6.283185307179586476925;

// log(a^-theta + b^-theta - 1) given la = log a, lb = log b (a, b in (0, 1]).
double clayton_log_a(double la, double lb, double theta) {
  double x = -theta * la, y = -theta * lb;
  if (x < y) std::swap(x, y);
  // A = e^x (1 + e^-x expm1(y)), x >= y >= 0.
  double tail = y > 1.0 ? std::exp(y - x) - std::exp(-x) : std::exp(-x) * std::expm1(y);
  return x + std::log1p(tail);
}

double log_sum_exp(double a, double b) {
  double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

bool open_unit(double x) { return x > 0.0 && x < 1.0; }

}  // namespace

int CopulaFamily::param_count() const {
  switch (family) {
    case Family::Independent: return 0;
    case Family::StudentT: return 2;
    default: return 1;
  }
}

CopulaFamily CopulaFamily::transposed() const {
  CopulaFamily t = *this;
  if (rotation == Rotation::R90) t.rotation = Rotation::R270;
  else if (rotation == Rotation::R270) t.rotation = Rotation::R90;
  return t;
}

void validate(const CopulaFamily& fam) {
  auto fail = [](const std::string& msg) { throw ParamError(msg); };
  const double th = fam.theta;
  if (!std::isfinite(th)) fail("copula parameter must be finite");
  switch (fam.family) {
    case Family::Independent: break;
    case Family::Gaussian:
      if (!(th > -1.0 && th < 1.0)) fail("Gaussian copula correlation must lie in (-1, 1)");
      break;
    case Family::StudentT:
      if (!(th > -1.0 && th < 1.0)) fail("t copula correlation must lie in (-1, 1)");
      if (!(fam.nu > kMinNu) || !std::isfinite(fam.nu)) fail("t copula degrees of freedom must exceed 2.001");
      break;
    case Family::Clayton:
      if (!(th > 0.0)) fail("Clayton parameter must be positive");
      break;
    case Family::Frank:
      if (th == 0.0) fail("Frank parameter must be nonzero");
      break;
    case Family::Gumbel:
      if (!(th >= 1.0)) fail("Gumbel parameter must be at least 1");
      break;
    case Family::Plackett:
      if (!(th > 0.0) || th == 1.0) fail("Plackett parameter must be positive and different from 1");
      break;
  }
}

std::string family_code(const CopulaFamily& fam) {
  std::string base;
  switch (fam.family) {
    case Family::Independent: base = "in"; break;
    case Family::Gaussian: base = "ga"; break;
    case Family::StudentT: base = "t"; break;
    case Family::Clayton: base = "cl"; break;
    case Family::Frank: base = "fr"; break;
    case Family::Gumbel: base = "gu"; break;
    case Family::Plackett: base = "pl"; break;
  }
  if (fam.rotation != Rotation::R0) base += std::to_string(static_cast<int>(fam.rotation));
  return base;
}

CopulaFamily parse_family_code(const std::string& code) {
  auto digits = code.find_first_of("0123456789");
  std::string base = code.substr(0, digits);
  CopulaFamily fam;
  if (base == "in") fam.family = Family::Independent;
  else if (base == "ga") fam.family = Family::Gaussian;
  else if (base == "t") fam.family = Family::StudentT;
  else if (base == "cl") fam.family = Family::Clayton;
  else if (base == "fr") fam.family = Family::Frank;
  else if (base == "gu") fam.family = Family::Gumbel;
  else if (base == "pl") fam.family = Family::Plackett;
  else throw ParamError("unknown copula family code '" + code + "'");
  if (digits != std::string::npos) {
    std::string rot = code.substr(digits);
    if (rot == "90") fam.rotation = Rotation::R90;
    else if (rot == "180") fam.rotation = Rotation::R180;
    else if (rot == "270") fam.rotation = Rotation::R270;
    else throw ParamError("unknown rotation in copula code '" + code + "'");
    if (fam.family != Family::Clayton && fam.family != Family::Gumbel)
      throw ParamError("only Clayton and Gumbel copulas take rotations: '" + code + "'");
  }
  return fam;
}

// ---------------------------------------------------------------------------
// BivariateCopula

BivariateCopula::BivariateCopula(const CopulaFamily& fam) : fam_(fam) {
  const double th = fam.theta;
  switch (fam.family) {
    case Family::Gaussian:
      c0_ = th;
      c1_ = std::sqrt(1.0 - th * th);
      c2_ = std::log1p(-th * th);
      break;
    case Family::StudentT: {
      const double nu = fam.nu;
      c0_ = th;
      c1_ = std::lgamma(0.5 * nu + 1.0) + std::lgamma(0.5 * nu) - 2.0 * std::lgamma(0.5 * (nu + 1.0)) -
            0.5 * std::log1p(-th * th);
      c2_ = std::log1p(-th * th);
      break;
    }
    case Family::Clayton:
      c0_ = std::log1p(th);
      break;
    case Family::Frank: {
      double a = std::abs(th);
      c0_ = a;
      c2_ = std::log(-std::expm1(-a));
      c1_ = std::log(a) + c2_;
      break;
    }
    case Family::Plackett:
      c0_ = std::log(th);
      break;
    default:
      break;
  }
}

double BivariateCopula::base_logpdf(double u, double v) const {
  const double th = fam_.theta;
  switch (fam_.family) {
    case Family::Independent:
      return 0.0;
    case Family::Gaussian: {
      double x = special::norm_quantile(u), y = special::norm_quantile(v);
      double r = c0_;
      return -0.5 * c2_ - (r * r * (x * x + y * y) - 2.0 * r * x * y) / (2.0 * (1.0 - r * r));
    }
    case Family::StudentT: {
      const double nu = fam_.nu, r = c0_;
      double x = special::t_quantile(u, nu), y = special::t_quantile(v, nu);
      double q = (x * x + y * y - 2.0 * r * x * y) / (1.0 - r * r);
      return c1_ - 0.5 * (nu + 2.0) * std::log1p(q / nu) +
             0.5 * (nu + 1.0) * (std::log1p(x * x / nu) + std::log1p(y * y / nu));
    }
    case Family::Clayton: {
      double lu = std::log(u), lv = std::log(v);
      return c0_ - (th + 1.0) * (lu + lv) - (2.0 + 1.0 / th) * clayton_log_a(lu, lv, th);
    }
    case Family::Frank: {
      if (th < 0.0) v = 1.0 - v;
      const double a = c0_;
      double m = std::min(u, v), big = std::max(u, v);
      double b = -std::expm1(-a * big) - std::exp(-a * (big - m)) * std::expm1(-a * (1.0 - big));
      return c1_ - a * (big - m) - 2.0 * std::log(b);
    }
    case Family::Gumbel: {
      double lu = std::log(u), lv = std::log(v);
      double x = -lu, y = -lv;
      double lx = std::log(x), ly = std::log(y);
      double log_a = log_sum_exp(th * lx, th * ly);
      double w = std::exp(log_a / th);
      return -w - lu - lv + (th - 1.0) * (lx + ly) + (2.0 / th - 2.0) * log_a + std::log1p((th - 1.0) / w);
    }
    case Family::Plackett: {
      double eta = th - 1.0;
      double s = 1.0 + eta * (u + v);
      double delta = s * s - 4.0 * th * eta * u * v;
      return c0_ + std::log1p(eta * (u + v - 2.0 * u * v)) - 1.5 * std::log(delta);
    }
  }
  return 0.0;
}

double BivariateCopula::base_h(double u, double v) const {
  const double th = fam_.theta;
  switch (fam_.family) {
    case Family::Independent:
      return u;
    case Family::Gaussian: {
      double x = special::norm_quantile(u), y = special::norm_quantile(v);
      return special::norm_cdf((x - c0_ * y) / c1_);
    }
    case Family::StudentT: {
      const double nu = fam_.nu, r = c0_;
      double x = special::t_quantile(u, nu), y = special::t_quantile(v, nu);
      double scale = std::sqrt((nu + y * y) * (1.0 - r * r) / (nu + 1.0));
      return special::t_cdf((x - r * y) / scale, nu + 1.0);
    }
    case Family::Clayton: {
      double lu = std::log(u), lv = std::log(v);
      return std::exp(-(th + 1.0) * lv - (1.0 + 1.0 / th) * clayton_log_a(lu, lv, th));
    }
    case Family::Frank: {
      if (th < 0.0) v = 1.0 - v;
      const double a = c0_;
      double m = std::min(u, v), big = std::max(u, v);
      double b = -std::expm1(-a * big) - std::exp(-a * (big - m)) * std::expm1(-a * (1.0 - big));
      return std::exp(-a * v + a * m + std::log(-std::expm1(-a * u)) - std::log(b));
    }
    case Family::Gumbel: {
      double lv = std::log(v);
      double x = -std::log(u), y = -lv;
      double lx = std::log(x), ly = std::log(y);
      double log_a = log_sum_exp(th * lx, th * ly);
      double w = std::exp(log_a / th);
      return std::exp(-w + (1.0 / th - 1.0) * log_a + (th - 1.0) * ly - lv);
    }
    case Family::Plackett: {
      double eta = th - 1.0;
      double s = 1.0 + eta * (u + v);
      double delta = s * s - 4.0 * th * eta * u * v;
      return 0.5 * (1.0 - (s - 2.0 * th * u) / std::sqrt(delta));
    }
  }
  return u;
}

double BivariateCopula::base_cdf(double u, double v) const {
  if (u <= 0.0 || v <= 0.0) return 0.0;
  if (u >= 1.0) return std::min(v, 1.0);
  if (v >= 1.0) return u;
  const double th = fam_.theta;
  switch (fam_.family) {
    case Family::Independent:
      return u * v;
    case Family::Gaussian:
      return bivariate_normal_cdf(special::norm_quantile(u), special::norm_quantile(v), c0_);
    case Family::StudentT: {
      // C(u, v) = integral over y < t^-1(v) of h(u | T(y)) t(y) dy.
      const double nu = fam_.nu, r = c0_;
      double x = special::t_quantile(u, nu);
      double yv = special::t_quantile(v, nu);
      auto integrand = [&](double y) {
        double scale = std::sqrt((nu + y * y) * (1.0 - r * r) / (nu + 1.0));
        return special::t_cdf((x - r * y) / scale, nu + 1.0) * std::exp(special::t_logpdf(y, nu));
      };
      double val = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
          integrand, -std::numeric_limits<double>::infinity(), yv, 20, 1e-14);
      return std::clamp(val, std::max(0.0, u + v - 1.0), std::min(u, v));
    }
    case Family::Clayton: {
      return std::exp(-clayton_log_a(std::log(u), std::log(v), th) / th);
    }
    case Family::Frank: {
      if (th < 0.0) {
        CopulaFamily pos = fam_;
        pos.theta = -th;
        return u - BivariateCopula(pos).base_cdf(u, 1.0 - v);
      }
      if (th < 1e-5) return u * v * (1.0 + 0.5 * th * (1.0 - u) * (1.0 - v));
      const double a = c0_;
      double m = std::min(u, v), big = std::max(u, v);
      double b = -std::expm1(-a * big) - std::exp(-a * (big - m)) * std::expm1(-a * (1.0 - big));
      return m - (std::log(b) - c2_) / a;
    }
    case Family::Gumbel: {
      double lx = std::log(-std::log(u)), ly = std::log(-std::log(v));
      double log_a = log_sum_exp(th * lx, th * ly);
      return std::exp(-std::exp(log_a / th));
    }
    case Family::Plackett: {
      double eta = th - 1.0;
      double s = 1.0 + eta * (u + v);
      double delta = s * s - 4.0 * th * eta * u * v;
      return 2.0 * th * u * v / (s + std::sqrt(delta));
    }
  }
  return u * v;
}

double BivariateCopula::logpdf(double u, double v) const {
  switch (fam_.rotation) {
    case Rotation::R0: return base_logpdf(u, v);
    case Rotation::R90: return base_logpdf(1.0 - v, u);
    case Rotation::R180: return base_logpdf(1.0 - u, 1.0 - v);
    case Rotation::R270: return base_logpdf(v, 1.0 - u);
  }
  return 0.0;
}

double BivariateCopula::h(double u, double v) const {
  double r = 0.0;
  switch (fam_.rotation) {
    case Rotation::R0: r = base_h(u, v); break;
    case Rotation::R90: r = base_h(u, 1.0 - v); break;
    case Rotation::R180: r = 1.0 - base_h(1.0 - u, 1.0 - v); break;
    case Rotation::R270: r = 1.0 - base_h(1.0 - u, v); break;
  }
  return std::clamp(r, 0.0, 1.0);
}

double BivariateCopula::h_first(double u, double v) const {
  double r = 0.0;
  switch (fam_.rotation) {
    case Rotation::R0: r = base_h(v, u); break;
    case Rotation::R90: r = 1.0 - base_h(1.0 - v, u); break;
    case Rotation::R180: r = 1.0 - base_h(1.0 - v, 1.0 - u); break;
    case Rotation::R270: r = base_h(v, 1.0 - u); break;
  }
  return std::clamp(r, 0.0, 1.0);
}

double BivariateCopula::cdf(double u, double v) const {
  u = std::clamp(u, 0.0, 1.0);
  v = std::clamp(v, 0.0, 1.0);
  double r = 0.0;
  switch (fam_.rotation) {
    case Rotation::R0: r = base_cdf(u, v); break;
    case Rotation::R90: r = u - base_cdf(1.0 - v, u); break;
    case Rotation::R180: r = base_cdf(1.0 - u, 1.0 - v) + u + v - 1.0; break;
    case Rotation::R270: r = v - base_cdf(v, 1.0 - u); break;
  }
  return std::clamp(r, std::max(0.0, u + v - 1.0), std::min(u, v));
}

// ---------------------------------------------------------------------------
// Free functions

double copula_cdf(const CopulaFamily& fam, double u, double v) {
  validate(fam);
  return BivariateCopula(fam).cdf(u, v);
}

double copula_cdf(const CopulaFamily& fam, std::span<const double> u) {
  if (u.size() < 2) throw DomainError("copula arguments need at least two components");
  if (fam.family == Family::Independent) {
    double p = 1.0;
    for (double x : u) p *= std::clamp(x, 0.0, 1.0);
    return p;
  }
  if (u.size() != 2) throw DomainError("only the independence copula is defined beyond two dimensions here");
  return copula_cdf(fam, u[0], u[1]);
}

double copula_logdensity(const CopulaFamily& fam, double u, double v) {
  validate(fam);
  if (!open_unit(u) || !open_unit(v)) throw DomainError("copula density evaluated on the boundary");
  return BivariateCopula(fam).logpdf(u, v);
}

double copula_logdensity(const CopulaFamily& fam, std::span<const double> u) {
  for (double x : u)
    if (!open_unit(x)) throw DomainError("copula density evaluated on the boundary");
  if (fam.family == Family::Independent) return 0.0;
  if (u.size() != 2) throw DomainError("bivariate family evaluated with " + std::to_string(u.size()) + " arguments");
  return copula_logdensity(fam, u[0], u[1]);
}

double h_function(const CopulaFamily& fam, double u, double v) {
  validate(fam);
  if (!open_unit(u) || !open_unit(v)) throw DomainError("h-function evaluated on the boundary");
  return BivariateCopula(fam).h(u, v);
}

double h_function_first(const CopulaFamily& fam, double u, double v) {
  validate(fam);
  if (!open_unit(u) || !open_unit(v)) throw DomainError("h-function evaluated on the boundary");
  return BivariateCopula(fam).h_first(u, v);
}

// ---------------------------------------------------------------------------
// Bivariate normal CDF (Drezner-Wesolowsky as refined by Genz), 20-point
// Gauss-Legendre rule throughout.

namespace {

// P(X > h, Y > k) for a standard bivariate normal with correlation r.
double bvn_upper(double h, double k, double r) {
  using GL = boost::math::quadrature::gauss<double, 20>;
  const auto& nodes = GL::abscissa();
  const auto& weights = GL::weights();
  double hk = h * k;
  double bvn = 0.0;
  if (std::abs(r) < 0.925) {
    double hs = 0.5 * (h * h + k * k);
    double asr = std::asin(r);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      for (double sgn : {-1.0, 1.0}) {
        double sn = std::sin(0.5 * asr * (1.0 + sgn * nodes[i]));
        bvn += weights[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
      }
    }
    return 0.5 * bvn * asr / kTwoPi + special::norm_cdf(-h) * special::norm_cdf(-k);
  }
  if (r < 0.0) {
    k = -k;
    hk = -hk;
  }
  if (std::abs(r) < 1.0) {
    double as = (1.0 - r) * (1.0 + r);
    double a = std::sqrt(as);
    double bs = (h - k) * (h - k);
    double c = (4.0 - hk) / 8.0;
    double d = (12.0 - hk) / 16.0;
    double asr = -0.5 * (bs / as + hk);
    if (asr > -100.0)
      bvn = a * std::exp(asr) * (1.0 - c * (bs - as) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as * as / 5.0);
    if (-hk < 100.0) {
      double b = std::sqrt(bs);
      bvn -= std::exp(-0.5 * hk) * std::sqrt(kTwoPi) * special::norm_cdf(-b / a) * b *
             (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
    }
    a *= 0.5;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      for (double sgn : {-1.0, 1.0}) {
        double xs = a * (1.0 + sgn * nodes[i]);
        xs *= xs;
        double rs = std::sqrt(1.0 - xs);
        double e = -0.5 * (bs / xs + hk);
        if (e > -100.0)
          bvn += a * weights[i] * std::exp(e) *
                 (std::exp(-hk * xs / (2.0 * (1.0 + rs) * (1.0 + rs))) / rs - (1.0 + c * xs * (1.0 + d * xs)));
      }
    }
    bvn = -bvn / kTwoPi;
  }
  if (r > 0.0) return bvn + special::norm_cdf(-std::max(h, k));
  bvn = -bvn;
  if (k > h) {
    if (h < 0.0) bvn += special::norm_cdf(k) - special::norm_cdf(h);
    else bvn += special::norm_cdf(-h) - special::norm_cdf(-k);
  }
  return bvn;
}

}  // namespace

double bivariate_normal_cdf(double x, double y, double rho) {
  if (std::isinf(x) || std::isinf(y)) {
    if (x == -std::numeric_limits<double>::infinity() || y == -std::numeric_limits<double>::infinity()) return 0.0;
    if (std::isinf(x) && std::isinf(y)) return 1.0;
    return std::isinf(x) ? special::norm_cdf(y) : special::norm_cdf(x);
  }
  return std::clamp(bvn_upper(-x, -y, rho), 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// N-dimensional elliptical copulas

namespace {

void check_args(const CorrMatrix& r, std::span<const double> u) {
  if (static_cast<Eigen::Index>(u.size()) != r.dim())
    throw DomainError("argument dimension does not match correlation matrix");
  for (double x : u)
    if (!open_unit(x)) throw DomainError("copula density evaluated on the boundary");
}

}  // namespace

double gaussian_copula_logdensity_nd(const CorrMatrix& r, std::span<const double> u) {
  check_args(r, u);
  Vector z(r.dim());
  for (Eigen::Index i = 0; i < r.dim(); ++i) z[i] = special::norm_quantile(u[static_cast<std::size_t>(i)]);
  Vector w = r.cholesky().triangularView<Eigen::Lower>().solve(z);
  return -0.5 * r.log_det() - 0.5 * (w.squaredNorm() - z.squaredNorm());
}

double t_copula_logdensity_nd(const CorrMatrix& r, double nu, std::span<const double> u) {
  if (!(nu > kMinNu)) throw ParamError("t copula degrees of freedom must exceed 2.001");
  check_args(r, u);
  const double n = static_cast<double>(r.dim());
  Vector z(r.dim());
  double marg = 0.0;
  for (Eigen::Index i = 0; i < r.dim(); ++i) {
    z[i] = special::t_quantile(u[static_cast<std::size_t>(i)], nu);
    marg += std::log1p(z[i] * z[i] / nu);
  }
  Vector w = r.cholesky().triangularView<Eigen::Lower>().solve(z);
  return std::lgamma(0.5 * (nu + n)) + (n - 1.0) * std::lgamma(0.5 * nu) - n * std::lgamma(0.5 * (nu + 1.0)) -
         0.5 * r.log_det() - 0.5 * (nu + n) * std::log1p(w.squaredNorm() / nu) + 0.5 * (nu + 1.0) * marg;
}

namespace {

// Genz separation-of-variables integrand for P(X <= b), X ~ N(0, L L').
double sov_integrand(const Matrix& chol, const Vector& b, std::span<const double> w) {
  const Eigen::Index n = b.size();
  Vector y(n);
  double prob = 1.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < i; ++j) s += chol(i, j) * y[j];
    double e = special::norm_cdf((b[i] - s) / chol(i, i));
    prob *= e;
    if (prob == 0.0) return 0.0;
    if (i + 1 < n) {
      double p = std::clamp(w[static_cast<std::size_t>(i)] * e, 1e-300, 1.0 - 1e-16);
      y[i] = special::norm_quantile(p);
    }
  }
  return prob;
}

// Randomized Richtmyer lattice estimate of E[f(w)], w ~ U[0,1]^dim.
template <class F>
double qmc_mean(F&& f, std::size_t dim, double tol, std::uint64_t seed) {
  static constexpr double primes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37};
  if (dim > std::size(primes)) throw DomainError("quasi-Monte-Carlo dimension too large");
  constexpr int kShifts = 12;
  Rng rng = make_rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<std::vector<double>> shifts(kShifts, std::vector<double>(dim));
  for (auto& s : shifts)
    for (auto& x : s) x = unif(rng);
  std::vector<double> sums(kShifts, 0.0);
  std::size_t done = 0, target = 1024;
  std::vector<double> w(dim);
  for (;;) {
    for (int s = 0; s < kShifts; ++s) {
      for (std::size_t k = done; k < target; ++k) {
        for (std::size_t d = 0; d < dim; ++d) {
          double x = static_cast<double>(k + 1) * std::sqrt(primes[d]) + shifts[static_cast<std::size_t>(s)][d];
          x -= std::floor(x);
          w[d] = std::abs(2.0 * x - 1.0);  // baker's transform
        }
        sums[static_cast<std::size_t>(s)] += f(std::span<const double>(w));
      }
    }
    done = target;
    double mean = 0.0;
    for (double s : sums) mean += s / static_cast<double>(done);
    mean /= kShifts;
    double var = 0.0;
    for (double s : sums) {
      double d = s / static_cast<double>(done) - mean;
      var += d * d;
    }
    double se = std::sqrt(var / (kShifts * (kShifts - 1.0)));
    if (3.0 * se < tol || target >= (1u << 20)) return mean;
    target *= 2;
  }
}

}  // namespace

double gaussian_copula_cdf_nd(const CorrMatrix& r, std::span<const double> u, double tol, std::uint64_t seed) {
  if (static_cast<Eigen::Index>(u.size()) != r.dim()) throw DomainError("argument dimension mismatch");
  for (double x : u)
    if (x <= 0.0) return 0.0;
  Vector b(r.dim());
  for (Eigen::Index i = 0; i < r.dim(); ++i) {
    double x = std::min(u[static_cast<std::size_t>(i)], 1.0);
    b[i] = x >= 1.0 ? std::numeric_limits<double>::infinity() : special::norm_quantile(x);
  }
  if (r.dim() == 1) return std::min(u[0], 1.0);
  if (r.dim() == 2) return bivariate_normal_cdf(b[0], b[1], r(1, 0));
  const Matrix& chol = r.cholesky();
  return qmc_mean([&](std::span<const double> w) { return sov_integrand(chol, b, w); },
                  static_cast<std::size_t>(r.dim() - 1), tol, seed);
}

double t_copula_cdf_nd(const CorrMatrix& r, double nu, std::span<const double> u, double tol, std::uint64_t seed) {
  if (!(nu > kMinNu)) throw ParamError("t copula degrees of freedom must exceed 2.001");
  if (static_cast<Eigen::Index>(u.size()) != r.dim()) throw DomainError("argument dimension mismatch");
  for (double x : u)
    if (x <= 0.0) return 0.0;
  if (r.dim() == 2) {
    return BivariateCopula(CopulaFamily::student_t(r(1, 0), nu)).cdf(u[0], u[1]);
  }
  Vector b(r.dim());
  for (Eigen::Index i = 0; i < r.dim(); ++i) {
    double x = std::min(u[static_cast<std::size_t>(i)], 1.0);
    b[i] = x >= 1.0 ? std::numeric_limits<double>::infinity() : special::t_quantile(x, nu);
  }
  const Matrix& chol = r.cholesky();
  // X = Z / sqrt(S / nu) with S ~ chi2(nu): average the normal SOV integrand over S.
  auto f = [&](std::span<const double> w) {
    double p = std::clamp(w[0], 1e-300, 1.0 - 1e-16);
    double s = 2.0 * boost::math::gamma_p_inv(0.5 * nu, p, special::Policy());
    Vector scaled = b * std::sqrt(s / nu);
    return sov_integrand(chol, scaled, w.subspan(1));
  };
  return qmc_mean(f, static_cast<std::size_t>(r.dim()), tol, seed);
}

}  // namespace cdg
