#include "cdg/residual_fit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cdg/errors.hpp"
#include "cdg/optim.hpp"
#include "cdg/special.hpp"

namespace cdg {

namespace {

constexpr double kUClamp = 1e-12;
constexpr double kMarginalNuMax = 300.0;
constexpr double kCopulaNuMax = 200.0;
constexpr double kLogGammaBound = 2.5;
constexpr double kCorrCap = 0.999;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

constexpr std::array<MenuItem, 8> kMenu{MenuItem::IC, MenuItem::CIC, MenuItem::GC, MenuItem::CGC,
                                        MenuItem::TC, MenuItem::CTC, MenuItem::PC, MenuItem::CPC};

double clamp_u(double u, long* clamp_count) {
  if (u < kUClamp || u > 1.0 - kUClamp || !std::isfinite(u)) {
    if (clamp_count) ++*clamp_count;
    return std::isfinite(u) ? std::clamp(u, kUClamp, 1.0 - kUClamp) : 0.5;
  }
  return u;
}

double inv_interval(double x, double lo, double hi) {
  double p = std::clamp((x - lo) / (hi - lo), 1e-9, 1.0 - 1e-9);
  return logit(p);
}

double inv_tanh(double r) { return std::atanh(std::clamp(r / kCorrCap, -1.0 + 1e-12, 1.0 - 1e-12)); }

// ---------------------------------------------------------------------------
// Parameter coding. Every coordinate is unconstrained; `Coord` records how it
// is mapped so fitted values can be checked against the box.

enum class Coord { Free, Logistic, Tanh };

bool near_box(Coord c, double z) {
  switch (c) {
    case Coord::Free: return false;
    case Coord::Logistic: return std::abs(z) > 13.8;  // within 1e-6 of an end
    case Coord::Tanh: return std::abs(z) > 7.25;
  }
  return false;
}

SkewTParams decode_marginal(const double* z) {
  return {to_interval(z[0], kMinNu, kMarginalNuMax), std::exp(to_interval(z[1], -kLogGammaBound, kLogGammaBound))};
}

void encode_marginal(const SkewTParams& p, double* z) {
  z[0] = inv_interval(p.nu, kMinNu, kMarginalNuMax);
  z[1] = inv_interval(std::log(p.gamma), -kLogGammaBound, kLogGammaBound);
}

CopulaFamily decode_edge(CopulaFamily f, const double* z) {
  switch (f.family) {
    case Family::Independent: break;
    case Family::Gaussian: f.theta = kCorrCap * std::tanh(z[0]); break;
    case Family::StudentT:
      f.theta = kCorrCap * std::tanh(z[0]);
      f.nu = to_interval(z[1], kMinNu, kCopulaNuMax);
      break;
    case Family::Clayton: f.theta = std::exp(to_interval(z[0], std::log(1e-4), std::log(50.0))); break;
    case Family::Gumbel: f.theta = 1.0 + std::exp(to_interval(z[0], std::log(1e-4), std::log(49.0))); break;
    case Family::Frank:
      f.theta = to_interval(z[0], -60.0, 60.0);
      if (std::abs(f.theta) < 1e-6) f.theta = f.theta < 0.0 ? -1e-6 : 1e-6;
      break;
    case Family::Plackett:
      f.theta = std::exp(to_interval(z[0], std::log(1e-3), std::log(1e3)));
      if (std::abs(f.theta - 1.0) < 1e-9) f.theta = 1.0 + 1e-9;
      break;
  }
  return f;
}

void encode_edge(const CopulaFamily& f, double* z) {
  switch (f.family) {
    case Family::Independent: break;
    case Family::Gaussian: z[0] = inv_tanh(f.theta); break;
    case Family::StudentT:
      z[0] = inv_tanh(f.theta);
      z[1] = inv_interval(f.nu, kMinNu, kCopulaNuMax);
      break;
    case Family::Clayton: z[0] = inv_interval(std::log(f.theta), std::log(1e-4), std::log(50.0)); break;
    case Family::Gumbel: z[0] = inv_interval(std::log(f.theta - 1.0), std::log(1e-4), std::log(49.0)); break;
    case Family::Frank: z[0] = inv_interval(f.theta, -60.0, 60.0); break;
    case Family::Plackett: z[0] = inv_interval(std::log(f.theta), std::log(1e-3), std::log(1e3)); break;
  }
}

void edge_coords(const CopulaFamily& f, std::vector<Coord>& out) {
  switch (f.family) {
    case Family::Independent: break;
    case Family::Gaussian: out.push_back(Coord::Tanh); break;
    case Family::StudentT:
      out.push_back(Coord::Tanh);
      out.push_back(Coord::Logistic);
      break;
    default: out.push_back(Coord::Logistic); break;
  }
}

// Starting values for bivariate fits, in natural parameters.
std::vector<CopulaFamily> edge_grid(const CopulaFamily& f) {
  std::vector<CopulaFamily> out;
  auto with = [&](double theta, double nu = 0.0) {
    CopulaFamily g = f;
    g.theta = theta;
    g.nu = nu;
    out.push_back(g);
  };
  switch (f.family) {
    case Family::Independent: out.push_back(f); break;
    case Family::Gaussian:
      for (double r : {-0.6, -0.3, 0.0, 0.3, 0.6}) with(r);
      break;
    case Family::StudentT:
      for (double r : {-0.6, -0.3, 0.0, 0.3, 0.6})
        for (double nu : {4.0, 10.0, 30.0}) with(r, nu);
      break;
    case Family::Clayton:
      for (double t : {0.1, 0.5, 1.5, 4.0}) with(t);
      break;
    case Family::Gumbel:
      for (double t : {1.05, 1.3, 2.0, 3.5}) with(t);
      break;
    case Family::Frank:
      for (double t : {-8.0, -3.0, -1.0, 1.0, 3.0, 8.0}) with(t);
      break;
    case Family::Plackett:
      for (double t : {0.1, 0.4, 2.5, 10.0}) with(t);
      break;
  }
  return out;
}

// Shape of the copula part: which alternative and, for pair copulas, the families.
struct CopulaShape {
  std::size_t kind = 0;  // index into ResidualCopula
  PairCopula pair;
};

CopulaShape shape_of(const ResidualCopula& c) {
  CopulaShape s{c.index(), {}};
  if (auto p = std::get_if<PairCopula>(&c)) s.pair = *p;
  return s;
}

int copula_size(const CopulaShape& s, Eigen::Index n) {
  const int pairs = static_cast<int>(n * (n - 1) / 2);
  switch (s.kind) {
    case 0: return 0;
    case 1: return pairs;
    case 2: return pairs + 1;
    default: {
      int k = 0;
      for (const auto& e : s.pair.edges) k += e.param_count();
      return k;
    }
  }
}

struct Layout {
  Eigen::Index n = 0;
  CopulaShape shape;
  bool addin = false;
  int copula_offset = 0;
  int copula_size = 0;
  int addin_offset = 0;
  int addin_size = 0;
  int total = 0;
  std::vector<Coord> coords;

  Layout(Eigen::Index dim, CopulaShape s, bool with_addin) : n(dim), shape(std::move(s)), addin(with_addin) {
    copula_offset = static_cast<int>(2 * n);
    copula_size = cdg::copula_size(shape, n);
    addin_offset = copula_offset + copula_size;
    addin_size = addin ? static_cast<int>(n * (n + 1) / 2 - 1) : 0;
    total = addin_offset + addin_size;
    for (Eigen::Index i = 0; i < n; ++i) coords.insert(coords.end(), {Coord::Logistic, Coord::Logistic});
    switch (shape.kind) {
      case 0: break;
      case 1: coords.insert(coords.end(), static_cast<std::size_t>(copula_size), Coord::Tanh); break;
      case 2:
        coords.insert(coords.end(), static_cast<std::size_t>(copula_size - 1), Coord::Tanh);
        coords.push_back(Coord::Logistic);
        break;
      default:
        for (const auto& e : shape.pair.edges) edge_coords(e, coords);
    }
    coords.insert(coords.end(), static_cast<std::size_t>(addin_size), Coord::Free);
  }
};

ResidualCopula decode_copula(const CopulaShape& s, Eigen::Index n, const double* z) {
  const auto pairs = static_cast<std::size_t>(n * (n - 1) / 2);
  switch (s.kind) {
    case 0: return IndependentCopula{};
    case 1:
    case 2: {
      std::vector<double> partial(pairs);
      for (std::size_t k = 0; k < pairs; ++k) partial[k] = kCorrCap * std::tanh(z[k]);
      CorrMatrix sigma(corr_from_partials(partial, n));
      if (s.kind == 1) return GaussianCopula{sigma};
      return StudentTCopula{sigma, to_interval(z[pairs], kMinNu, kCopulaNuMax)};
    }
    default: {
      PairCopula pc = s.pair;
      int off = 0;
      for (auto& e : pc.edges) {
        e = decode_edge(e, z + off);
        off += e.param_count();
      }
      return pc;
    }
  }
}

void encode_copula(const ResidualCopula& c, double* z) {
  auto sigma_part = [&](const CorrMatrix& s) {
    auto p = partials_from_corr(s.matrix());
    for (std::size_t k = 0; k < p.size(); ++k) z[k] = inv_tanh(p[k]);
    return p.size();
  };
  if (auto g = std::get_if<GaussianCopula>(&c)) {
    sigma_part(g->sigma);
  } else if (auto t = std::get_if<StudentTCopula>(&c)) {
    std::size_t k = sigma_part(t->sigma);
    z[k] = inv_interval(t->nu, kMinNu, kCopulaNuMax);
  } else if (auto p = std::get_if<PairCopula>(&c)) {
    int off = 0;
    for (const auto& e : p->edges) {
      encode_edge(e, z + off);
      off += e.param_count();
    }
  }
}

Matrix decode_addin(Eigen::Index n, const double* z) {
  Matrix l = Matrix::Zero(n, n);
  l(0, 0) = 1.0;
  int k = 0;
  for (Eigen::Index i = 1; i < n; ++i) {
    for (Eigen::Index j = 0; j < i; ++j) l(i, j) = z[k++];
    l(i, i) = std::exp(z[k++]);
  }
  return l;
}

void encode_addin(const Matrix& l, double* z) {
  int k = 0;
  for (Eigen::Index i = 1; i < l.rows(); ++i) {
    for (Eigen::Index j = 0; j < i; ++j) z[k++] = l(i, j);
    z[k++] = std::log(l(i, i));
  }
}

ResidualModel decode_model(const Layout& lay, const Vector& z) {
  ResidualModel m;
  for (Eigen::Index i = 0; i < lay.n; ++i) m.marginals.push_back(decode_marginal(z.data() + 2 * i));
  m.copula = decode_copula(lay.shape, lay.n, z.data() + lay.copula_offset);
  if (lay.addin) m.addin = AddInTransform{decode_addin(lay.n, z.data() + lay.addin_offset)};
  return m;
}

Vector encode_model(const Layout& lay, const ResidualModel& m) {
  Vector z = Vector::Zero(lay.total);
  for (Eigen::Index i = 0; i < lay.n; ++i) encode_marginal(m.marginals[static_cast<std::size_t>(i)], z.data() + 2 * i);
  encode_copula(m.copula, z.data() + lay.copula_offset);
  if (lay.addin) encode_addin(m.addin ? m.addin->lower : Matrix::Identity(lay.n, lay.n), z.data() + lay.addin_offset);
  return z;
}

// ---------------------------------------------------------------------------
// Copula log-likelihood summed over the rows of U.

double t_log_const(double nu, double n, double log_det) {
  return std::lgamma(0.5 * (nu + n)) + (n - 1.0) * std::lgamma(0.5 * nu) - n * std::lgamma(0.5 * (nu + 1.0)) -
         0.5 * log_det;
}

double copula_sum(const ResidualCopula& c, const Matrix& u, long* clamp_count) {
  const Eigen::Index T = u.rows(), n = u.cols();
  if (std::holds_alternative<IndependentCopula>(c)) return 0.0;
  if (auto g = std::get_if<GaussianCopula>(&c)) {
    Matrix z(n, T);
    for (Eigen::Index t = 0; t < T; ++t)
      for (Eigen::Index i = 0; i < n; ++i) z(i, t) = special::norm_quantile(u(t, i));
    Matrix w = g->sigma.cholesky().triangularView<Eigen::Lower>().solve(z);
    return -0.5 * static_cast<double>(T) * g->sigma.log_det() - 0.5 * (w.squaredNorm() - z.squaredNorm());
  }
  if (auto tc = std::get_if<StudentTCopula>(&c)) {
    const double nu = tc->nu, dn = static_cast<double>(n);
    Matrix z(n, T);
    double marg = 0.0;
    for (Eigen::Index t = 0; t < T; ++t)
      for (Eigen::Index i = 0; i < n; ++i) {
        double q = special::t_quantile(u(t, i), nu);
        z(i, t) = q;
        marg += std::log1p(q * q / nu);
      }
    Matrix w = tc->sigma.cholesky().triangularView<Eigen::Lower>().solve(z);
    double radial = 0.0;
    for (Eigen::Index t = 0; t < T; ++t) radial += std::log1p(w.col(t).squaredNorm() / nu);
    return static_cast<double>(T) * t_log_const(nu, dn, tc->sigma.log_det()) - 0.5 * (nu + dn) * radial +
           0.5 * (nu + 1.0) * marg;
  }
  const auto& pc = std::get<PairCopula>(c);
  if (n != 3) throw ParamError("pair copulas are three-dimensional");
  PairCopulaEvaluator ev(pc);
  double total = 0.0;
  for (Eigen::Index t = 0; t < T; ++t) total += ev.logpdf(u(t, 0), u(t, 1), u(t, 2), clamp_count);
  return total;
}

// ---------------------------------------------------------------------------
// Likelihood with cached intermediate values, evaluated block by block.

constexpr double kDiffStep = 1e-6;

class Engine {
 public:
  Engine(const Matrix& x, Layout layout) : x_(x), lay_(std::move(layout)) {}

  const Layout& layout() const { return lay_; }
  const Matrix& u() const { return u_; }

  /// Log-likelihood at z; refreshes the cached transformed data, CDF values
  /// and marginal log-densities. NaN when any term is non-finite.
  double set(const Vector& z, long* clamp_count = nullptr) {
    cop_ = decode_copula(lay_.shape, lay_.n, z.data() + lay_.copula_offset);
    y_ = transformed(z, log_det_);
    u_.resize(x_.rows(), lay_.n);
    lf_.resize(x_.rows(), lay_.n);
    for (Eigen::Index i = 0; i < lay_.n; ++i) marginal_column(i, z.data() + 2 * i, y_, u_, lf_, clamp_count);
    return total(copula_sum(cop_, u_, clamp_count), lf_.sum(), log_det_);
  }

  /// Log-likelihood and its forward-difference gradient. Marginal and copula
  /// coordinates reuse the cached columns; add-in coordinates need a full pass.
  double value_and_gradient(const Vector& z, Vector& grad) {
    const double f = set(z);
    grad.resize(z.size());
    if (!std::isfinite(f)) return f;
    const double lf_sum = lf_.sum();
    Matrix u = u_, lf = lf_;
    for (int j = 0; j < lay_.total; ++j) {
      double h = kDiffStep;
      for (int attempt = 0; attempt < 2; ++attempt, h = -h) {
        Vector zj = z;
        zj[j] += h;
        double fj;
        if (j < lay_.copula_offset) {
          const Eigen::Index i = j / 2;
          marginal_column(i, zj.data() + 2 * i, y_, u, lf, nullptr);
          fj = total(copula_sum(cop_, u, nullptr), lf_sum - lf_.col(i).sum() + lf.col(i).sum(), log_det_);
          u.col(i) = u_.col(i);
          lf.col(i) = lf_.col(i);
        } else if (j < lay_.addin_offset) {
          ResidualCopula c = decode_copula(lay_.shape, lay_.n, zj.data() + lay_.copula_offset);
          fj = total(copula_sum(c, u_, nullptr), lf_sum, log_det_);
        } else {
          double log_det = 0.0;
          Matrix y = transformed(zj, log_det);
          for (Eigen::Index i = 0; i < lay_.n; ++i) marginal_column(i, zj.data() + 2 * i, y, u, lf, nullptr);
          fj = total(copula_sum(cop_, u, nullptr), lf.sum(), log_det);
          u = u_;
          lf = lf_;
        }
        if (std::isfinite(fj)) {
          grad[j] = (fj - f) / h;
          break;
        }
        if (attempt == 1) return kNaN;
      }
    }
    return f;
  }

 private:
  double total(double copula, double marginals, double log_det) const {
    double v = copula + marginals - static_cast<double>(x_.rows()) * log_det;
    return std::isfinite(v) ? v : kNaN;
  }

  Matrix transformed(const Vector& z, double& log_det) const {
    if (!lay_.addin) {
      log_det = 0.0;
      return x_;
    }
    Matrix l = decode_addin(lay_.n, z.data() + lay_.addin_offset);
    log_det = l.diagonal().array().log().sum();
    return l.triangularView<Eigen::Lower>().solve(x_.transpose()).transpose();
  }

  static void marginal_column(Eigen::Index i, const double* zm, const Matrix& y, Matrix& u, Matrix& lf,
                              long* clamp_count) {
    SkewT m(decode_marginal(zm));
    for (Eigen::Index t = 0; t < y.rows(); ++t) {
      double v = y(t, i);
      lf(t, i) = m.logpdf(v);
      u(t, i) = clamp_u(m.cdf(v), clamp_count);
    }
  }

  const Matrix& x_;
  Layout lay_;
  ResidualCopula cop_;
  Matrix y_, u_, lf_;
  double log_det_ = 0.0;
};

/// Joint maximization from z0; returns the maximizer.
OptimResult maximize(Engine& e, const Vector& z0, const FitOptions& opt) {
  QuasiNewtonOptions qn;
  qn.max_iter = opt.max_iterations;
  double f0 = e.set(z0);
  qn.function_tolerance = 0.1 * opt.tolerance / std::max(1.0, std::abs(f0));
  qn.parameter_tolerance = 1e-12;
  return quasi_newton(
      [&](const Vector& z, double& value, Vector* gradient) {
        if (gradient) {
          value = -e.value_and_gradient(z, *gradient);
          *gradient = -*gradient;
        } else {
          value = -e.set(z);
        }
        return std::isfinite(value);
      },
      z0, qn);
}

Matrix normal_scores_corr(const Matrix& u) {
  Matrix z(u.rows(), u.cols());
  for (Eigen::Index t = 0; t < u.rows(); ++t)
    for (Eigen::Index i = 0; i < u.cols(); ++i) z(t, i) = special::norm_quantile(u(t, i));
  Matrix c = z.rowwise() - z.colwise().mean();
  return cov_to_corr(c.transpose() * c);
}

Matrix pearson_corr(const Matrix& x) {
  Matrix c = x.rowwise() - x.colwise().mean();
  return cov_to_corr(c.transpose() * c);
}

constexpr std::array<std::array<int, 2>, 3> kPairs{{{0, 1}, {0, 2}, {1, 2}}};

int pair_index(const std::array<int, 2>& p) {
  for (int k = 0; k < 3; ++k)
    if (kPairs[static_cast<std::size_t>(k)] == p) return k;
  throw ParamError("unknown variable pair");
}

}  // namespace

// ---------------------------------------------------------------------------

std::string to_string(MenuItem m) {
  switch (m) {
    case MenuItem::IC: return "IC";
    case MenuItem::CIC: return "CIC";
    case MenuItem::GC: return "GC";
    case MenuItem::CGC: return "CGC";
    case MenuItem::TC: return "TC";
    case MenuItem::CTC: return "CTC";
    case MenuItem::PC: return "PC";
    case MenuItem::CPC: return "CPC";
  }
  return "?";
}

MenuItem parse_menu_item(const std::string& name) {
  for (auto m : kMenu)
    if (to_string(m) == name) return m;
  throw ConfigError("unknown menu item '" + name + "'");
}

const std::array<MenuItem, 8>& all_menu_items() { return kMenu; }

bool has_addin(MenuItem m) {
  return m == MenuItem::CIC || m == MenuItem::CGC || m == MenuItem::CTC || m == MenuItem::CPC;
}

MenuItem base_item(MenuItem m) {
  switch (m) {
    case MenuItem::CIC: return MenuItem::IC;
    case MenuItem::CGC: return MenuItem::GC;
    case MenuItem::CTC: return MenuItem::TC;
    case MenuItem::CPC: return MenuItem::PC;
    default: return m;
  }
}

bool uses_pair_copula(MenuItem m) { return m == MenuItem::PC || m == MenuItem::CPC; }

AddInTransform AddInTransform::identity(Eigen::Index n) { return {Matrix::Identity(n, n)}; }

void AddInTransform::validate() const {
  const Eigen::Index n = lower.rows();
  if (n == 0 || lower.cols() != n) throw MatrixError("add-in matrix must be square");
  if (lower(0, 0) != 1.0) throw MatrixError("add-in entry (1,1) must be 1");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(lower(i, i) > 0.0)) throw MatrixError("add-in diagonal must be positive");
    for (Eigen::Index j = i + 1; j < n; ++j)
      if (lower(i, j) != 0.0) throw MatrixError("add-in matrix must be lower triangular");
  }
  if (!lower.allFinite()) throw MatrixError("add-in matrix has non-finite entries");
}

double AddInTransform::log_det() const { return lower.diagonal().array().log().sum(); }

int AddInTransform::free_parameters() const { return static_cast<int>(lower.rows() * (lower.rows() + 1) / 2 - 1); }

void ResidualModel::validate() const {
  if (marginals.empty()) throw ParamError("model has no marginals");
  for (const auto& m : marginals) cdg::validate(m);
  const Eigen::Index n = dim();
  if (auto g = std::get_if<GaussianCopula>(&copula)) {
    if (g->sigma.dim() != n) throw ParamError("copula dimension does not match the marginals");
  } else if (auto t = std::get_if<StudentTCopula>(&copula)) {
    if (t->sigma.dim() != n) throw ParamError("copula dimension does not match the marginals");
    if (!(t->nu > kMinNu)) throw ParamError("t copula degrees of freedom must exceed 2.001");
  } else if (auto p = std::get_if<PairCopula>(&copula)) {
    if (n != 3) throw ParamError("pair copulas are three-dimensional");
    cdg::validate(*p);
  }
  if (addin) {
    if (addin->lower.rows() != n) throw ParamError("add-in dimension does not match the marginals");
    addin->validate();
  }
}

int parameter_count(const ResidualModel& m) {
  return Layout(m.dim(), shape_of(m.copula), m.addin.has_value()).total;
}

double base_logdensity(const ResidualModel& m, std::span<const double> x, long* clamp_count) {
  const Eigen::Index n = m.dim();
  if (static_cast<Eigen::Index>(x.size()) != n) throw DomainError("argument dimension does not match the model");
  std::vector<double> u(static_cast<std::size_t>(n));
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    SkewT d(m.marginals[static_cast<std::size_t>(i)]);
    double xi = x[static_cast<std::size_t>(i)];
    total += d.logpdf(xi);
    u[static_cast<std::size_t>(i)] = clamp_u(d.cdf(xi), clamp_count);
  }
  if (auto g = std::get_if<GaussianCopula>(&m.copula)) {
    total += gaussian_copula_logdensity_nd(g->sigma, u);
  } else if (auto t = std::get_if<StudentTCopula>(&m.copula)) {
    total += t_copula_logdensity_nd(t->sigma, t->nu, u);
  } else if (auto p = std::get_if<PairCopula>(&m.copula)) {
    total += PairCopulaEvaluator(*p).logpdf(u[0], u[1], u[2], clamp_count);
  }
  return total;
}

double addin_logdensity(const ResidualModel& m, std::span<const double> x, long* clamp_count) {
  if (!m.addin) throw ParamError("model has no add-in");
  const Matrix& l = m.addin->lower;
  if (!(l.diagonal().array() > 0.0).all()) throw MatrixError("add-in matrix is singular");
  Vector y = l.triangularView<Eigen::Lower>().solve(Eigen::Map<const Vector>(x.data(), static_cast<Eigen::Index>(x.size())));
  return base_logdensity(m, std::span<const double>(y.data(), static_cast<std::size_t>(y.size())), clamp_count) -
         m.addin->log_det();
}

double residual_logdensity(const ResidualModel& m, std::span<const double> x, long* clamp_count) {
  return m.addin ? addin_logdensity(m, x, clamp_count) : base_logdensity(m, x, clamp_count);
}

Matrix leelong_transform(const Matrix& s) {
  if (s.rows() != s.cols()) throw MatrixError("covariance must be square");
  Eigen::SelfAdjointEigenSolver<Matrix> es(s);
  if (es.info() != Eigen::Success || !(es.eigenvalues().minCoeff() > 0.0))
    throw MatrixError("covariance is not positive definite");
  Matrix r = es.eigenvectors() * es.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
  return 0.5 * (r + r.transpose());
}

AddInTransform addin_from_target(const Matrix& j, const Matrix& s_y) {
  if (j.rows() != s_y.rows() || j.rows() != j.cols() || s_y.rows() != s_y.cols())
    throw MatrixError("target and source covariances must be square and of equal size");
  if (std::abs(j(0, 0) - 1.0) > 1e-12) throw MatrixError("target covariance must have J(1,1) = 1");
  if (std::abs(s_y(0, 0) - 1.0) > 1e-12) throw MatrixError("source covariance must have S_Y(1,1) = 1");
  Eigen::LLT<Matrix> lj(j), ls(s_y);
  if (lj.info() != Eigen::Success || ls.info() != Eigen::Success) throw MatrixError("covariance is not positive definite");
  const Eigen::Index n = j.rows();
  Matrix ls_inv = ls.matrixL().solve(Matrix::Identity(n, n));
  Matrix l = Matrix(lj.matrixL()) * ls_inv.triangularView<Eigen::Lower>();
  l = l.triangularView<Eigen::Lower>();
  l(0, 0) = 1.0;  // exact, removing the rounding of sqrt(1) / sqrt(1)
  return AddInTransform{l};
}

Matrix corr_from_partials(std::span<const double> partials, Eigen::Index n) {
  if (partials.size() != static_cast<std::size_t>(n * (n - 1) / 2)) throw ParamError("wrong number of partial correlations");
  Matrix w = Matrix::Zero(n, n);
  w(0, 0) = 1.0;
  std::size_t k = 0;
  for (Eigen::Index i = 1; i < n; ++i) {
    double used = 0.0;
    for (Eigen::Index j = 0; j < i; ++j) {
      w(i, j) = partials[k++] * std::sqrt(std::max(0.0, 1.0 - used));
      used += w(i, j) * w(i, j);
    }
    w(i, i) = std::sqrt(std::max(0.0, 1.0 - used));
  }
  Matrix r = w * w.transpose();
  r = 0.5 * (r + r.transpose());
  r.diagonal().setOnes();
  return r;
}

std::vector<double> partials_from_corr(const Matrix& r) {
  Eigen::LLT<Matrix> llt(r);
  if (llt.info() != Eigen::Success) throw MatrixError("correlation matrix is not positive definite");
  Matrix w = llt.matrixL();
  std::vector<double> out;
  for (Eigen::Index i = 1; i < r.rows(); ++i) {
    double used = 0.0;
    for (Eigen::Index j = 0; j < i; ++j) {
      double rest = std::sqrt(std::max(1e-300, 1.0 - used));
      out.push_back(std::clamp(w(i, j) / rest, -1.0, 1.0));
      used += w(i, j) * w(i, j);
    }
  }
  return out;
}

std::string FitResult::spec() const {
  if (auto p = std::get_if<PairCopula>(&model.copula)) return spec_string(*p);
  return {};
}

CopulaFamily fit_bivariate(const CopulaFamily& family, std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw ParamError("pseudo-observation lengths differ");
  if (family.param_count() == 0) return family;
  auto loglik = [&](const CopulaFamily& f) {
    BivariateCopula c(f);
    double total = 0.0;
    for (std::size_t t = 0; t < u.size(); ++t) total += c.logpdf(u[t], v[t]);
    return std::isfinite(total) ? total : kNaN;
  };
  CopulaFamily best = family;
  double best_ll = -std::numeric_limits<double>::infinity();
  for (const auto& g : edge_grid(family)) {
    double ll = loglik(g);
    if (ll > best_ll) {
      best_ll = ll;
      best = g;
    }
  }
  Vector z0(family.param_count());
  encode_edge(best, z0.data());
  NelderMeadOptions nm;
  nm.max_restarts = 1;
  OptimResult r = nelder_mead([&](const Vector& z) { return -loglik(decode_edge(family, z.data())); }, z0, nm);
  return decode_edge(family, r.x.data());
}

// ---------------------------------------------------------------------------

namespace {

bool same_template(const PairCopula& a, const PairCopula& b) {
  if (a.pivot != b.pivot) return false;
  for (std::size_t i = 0; i < 3; ++i)
    if (a.edges[i].family != b.edges[i].family || a.edges[i].rotation != b.edges[i].rotation) return false;
  return true;
}

// Maximizes from the best of the candidate starting points.
FitResult run_fit(MenuItem item, Engine& e, const std::vector<Vector>& candidates, const FitOptions& opt) {
  Vector start;
  double best_ll = -std::numeric_limits<double>::infinity();
  for (const auto& z : candidates) {
    double ll = e.set(z);
    if (std::isfinite(ll) && ll > best_ll) {
      best_ll = ll;
      start = z;
    }
  }
  if (start.size() == 0) throw FitError(to_string(item) + " fit has no finite starting point");
  OptimResult r = maximize(e, start, opt);

  FitResult res;
  res.item = item;
  long clamps = 0;
  res.loglik = e.set(r.x, &clamps);
  res.clamp_count = clamps;
  res.model = decode_model(e.layout(), r.x);
  res.k = e.layout().total;
  res.n = static_cast<std::size_t>(e.u().rows());
  res.aic = -2.0 * res.loglik + 2.0 * res.k;
  res.bic = -2.0 * res.loglik + res.k * std::log(static_cast<double>(res.n));
  res.converged = r.converged;
  res.iterations = r.iterations;
  for (int i = 0; i < e.layout().total; ++i)
    if (near_box(e.layout().coords[static_cast<std::size_t>(i)], r.x[i])) res.at_boundary = true;
  if (!std::isfinite(res.loglik)) throw FitError(to_string(item) + " fit ended at a non-finite log-likelihood");
  if (!r.converged)
    throw FitError(to_string(item) + " fit did not converge in " + std::to_string(r.iterations) +
                   " iterations (log-likelihood " + std::to_string(res.loglik) + ")");
  return res;
}

}  // namespace

ResidualFitter::ResidualFitter(Matrix data, FitOptions options) : data_(std::move(data)), options_(options) {
  if (data_.rows() < 10) throw FitError("residual fit needs at least 10 observations");
  if (data_.cols() < 1) throw FitError("residual fit needs at least one column");
  if (!data_.allFinite()) throw FitError("residual data contain non-finite values");

  Layout lay(data_.cols(), CopulaShape{}, false);
  Engine e(data_, lay);
  // Marginal starting points: best degrees of freedom on a short grid, symmetric.
  Vector z(lay.total);
  for (Eigen::Index i = 0; i < lay.n; ++i) {
    double best_ll = -std::numeric_limits<double>::infinity();
    for (double nu : {4.0, 8.0, 30.0}) {
      SkewT d({nu, 1.0});
      double ll = 0.0;
      for (Eigen::Index t = 0; t < data_.rows(); ++t) ll += d.logpdf(data_(t, i));
      if (ll > best_ll) {
        best_ll = ll;
        encode_marginal({nu, 1.0}, z.data() + 2 * i);
      }
    }
  }
  ic_ = run_fit(MenuItem::IC, e, {z}, options_);
  ic_u_ = e.u();
}

CopulaFamily ResidualFitter::edge_fit(int pair, const CopulaFamily& family) const {
  auto key = std::make_pair(pair, family_code(family));
  {
    std::lock_guard lock(edge_mutex_);
    if (auto it = edge_cache_.find(key); it != edge_cache_.end()) return it->second;
  }
  const auto& p = kPairs[static_cast<std::size_t>(pair)];
  std::vector<double> a(ic_u_.col(p[0]).begin(), ic_u_.col(p[0]).end());
  std::vector<double> b(ic_u_.col(p[1]).begin(), ic_u_.col(p[1]).end());
  CopulaFamily fitted = fit_bivariate(family, a, b);
  std::lock_guard lock(edge_mutex_);
  edge_cache_.emplace(key, fitted);
  return fitted;
}

FitResult ResidualFitter::fit(MenuItem item, const std::optional<PairCopula>& spec, const FitResult* nested) const {
  const Eigen::Index n = data_.cols();
  if (uses_pair_copula(item) && !spec && !(nested && std::holds_alternative<PairCopula>(nested->model.copula)))
    throw ParamError("pair-copula fits need a spec");
  if (uses_pair_copula(item) && n != 3) throw ParamError("pair copulas are three-dimensional");
  if (item == MenuItem::IC) return ic_;

  if (has_addin(item)) {
    MenuItem base = base_item(item);
    FitResult own;
    if (nested == nullptr) {
      own = fit(base, spec);
      nested = &own;
    }
    if (nested->item != base) throw ParamError("nested fit must be the base menu item");
    if (spec && uses_pair_copula(item) && !same_template(std::get<PairCopula>(nested->model.copula), *spec))
      throw ParamError("nested fit uses a different pair-copula spec");

    Layout lay(n, shape_of(nested->model.copula), true);
    Engine e(data_, lay);
    ResidualModel start = nested->model;
    start.addin = AddInTransform::identity(n);
    std::vector<Vector> candidates{encode_model(lay, start)};
    // Alternative start mapping the base model's correlation onto the target.
    std::optional<Matrix> s_y;
    if (std::holds_alternative<IndependentCopula>(start.copula)) s_y = Matrix::Identity(n, n);
    if (auto g = std::get_if<GaussianCopula>(&start.copula)) s_y = g->sigma.matrix();
    if (auto t = std::get_if<StudentTCopula>(&start.copula)) s_y = t->sigma.matrix();
    if (s_y) {
      Matrix j = options_.target == AddInTarget::Identity ? Matrix::Identity(n, n) : pearson_corr(data_);
      start.addin = addin_from_target(j, *s_y);
      candidates.push_back(encode_model(lay, start));
    }
    return run_fit(item, e, candidates, options_);
  }

  ResidualModel start = ic_.model;
  std::vector<Vector> candidates;
  if (item == MenuItem::GC || item == MenuItem::TC) {
    Matrix ns = normal_scores_corr(ic_u_);
    for (const Matrix& s : {Matrix(Matrix::Identity(n, n)), ns}) {
      if (item == MenuItem::GC) {
        start.copula = GaussianCopula{CorrMatrix(s)};
        candidates.push_back(encode_model(Layout(n, shape_of(start.copula), false), start));
      } else {
        for (double nu : {4.0, 8.0, 20.0, 60.0}) {
          start.copula = StudentTCopula{CorrMatrix(s), nu};
          candidates.push_back(encode_model(Layout(n, shape_of(start.copula), false), start));
        }
      }
    }
  } else {
    // Sequential edge estimates on the independence-stage pseudo-observations.
    PairCopula pc = *spec;
    const EdgeLayout el = edge_layout(pc.pivot);
    pc.edges[0] = edge_fit(pair_index(el.unconditional[0]), pc.edges[0]);
    pc.edges[1] = edge_fit(pair_index(el.unconditional[1]), pc.edges[1]);
    pc.edges[2] = CopulaFamily::independent();
    PairCopulaEvaluator ev(pc);
    std::vector<double> a(static_cast<std::size_t>(data_.rows())), b(a.size());
    for (Eigen::Index t = 0; t < data_.rows(); ++t) {
      auto args = ev.conditional_arguments(ic_u_(t, 0), ic_u_(t, 1), ic_u_(t, 2));
      a[static_cast<std::size_t>(t)] = args[0];
      b[static_cast<std::size_t>(t)] = args[1];
    }
    pc.edges[2] = fit_bivariate(spec->edges[2], a, b);
    start.copula = pc;
    candidates.push_back(encode_model(Layout(n, shape_of(start.copula), false), start));
  }
  Layout lay(n, shape_of(start.copula), false);
  Engine e(data_, lay);
  return run_fit(item, e, candidates, options_);
}

FitResult fit_residual_model(const Matrix& data, MenuItem item, const std::optional<PairCopula>& spec,
                             const FitOptions& options) {
  return ResidualFitter(data, options).fit(item, spec);
}

// ---------------------------------------------------------------------------

ModelMoments model_moments(const ResidualModel& m, int sections, double bound) {
  m.validate();
  const Eigen::Index n = m.dim();
  if (n < 1 || n > 3) throw ParamError("grid moments are available for up to three dimensions");
  if (sections < 2) throw ParamError("grid needs at least two sections per axis");
  const int s = sections;
  const double h = 2.0 * bound / s;

  std::vector<double> y(static_cast<std::size_t>(s)), u(y.size()), lphi(y.size());
  for (int k = 0; k < s; ++k) {
    y[k] = -bound + (k + 0.5) * h;
    u[k] = std::clamp(special::norm_cdf(y[k]), kUClamp, 1.0 - kUClamp);
    lphi[k] = special::norm_logpdf(y[k]);
  }
  std::vector<std::vector<double>> xs(static_cast<std::size_t>(n), std::vector<double>(y.size()));
  for (Eigen::Index i = 0; i < n; ++i) {
    SkewT d(m.marginals[static_cast<std::size_t>(i)]);
    for (int k = 0; k < s; ++k) xs[i][k] = d.quantile(u[k]);
  }

  // Copula log-density at grid index (k0, k1, k2).
  std::function<double(const std::array<int, 3>&)> logc;
  std::vector<double> tz;
  Matrix table0, table1, cond0, cond1;
  std::optional<PairCopulaEvaluator> ev;
  if (std::holds_alternative<IndependentCopula>(m.copula)) {
    logc = [](const std::array<int, 3>&) { return 0.0; };
  } else if (auto g = std::get_if<GaussianCopula>(&m.copula)) {
    const Matrix& l = g->sigma.cholesky();
    const double ld = g->sigma.log_det();
    logc = [&, ld](const std::array<int, 3>& k) {
      double w[3], ww = 0.0, zz = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        double zi = y[k[i]], acc = zi;
        for (Eigen::Index j = 0; j < i; ++j) acc -= l(i, j) * w[j];
        w[i] = acc / l(i, i);
        ww += w[i] * w[i];
        zz += zi * zi;
      }
      return -0.5 * ld - 0.5 * (ww - zz);
    };
  } else if (auto t = std::get_if<StudentTCopula>(&m.copula)) {
    const Matrix& l = t->sigma.cholesky();
    const double nu = t->nu, dn = static_cast<double>(n), c0 = t_log_const(nu, dn, t->sigma.log_det());
    tz.resize(y.size());
    for (int k = 0; k < s; ++k) tz[k] = special::t_quantile(u[k], nu);
    logc = [&, nu, dn, c0](const std::array<int, 3>& k) {
      double w[3], ww = 0.0, marg = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        double zi = tz[k[i]], acc = zi;
        for (Eigen::Index j = 0; j < i; ++j) acc -= l(i, j) * w[j];
        w[i] = acc / l(i, i);
        ww += w[i] * w[i];
        marg += std::log1p(zi * zi / nu);
      }
      return c0 - 0.5 * (nu + dn) * std::log1p(ww / nu) + 0.5 * (nu + 1.0) * marg;
    };
  } else {
    const auto& pc = std::get<PairCopula>(m.copula);
    ev.emplace(pc);
    const EdgeLayout& el = ev->layout();
    auto tabulate = [&](int e, Matrix& lt, Matrix& ct) {
      lt.resize(s, s);
      ct.resize(s, s);
      for (int a = 0; a < s; ++a)
        for (int b = 0; b < s; ++b) {
          lt(a, b) = ev->edge(e).logpdf(u[a], u[b]);
          ct(a, b) = ev->conditional_cdf(e, u[a], u[b]);
        }
    };
    tabulate(0, table0, cond0);
    tabulate(1, table1, cond1);
    const auto p0 = el.unconditional[0], p1 = el.unconditional[1];
    logc = [&, p0, p1](const std::array<int, 3>& k) {
      int a0 = k[p0[0]], b0 = k[p0[1]], a1 = k[p1[0]], b1 = k[p1[1]];
      return table0(a0, b0) + table1(a1, b1) + ev->conditional_logpdf(cond0(a0, b0), cond1(a1, b1));
    };
  }

  double mass = 0.0;
  Vector s1 = Vector::Zero(n);
  Matrix s2 = Matrix::Zero(n, n);
  const long total = static_cast<long>(std::pow(s, static_cast<double>(n)));
  std::array<int, 3> k{0, 0, 0};
  double x[3];
  for (long idx = 0; idx < total; ++idx) {
    long rem = idx;
    double lw = 0.0;
    for (Eigen::Index i = n - 1; i >= 0; --i) {
      k[i] = static_cast<int>(rem % s);
      rem /= s;
      lw += lphi[k[i]];
      x[i] = xs[i][k[i]];
    }
    double w = std::exp(lw + logc(k));
    if (!std::isfinite(w)) continue;
    mass += w;
    for (Eigen::Index i = 0; i < n; ++i) {
      s1[i] += w * x[i];
      for (Eigen::Index j = 0; j <= i; ++j) s2(i, j) += w * x[i] * x[j];
    }
  }
  ModelMoments out;
  out.mass = mass * std::pow(h, static_cast<double>(n));
  out.mean = s1 / mass;
  Matrix second = s2 / mass;
  second = second.selfadjointView<Eigen::Lower>();
  out.covariance = second - out.mean * out.mean.transpose();
  if (m.addin) {
    const Matrix& l = m.addin->lower;
    out.mean = l * out.mean;
    out.covariance = l * out.covariance * l.transpose();
  }
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose());
  out.correlation = cov_to_corr(out.covariance);
  return out;
}

CorrMatrix model_correlation(const ResidualModel& m) { return CorrMatrix(model_moments(m).correlation); }

}  // namespace cdg
