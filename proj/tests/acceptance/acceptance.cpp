// Runs the acceptance criteria and prints one PASS/FAIL line per criterion.
// Exit status is nonzero when any criterion fails.
#include <CLI11.hpp>

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cdg/copula.hpp"
#include "cdg/dcc.hpp"
#include "cdg/decomp.hpp"
#include "cdg/evalkit.hpp"
#include "cdg/garch.hpp"
#include "cdg/market_data.hpp"
#include "cdg/pair_copula.hpp"
#include "cdg/pipeline.hpp"
#include "cdg/residual_fit.hpp"
#include "cdg/skewt.hpp"
#include "cdg/special.hpp"

using namespace cdg;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Matrix random_corr(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> n01;
  Matrix a(n, n + 2);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n + 2; ++j) a(i, j) = n01(rng);
  return cov_to_corr(a * a.transpose());
}

Matrix corr3(double r12, double r13, double r23) {
  Matrix m(3, 3);
  m << 1, r12, r13, r12, 1, r23, r13, r23, 1;
  return m;
}

Vector gaussian_draw(Rng& rng, int n) {
  std::normal_distribution<double> n01;
  Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = n01(rng);
  return v;
}

double gaussian_logdensity(std::span<const double> e) {
  double s = 0.0;
  for (double v : e) s += special::norm_logpdf(v);
  return s;
}

// Returns whose GARCH(1,1) residuals are the given xi.
Matrix returns_from_xi(const Matrix& xi, const std::vector<GarchParams>& g) {
  Matrix r(xi.rows(), xi.cols());
  for (Eigen::Index i = 0; i < xi.cols(); ++i) {
    const auto& p = g[static_cast<std::size_t>(i)];
    double var = p.sigma0 * p.sigma0;
    for (Eigen::Index t = 0; t < xi.rows(); ++t) {
      if (t > 0) var = p.omega + p.alpha * r(t - 1, i) * r(t - 1, i) + p.beta * var;
      r(t, i) = std::sqrt(var) * xi(t, i);
    }
  }
  return r;
}

std::vector<GarchParams> fixture_garch() {
  std::vector<GarchParams> g;
  for (int i = 0; i < 3; ++i) {
    GarchParams p{1e-6 * (i + 1), 0.05 + 0.01 * i, 0.9 - 0.01 * i, 0.0};
    p.sigma0 = unconditional_sigma(p);
    g.push_back(p);
  }
  return g;
}

// Skew-t marginals joined by a Gaussian copula: dependent, non-Gaussian residuals.
Matrix synthetic_residuals(std::uint64_t seed, std::size_t T, const Matrix& corr) {
  const std::array<SkewTParams, 3> margins{{{5.0, 0.9}, {7.0, 1.1}, {10.0, 0.95}}};
  std::array<SkewT, 3> dist{SkewT(margins[0]), SkewT(margins[1]), SkewT(margins[2])};
  Eigen::LLT<Matrix> llt(corr);
  Rng rng = make_rng(seed);
  Matrix x(static_cast<Eigen::Index>(T), 3);
  for (Eigen::Index t = 0; t < x.rows(); ++t) {
    Vector z = llt.matrixL() * gaussian_draw(rng, 3);
    for (int i = 0; i < 3; ++i) x(t, i) = dist[static_cast<std::size_t>(i)].quantile(special::norm_cdf(z[i]));
  }
  return x;
}

const std::array<DecompKind, 5> kMethods{DecompKind::Sqrt, DecompKind::Sqrt2, DecompKind::Cholesky,
                                         DecompKind::Eigen, DecompKind::Eigen2};

Outcome garch_table() {
  struct Row {
    const char* ccy;
    double omega, alpha, beta, sigma;
  };
  const Row rows[] = {{"EUR", 5.410e-07, 0.0653, 0.8970, 0.0038}, {"GBP", 3.639e-06, 0.1327, 0.7355, 0.0053},
                      {"JPY", 1.858e-06, 0.1168, 0.7601, 0.0039}, {"AUD", 7.539e-07, 0.0632, 0.9161, 0.0060},
                      {"NZD", 8.278e-07, 0.0433, 0.9320, 0.0058}, {"CHF", 1.245e-06, 0.0763, 0.8449, 0.0040},
                      {"CAD", 4.418e-07, 0.0568, 0.9187, 0.0042}};
  double worst = 0.0;
  std::string bad;
  for (const auto& r : rows) {
    double d = std::abs(unconditional_sigma({r.omega, r.alpha, r.beta, r.sigma}) - r.sigma);
    worst = std::max(worst, d);
    if (d > 5e-5) bad += std::string(" ") + r.ccy;
  }
  return {bad.empty(), "7 rows, max |sigma - printed| = " + fmt("%.2e", worst) + (bad.empty() ? "" : ", off:" + bad)};
}

Outcome garch_recovery() {
  const GarchParams truth{1e-6, 0.05, 0.90, std::sqrt(1e-6 / 0.05)};
  int ok = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto sim = simulate_garch(truth, 5000, [](Rng& rng) { return std::normal_distribution<double>()(rng); }, seed);
    GarchFit f = fit_garch(sim.returns);
    if (std::abs(f.params.alpha - truth.alpha) <= 0.05 && std::abs(f.params.beta - truth.beta) <= 0.05 &&
        std::abs(f.params.omega / truth.omega - 1.0) <= 0.25)
      ++ok;
  }
  return {ok >= 18, std::to_string(ok) + "/20 runs within tolerance (need 18)"};
}

Outcome dcc_recovery() {
  CorrMatrix qbar(corr3(0.5, 0.3, 0.4));
  const DccParams truth{0.03, 0.88, qbar, qbar};
  int ok = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto sim = simulate_dcc(truth, 3000, [](Rng& rng) { return gaussian_draw(rng, 3); },
                            {DecompKind::Cholesky, 50}, seed);
    DccFit f = fit_dcc(sim.xi);
    if (std::abs(f.params.a - truth.a) <= 0.03 && std::abs(f.params.b - truth.b) <= 0.10) ++ok;
  }
  return {ok >= 8, std::to_string(ok) + "/10 seeds within tolerance (need 8)"};
}

Outcome decomposition_identities() {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> vol(0.002, 0.02);
  double worst = 0.0, worst_chol = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 2 + trial % 5;
    Matrix r = random_corr(rng, n);
    std::vector<double> sig(static_cast<std::size_t>(n));
    for (auto& s : sig) s = vol(rng);
    for (auto k : kMethods) {
      EigenSortState st;
      Matrix x = decompose({k, 50}, r, sig, &st);
      worst = std::max(worst, (x * x.transpose() - r).cwiseAbs().maxCoeff());
    }
    Vector s = Eigen::Map<Vector>(sig.data(), n);
    Matrix lh = decompose({DecompKind::Cholesky}, s.asDiagonal() * r * s.asDiagonal());
    Matrix lr = decompose({DecompKind::Cholesky}, r);
    worst_chol = std::max(worst_chol, (lr - s.cwiseInverse().asDiagonal() * lh).cwiseAbs().maxCoeff());
  }
  return {worst < 1e-12 && worst_chol < 1e-12,
          "1000 matrices x 5 methods, max |XX' - R| = " + fmt("%.1e", worst) + ", Cholesky identity " +
              fmt("%.1e", worst_chol)};
}

Outcome gaussian_invariance() {
  CorrMatrix qbar(corr3(0.5, 0.3, 0.2));
  DccParams dcc{0.04, 0.9, qbar, qbar};
  auto sim = simulate_dcc(dcc, 500, [](Rng& rng) { return gaussian_draw(rng, 3); }, {DecompKind::Cholesky, 50}, 5);
  ReturnsModel model;
  model.garch = fixture_garch();
  model.dcc = dcc;
  Matrix returns = returns_from_xi(sim.xi, model.garch);
  std::vector<Vector> per;
  for (auto k : kMethods) {
    model.method = {k, 50};
    per.push_back(returns_loglik(model, gaussian_logdensity, returns, 400).per_observation);
  }
  double worst = 0.0;
  for (std::size_t k = 1; k < per.size(); ++k) worst = std::max(worst, (per[k] - per[0]).cwiseAbs().maxCoeff());
  return {worst < 1e-8, "T=500, max per-observation spread across methods = " + fmt("%.1e", worst)};
}

Outcome eigen_sort_stability() {
  std::mt19937_64 rng(6);
  std::bernoulli_distribution coin(0.5);
  long steps = 0;
  bool identical = true;
  for (int path = 0; path < 20; ++path) {
    EigenSortState clean, noisy;
    const int n = 2 + path % 5;
    for (int t = 0; t < 200; ++t) {
      Matrix r = random_corr(rng, n);
      Eigen::SelfAdjointEigenSolver<Matrix> es(r);
      Matrix v = es.eigenvectors(), w = v;
      for (int j = 0; j < n; ++j)
        if (coin(rng)) w.col(j) *= -1.0;
      auto a = eigen_sort_step(v, es.eigenvalues(), clean, 50);
      auto b = eigen_sort_step(w, es.eigenvalues(), noisy, 50);
      identical = identical && a.vectors == b.vectors && a.values == b.values;
      ++steps;
    }
  }
  bool constant = true;
  for (auto k : kMethods) {
    Matrix r = random_corr(rng, 4);
    std::array<double, 4> sig{0.01, 0.02, 0.005, 0.015};
    Decomposer dec({k, 50});
    Matrix first = dec.next(r, sig);
    for (int t = 0; t < 200; ++t) constant = constant && dec.next(r, sig) == first;
  }
  return {identical && constant, std::to_string(steps) + " flipped steps " + (identical ? "bitwise equal" : "DIFFER") +
                                     ", constant-R paths " + (constant ? "constant" : "NOT constant")};
}

Outcome copula_correctness() {
  std::vector<CopulaFamily> fams{CopulaFamily::independent(), CopulaFamily::gaussian(0.7),
                                 CopulaFamily::student_t(0.7, 5.0), CopulaFamily::frank(5.7),
                                 CopulaFamily::plackett(11.0)};
  for (auto rot : {Rotation::R0, Rotation::R90, Rotation::R180, Rotation::R270}) {
    fams.push_back(CopulaFamily::clayton(2.0, rot));
    fams.push_back(CopulaFamily::gumbel(2.0, rot));
  }
  double worst_mass = 0.0;
  const int n = 400;
  const double h = 1.0 / n;
  for (const auto& f : fams) {
    BivariateCopula c(f);
    double total = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) total += std::exp(c.logpdf((i + 0.5) * h, (j + 0.5) * h));
    worst_mass = std::max(worst_mass, std::abs(total * h * h - 1.0));
  }

  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> unif(0.02, 0.98);
  const double d = 1e-5;
  double worst_h = 0.0;
  for (const auto& f : fams) {
    if (f.family == Family::Independent) continue;
    for (int k = 0; k < 100; ++k) {
      double u = unif(rng), v = unif(rng);
      double fd_v = (copula_cdf(f, u, v + d) - copula_cdf(f, u, v - d)) / (2 * d);
      double fd_u = (copula_cdf(f, u + d, v) - copula_cdf(f, u - d, v)) / (2 * d);
      worst_h = std::max({worst_h, std::abs(h_function(f, u, v) - fd_v), std::abs(h_function_first(f, u, v) - fd_u)});
    }
  }
  return {worst_mass <= 5e-3 && worst_h <= 1e-5,
          std::to_string(fams.size()) + " families/rotations, max |mass - 1| = " + fmt("%.1e", worst_mass) +
              ", max h error = " + fmt("%.1e", worst_h)};
}

Outcome pair_copula_oracle() {
  const double r12 = 0.5, r13 = -0.3, r23 = 0.4;
  CorrMatrix r(corr3(r12, r13, r23));
  const double p23_1 = (r23 - r12 * r13) / std::sqrt((1 - r12 * r12) * (1 - r13 * r13));
  PairCopula vine{Pivot::P1, {CopulaFamily::gaussian(r12), CopulaFamily::gaussian(r13), CopulaFamily::gaussian(p23_1)}};
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> unif(1e-3, 1 - 1e-3);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    std::array<double, 3> u{unif(rng), unif(rng), unif(rng)};
    worst = std::max(worst, std::abs(std::exp(pair_copula_logdensity(vine, u)) -
                                     std::exp(gaussian_copula_logdensity_nd(r, u))));
  }

  auto specs = enumerate_specs(pair_family_menu());
  std::uniform_int_distribution<std::size_t> pick(0, specs.size() - 1);
  std::uniform_real_distribution<double> s01(0.0, 1.0);
  double worst_mass = 0.0;
  const int n = 100;
  const double h = 1.0 / n;
  for (int trial = 0; trial < 20; ++trial) {
    PairCopula pc = specs[pick(rng)];
    for (auto& e : pc.edges) {
      double s = s01(rng);
      switch (e.family) {
        case Family::Gaussian: e.theta = -0.6 + 1.2 * s; break;
        case Family::StudentT: e.theta = -0.6 + 1.2 * s; e.nu = 4.0 + 10.0 * s01(rng); break;
        case Family::Clayton: e.theta = 0.3 + 1.5 * s; break;
        case Family::Gumbel: e.theta = 1.1 + 0.9 * s; break;
        case Family::Frank: e.theta = (s < 0.5 ? -1.0 : 1.0) * (1.0 + 4.0 * s01(rng)); break;
        case Family::Plackett: e.theta = 0.3 + 5.0 * s; break;
        default: break;
      }
    }
    PairCopulaEvaluator ev(pc);
    double total = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int l = 0; l < n; ++l) total += std::exp(ev.logpdf((i + 0.5) * h, (j + 0.5) * h, (l + 0.5) * h));
    worst_mass = std::max(worst_mass, std::abs(total * h * h * h - 1.0));
  }
  return {worst <= 1e-6 && worst_mass <= 2e-2, "Gaussian vine max density error = " + fmt("%.1e", worst) +
                                                   ", 20 random specs max |mass - 1| = " + fmt("%.1e", worst_mass)};
}

Outcome addin_property() {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n01;
  auto random_pd = [&](int n) {
    Matrix a(n, n + 3);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n + 3; ++j) a(i, j) = n01(rng);
    Matrix s = a * a.transpose() / (n + 3);
    return Matrix(s / s(0, 0));
  };
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + trial % 4;
    Matrix j = random_pd(n), s = random_pd(n);
    Matrix l = addin_from_target(j, s).lower;
    worst = std::max(worst, (l * s * l.transpose() - j).cwiseAbs().maxCoeff());
  }

  Matrix j = random_pd(3), s = random_pd(3);
  Matrix l = addin_from_target(j, s).lower;
  Eigen::LLT<Matrix> llt(s);
  Rng draw = make_rng(99);
  const int m = 100000;
  Matrix x(m, 3);
  for (int k = 0; k < m; ++k) x.row(k) = (l * (llt.matrixL() * gaussian_draw(draw, 3))).transpose();
  Matrix centered = x.rowwise() - x.colwise().mean();
  Matrix cov = centered.transpose() * centered / (m - 1);
  double mc = 0.0;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) mc = std::max(mc, std::abs(cov(a, b) - j(a, b)) / std::sqrt(j(a, a) * j(b, b)));

  double ll = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    Matrix c = random_pd(2 + trial % 4);
    Matrix v = leelong_transform(c);
    ll = std::max(ll, (v * c * v.transpose() - Matrix::Identity(c.rows(), c.cols())).cwiseAbs().maxCoeff());
  }
  return {worst <= 1e-12 && mc <= 0.03 && ll <= 1e-10,
          "max |LSL' - J| = " + fmt("%.1e", worst) + ", MC relative covariance error = " + fmt("%.4f", mc) +
              ", Lee-Long max |VSV' - I| = " + fmt("%.1e", ll)};
}

Outcome grid_integration() {
  const double rho = 0.3, nu = 300.0;
  ResidualModel gc;
  gc.marginals = std::vector<SkewTParams>(3, SkewTParams{nu, 1.0});
  gc.copula = GaussianCopula{CorrMatrix(corr3(rho, rho, rho))};
  const double grid = model_correlation(gc)(0, 1);

  // Monte-Carlo oracle on the same model.
  SkewT st({nu, 1.0});
  Rng rng = make_rng(20240611);
  std::normal_distribution<double> n01;
  const int m = 1000000;
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (int k = 0; k < m; ++k) {
    double z1 = n01(rng), z2 = rho * z1 + std::sqrt(1 - rho * rho) * n01(rng);
    double x = st.quantile(special::norm_cdf(z1)), y = st.quantile(special::norm_cdf(z2));
    sx += x;
    sy += y;
    sxx += x * x;
    syy += y * y;
    sxy += x * y;
  }
  const double mc = (sxy / m - sx / m * sy / m) /
                    std::sqrt((sxx / m - sx / m * sx / m) * (syy / m - sy / m * sy / m));

  ResidualModel ic;
  ic.marginals = {{5.0, 0.8}, {8.0, 1.2}, {12.0, 1.0}};
  ic.copula = IndependentCopula{};
  Matrix ric = model_correlation(ic).matrix();
  double worst_ic = 0.0;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < a; ++b) worst_ic = std::max(worst_ic, std::abs(ric(a, b)));

  bool ok = std::abs(grid - 0.3) <= 2e-3 && std::abs(grid - mc) <= 2e-3 && worst_ic <= 1e-3;
  return {ok, "GC grid " + fmt("%.6f", grid) + ", MC oracle " + fmt("%.6f", mc) + ", IC max |corr| " +
                  fmt("%.1e", worst_ic)};
}

Outcome cokurtosis() {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n01;
  const int m = 1000000;
  std::vector<double> a(m), b(m), c(m);
  for (int t = 0; t < m; ++t) {
    a[t] = n01(rng);
    b[t] = n01(rng);
    c[t] = 0.5 * a[t] + std::sqrt(0.75) * b[t];
  }
  const double kab = cokurtosis22(a, b), kac = cokurtosis22(a, c);

  std::vector<double> s(a.begin(), a.begin() + 5000);
  for (auto& v : s) v = std::exp(v);
  double mean = 0.0;
  for (double v : s) mean += v;
  mean /= static_cast<double>(s.size());
  double m2 = 0.0, m4 = 0.0;
  for (double v : s) {
    m2 += (v - mean) * (v - mean);
    m4 += std::pow(v - mean, 4);
  }
  m2 /= static_cast<double>(s.size());
  m4 /= static_cast<double>(s.size());
  const double pearson_k = m4 / (m2 * m2);
  const double rel = std::abs(cokurtosis22(s, s) - pearson_k) / pearson_k;
  bool ok = std::abs(kab - 1.0) <= 0.02 && std::abs(kac - 1.5) <= 0.05 && rel <= 1e-12;
  return {ok, "independent " + fmt("%.4f", kab) + ", rho=0.5 " + fmt("%.4f", kac) + ", K(x,x) vs kurtosis rel " +
                  fmt("%.1e", rel)};
}

Outcome uncorrelation_protocol(unsigned jobs) {
  CorrMatrix qbar(corr3(0.6, 0.5, 0.55));
  const DccParams truth{0.03, 0.88, qbar, qbar};
  const auto garch = fixture_garch();
  const auto pairs = index_pairs(3);
  std::array<int, 5> inside{};
  int xi_excludes = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto sim = simulate_dcc(truth, 783, [](Rng& rng) { return gaussian_draw(rng, 3); }, {DecompKind::Cholesky, 50},
                            1000 + seed);
    Matrix returns = returns_from_xi(sim.xi, garch);
    Matrix sigma(returns.rows(), 3), xi(returns.rows(), 3);
    for (int i = 0; i < 3; ++i) {
      GarchFit g = fit_garch(returns.col(i));
      VolPath v = filter_variance(g.params, returns.col(i));
      sigma.col(i) = v.sigma;
      xi.col(i) = v.xi;
    }
    CorrPath path = filter_dcc(fit_dcc(xi).params, xi);

    auto all_contain_zero = [&](const Matrix& x, std::uint64_t stream, bool& excludes_all) {
      bool contain = true;
      excludes_all = true;
      for (std::size_t p = 0; p < pairs.size(); ++p) {
        Matrix two(x.rows(), 2);
        two.col(0) = x.col(pairs[p].first);
        two.col(1) = x.col(pairs[p].second);
        auto ci = bootstrap_corr_ci(two, 2000, 0.95, stream_seed(seed, stream * 16 + p), jobs);
        contain = contain && ci.contains(0.0);
        excludes_all = excludes_all && !ci.contains(0.0);
      }
      return contain;
    };
    bool excl = false;
    all_contain_zero(xi, 0, excl);
    if (excl) ++xi_excludes;
    for (std::size_t k = 0; k < kMethods.size(); ++k) {
      Matrix eps = dcc_residuals(path, xi, {kMethods[k], 50}, &sigma);
      bool unused = false;
      if (all_contain_zero(eps, k + 1, unused)) ++inside[k];
    }
  }
  bool ok = xi_excludes == 20;
  std::ostringstream d;
  d << "seeds with all CIs containing 0:";
  for (std::size_t k = 0; k < kMethods.size(); ++k) {
    d << ' ' << type_label(kMethods[k]) << ' ' << inside[k] << "/20";
    ok = ok && inside[k] >= 18;
  }
  d << "; GARCH residual CIs exclude 0 in " << xi_excludes << "/20";
  return {ok, d.str()};
}

Outcome nesting() {
  int ok = 0;
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Matrix x = synthetic_residuals(500 + seed, 783, corr3(0.4 + 0.02 * seed, 0.2, 0.3 - 0.03 * seed));
    ResidualFitter fitter(x);
    FitResult ic = fitter.independent();
    FitResult gc = fitter.fit(MenuItem::GC);
    FitResult cgc = fitter.fit(MenuItem::CGC, std::nullopt, &gc);
    double gap = std::min(gc.loglik - ic.loglik, cgc.loglik - gc.loglik);
    worst = std::min(worst, gap);
    if (gap >= -1e-6) ++ok;
  }
  return {ok == 10, std::to_string(ok) + "/10 datasets ordered, worst step " + fmt("%.2e", worst)};
}

Outcome sweep_scale(unsigned jobs) {
  Matrix x = synthetic_residuals(783, 783, corr3(0.5, 0.3, 0.4));
  auto specs = enumerate_specs(pair_family_menu());
  auto run = [&](unsigned j) {
    std::ostringstream out;
    write_sweep_report(out, sweep_specs(x, "Synthetic", {MenuItem::PC}, specs, j));
    return out.str();
  };
  auto t0 = std::chrono::steady_clock::now();
  const std::string first = run(jobs);
  const double minutes = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60.0;
  const std::string second = run(1);

  std::size_t lines = 0, failed = 0;
  std::istringstream in(first);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    ++lines;
    if (line.find(",failed,") != std::string::npos) ++failed;
  }
  bool ok = lines == 5184 && minutes < 30.0 && first == second;
  return {ok, std::to_string(lines) + " rows (" + std::to_string(failed) + " failed fits), " + fmt("%.1f", minutes) +
                  " min at " + std::to_string(jobs) + " jobs, rerun at 1 job " +
                  (first == second ? "byte-identical" : "DIFFERS")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only, known;
  unsigned jobs = 8;
  app.add_option("--only", only, "Run only these criteria")->delimiter(',');
  app.add_option("--known-failures", known, "Criteria whose failure is documented; still reported, not fatal")
      ->delimiter(',');
  app.add_option("--jobs", jobs, "Threads for the sweep and bootstrap")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  struct Criterion {
    int id;
    const char* name;
    double budget_s;  // 0: no runtime bound
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "GARCH table internal consistency", 1.0, garch_table},
      {2, "GARCH recovery", 60.0, garch_recovery},
      {3, "DCC recovery", 300.0, dcc_recovery},
      {4, "decomposition identities", 0.0, decomposition_identities},
      {5, "Gaussian invariance", 0.0, gaussian_invariance},
      {6, "eigen-sort stability", 0.0, eigen_sort_stability},
      {7, "copula correctness", 0.0, copula_correctness},
      {8, "pair-copula oracle", 0.0, pair_copula_oracle},
      {9, "add-in property", 0.0, addin_property},
      {10, "grid integration", 0.0, grid_integration},
      {11, "cokurtosis", 0.0, cokurtosis},
      {12, "residual-uncorrelation protocol", 0.0, [&] { return uncorrelation_protocol(jobs); }},
      {13, "nesting monotonicity", 0.0, nesting},
      {14, "sweep scale and determinism", 0.0, [&] { return sweep_scale(jobs); }},
  };

  std::set<int> selected(only.begin(), only.end()), documented(known.begin(), known.end());
  int failures = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.budget_s > 0.0 && secs >= c.budget_s) {
      o.pass = false;
      o.detail += "; over the " + fmt("%.0f", c.budget_s) + " s budget";
    }
    if (!o.pass && documented.count(c.id)) o.detail += " [known failure]";
    else if (!o.pass) ++failures;
    std::printf("%s %2d %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
