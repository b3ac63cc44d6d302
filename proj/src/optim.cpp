#include "cdg/optim.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <vector>

#include <ceres/gradient_problem.h>
#include <ceres/gradient_problem_solver.h>

namespace cdg {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Simplex {
  std::vector<Vector> x;
  std::vector<double> f;
};

double eval(const Objective& f, const Vector& x, int& evals) {
  ++evals;
  double v = f(x);
  return std::isfinite(v) ? v : kInf;
}

void order(Simplex& s) {
  std::vector<std::size_t> idx(s.x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return s.f[a] < s.f[b]; });
  Simplex out;
  for (auto i : idx) {
    out.x.push_back(std::move(s.x[i]));
    out.f.push_back(s.f[i]);
  }
  s = std::move(out);
}

double diameter(const Simplex& s) {
  double d = 0.0;
  for (std::size_t j = 1; j < s.x.size(); ++j)
    d = std::max(d, (s.x[j] - s.x[0]).cwiseAbs().maxCoeff());
  return d;
}

// One Nelder-Mead run with standard coefficients (1, 2, 0.5, 0.5).
void run(const Objective& f, Simplex& s, const NelderMeadOptions& opts, int& iters, int& evals,
         bool& converged) {
  const std::size_t n = s.x.size() - 1;
  converged = false;
  for (; iters < opts.max_iter; ++iters) {
    order(s);
    double spread = std::abs(s.f[n] - s.f[0]);
    if (std::isfinite(s.f[n]) &&
        spread <= opts.ftol * (std::abs(s.f[0]) + 1e-10) && diameter(s) <= opts.xtol * 1e4) {
      converged = true;
      return;
    }
    if (std::isfinite(s.f[n]) && diameter(s) <= opts.xtol) {
      converged = true;
      return;
    }
    Vector centroid = Vector::Zero(s.x[0].size());
    for (std::size_t j = 0; j < n; ++j) centroid += s.x[j];
    centroid /= static_cast<double>(n);

    Vector xr = centroid + (centroid - s.x[n]);
    double fr = eval(f, xr, evals);
    if (fr < s.f[0]) {
      Vector xe = centroid + 2.0 * (centroid - s.x[n]);
      double fe = eval(f, xe, evals);
      if (fe < fr) {
        s.x[n] = std::move(xe);
        s.f[n] = fe;
      } else {
        s.x[n] = std::move(xr);
        s.f[n] = fr;
      }
      continue;
    }
    if (fr < s.f[n - 1]) {
      s.x[n] = std::move(xr);
      s.f[n] = fr;
      continue;
    }
    bool outside = fr < s.f[n];
    Vector xc = outside ? Vector(centroid + 0.5 * (xr - centroid))
                        : Vector(centroid + 0.5 * (s.x[n] - centroid));
    double fc = eval(f, xc, evals);
    if (fc < (outside ? fr : s.f[n])) {
      s.x[n] = std::move(xc);
      s.f[n] = fc;
      continue;
    }
    for (std::size_t j = 1; j <= n; ++j) {
      s.x[j] = s.x[0] + 0.5 * (s.x[j] - s.x[0]);
      s.f[j] = eval(f, s.x[j], evals);
    }
  }
  order(s);
}

Simplex build(const Objective& f, const Vector& x0, double fx0, double step, int& evals) {
  Simplex s;
  s.x.push_back(x0);
  s.f.push_back(fx0);
  for (Eigen::Index i = 0; i < x0.size(); ++i) {
    Vector xi = x0;
    xi[i] += step;
    double fi = eval(f, xi, evals);
    if (!std::isfinite(fi)) {
      xi[i] = x0[i] - step;
      fi = eval(f, xi, evals);
    }
    s.x.push_back(std::move(xi));
    s.f.push_back(fi);
  }
  return s;
}

class FirstOrder final : public ceres::FirstOrderFunction {
 public:
  FirstOrder(const GradientObjective& f, int n, int& evals) : f_(f), n_(n), evals_(evals) {}

  bool Evaluate(const double* parameters, double* cost, double* gradient) const override {
    ++evals_;
    Vector x = Eigen::Map<const Vector>(parameters, n_);
    Vector g;
    if (!f_(x, *cost, gradient ? &g : nullptr) || !std::isfinite(*cost)) return false;
    if (gradient) {
      if (!g.allFinite()) return false;
      Eigen::Map<Vector>(gradient, n_) = g;
    }
    return true;
  }

  int NumParameters() const override { return n_; }

 private:
  const GradientObjective& f_;
  int n_;
  int& evals_;
};

}  // namespace

OptimResult quasi_newton(const GradientObjective& f, const Vector& x0, const QuasiNewtonOptions& opts) {
  OptimResult res;
  res.x = x0;
  if (!f(x0, res.value, nullptr) || !std::isfinite(res.value)) {
    res.value = kInf;
    return res;
  }
  if (x0.size() == 0) {
    res.converged = true;
    return res;
  }
  ceres::GradientProblemSolver::Options o;
  o.line_search_direction_type = ceres::BFGS;
  o.function_tolerance = opts.function_tolerance;
  o.gradient_tolerance = opts.gradient_tolerance;
  o.parameter_tolerance = opts.parameter_tolerance;
  o.max_num_iterations = opts.max_iter;
  o.logging_type = ceres::SILENT;
  o.minimizer_progress_to_stdout = false;
  ceres::GradientProblem problem(new FirstOrder(f, static_cast<int>(x0.size()), res.evaluations));
  ceres::GradientProblemSolver::Summary summary;
  Vector x = x0;
  ceres::Solve(o, problem, x.data(), &summary);
  res.iterations = static_cast<int>(summary.iterations.size());
  if (std::isfinite(summary.final_cost) && summary.final_cost <= res.value) {
    res.x = x;
    res.value = summary.final_cost;
  }
  res.converged = summary.termination_type == ceres::CONVERGENCE;
  return res;
}

OptimResult nelder_mead(const Objective& f, const Vector& x0, const NelderMeadOptions& opts) {
  OptimResult res;
  res.x = x0;
  res.value = eval(f, x0, res.evaluations);
  if (x0.size() == 0) {
    res.converged = true;
    return res;
  }
  double step = opts.initial_step;
  bool converged = false;
  for (int attempt = 0; attempt <= opts.max_restarts; ++attempt) {
    Simplex s = build(f, res.x, res.value, step, res.evaluations);
    run(f, s, opts, res.iterations, res.evaluations, converged);
    double improvement = res.value - s.f[0];
    if (s.f[0] < res.value) {
      res.x = s.x[0];
      res.value = s.f[0];
    }
    if (attempt > 0) ++res.restarts;
    if (!converged) break;  // iteration budget exhausted
    if (attempt > 0 && improvement <= opts.ftol * (std::abs(res.value) + 1e-10)) break;
    step = std::max(opts.initial_step * 0.1, 1e-3);
  }
  res.converged = converged && std::isfinite(res.value);
  return res;
}

}  // namespace cdg
