#include "cdg/evalkit.hpp"

#include <cmath>
#include <limits>

#include "cdg/errors.hpp"

namespace cdg {

double cokurtosis22(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw StatError("cokurtosis needs series of equal length");
  if (x.size() < 4) throw StatError("cokurtosis needs at least 4 observations");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t t = 0; t < x.size(); ++t) {
    mx += x[t];
    my += y[t];
  }
  mx /= n;
  my /= n;
  double vx = 0.0, vy = 0.0, m22 = 0.0;
  for (std::size_t t = 0; t < x.size(); ++t) {
    double dx = (x[t] - mx) * (x[t] - mx), dy = (y[t] - my) * (y[t] - my);
    vx += dx;
    vy += dy;
    m22 += dx * dy;
  }
  if (!(vx > 0.0) || !(vy > 0.0)) throw StatError("cokurtosis of a series with zero variance");
  return (m22 / n) / ((vx / n) * (vy / n));
}

InformationCriteria information_criteria(double loglik, int k, std::size_t n) {
  if (n < 1) throw StatError("information criteria need at least one observation");
  return {-2.0 * loglik + 2.0 * k, -2.0 * loglik + k * std::log(static_cast<double>(n))};
}

ReturnsTerms returns_terms(const ReturnsModel& model, const Matrix& returns, std::size_t split,
                           OutOfSampleStart start) {
  const Eigen::Index T = returns.rows(), n = returns.cols();
  if (static_cast<Eigen::Index>(model.garch.size()) != n) throw ParamError("one GARCH model per asset is needed");
  if (split > static_cast<std::size_t>(T)) throw ParamError("split lies beyond the sample");

  Matrix sigma(T, n), xi(T, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    VolPath v = filter_variance(model.garch[static_cast<std::size_t>(i)], returns.col(i));
    sigma.col(i) = v.sigma;
    xi.col(i) = v.xi;
  }

  ReturnsTerms out;
  out.split = split;
  out.log_jacobian.resize(T);
  for (Eigen::Index t = 0; t < T; ++t) out.log_jacobian[t] = -sigma.row(t).array().log().sum();
  if (!model.dcc) {
    out.residuals = std::move(xi);
    return out;
  }

  std::vector<Matrix> r;
  const auto s = static_cast<Eigen::Index>(split);
  if (start == OutOfSampleStart::ResetQ && split > 0 && s < T) {
    DccParams reset = *model.dcc;
    reset.q0 = reset.q_bar;
    r = filter_dcc(*model.dcc, xi.topRows(s)).r;
    auto rest = filter_dcc(reset, xi.bottomRows(T - s)).r;
    r.insert(r.end(), rest.begin(), rest.end());
  } else {
    r = filter_dcc(*model.dcc, xi).r;
  }
  out.residuals.resize(T, n);
  Decomposer decomposer(model.method);
  for (Eigen::Index t = 0; t < T; ++t) {
    Vector st = sigma.row(t).transpose();
    Matrix f = decomposer.next(r[static_cast<std::size_t>(t)],
                               std::span<const double>(st.data(), static_cast<std::size_t>(n)));
    Eigen::PartialPivLU<Matrix> lu(f);
    out.residuals.row(t) = lu.solve(Vector(xi.row(t).transpose())).transpose();
    out.log_jacobian[t] -= std::log(std::abs(lu.determinant()));
  }
  return out;
}

ReturnsLoglik score_returns(const ReturnsTerms& terms, const LogDensity& density) {
  const Eigen::Index T = terms.residuals.rows(), n = terms.residuals.cols();
  ReturnsLoglik out;
  out.per_observation.resize(T);
  Vector e(n);
  for (Eigen::Index t = 0; t < T; ++t) {
    e = terms.residuals.row(t).transpose();
    double v = density(std::span<const double>(e.data(), static_cast<std::size_t>(n))) + terms.log_jacobian[t];
    if (!std::isfinite(v))
      throw EvalError("non-finite log-likelihood of returns at row " + std::to_string(t + 1));
    out.per_observation[t] = v;
  }
  const auto s = static_cast<Eigen::Index>(terms.split);
  out.n_in = terms.split;
  out.n_out = static_cast<std::size_t>(T - s);
  out.llis = out.n_in ? out.per_observation.head(s).sum() / static_cast<double>(out.n_in)
                      : std::numeric_limits<double>::quiet_NaN();
  out.lloos = out.n_out ? out.per_observation.tail(T - s).sum() / static_cast<double>(out.n_out)
                        : std::numeric_limits<double>::quiet_NaN();
  return out;
}

ReturnsLoglik score_returns(const ReturnsTerms& terms, const ResidualModel& residual) {
  residual.validate();
  if (residual.dim() != terms.residuals.cols())
    throw ParamError("residual model dimension does not match the returns");
  return score_returns(terms, [&](std::span<const double> e) { return residual_logdensity(residual, e); });
}

ReturnsLoglik returns_loglik(const ReturnsModel& model, const LogDensity& density, const Matrix& returns,
                             std::size_t split, OutOfSampleStart start) {
  return score_returns(returns_terms(model, returns, split, start), density);
}

ReturnsLoglik returns_loglik(const ReturnsModel& model, const ResidualModel& residual, const Matrix& returns,
                             std::size_t split, OutOfSampleStart start) {
  return score_returns(returns_terms(model, returns, split, start), residual);
}

std::vector<std::pair<int, int>> index_pairs(int n) {
  std::vector<std::pair<int, int>> out;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) out.emplace_back(i, j);
  return out;
}

bool correlation_test(const Matrix& model_corr, const std::vector<CorrInterval>& intervals) {
  auto pairs = index_pairs(static_cast<int>(model_corr.rows()));
  if (pairs.size() != intervals.size()) throw ParamError("one interval per variable pair is needed");
  for (std::size_t k = 0; k < pairs.size(); ++k)
    if (!intervals[k].contains(model_corr(pairs[k].first, pairs[k].second))) return false;
  return true;
}

bool correlation_test(const ResidualModel& model, const std::vector<CorrInterval>& intervals) {
  return correlation_test(model_correlation(model).matrix(), intervals);
}

std::vector<double> cokurtosis_table(const Matrix& x) {
  std::vector<double> out;
  for (auto [i, j] : index_pairs(static_cast<int>(x.cols()))) {
    Vector a = x.col(i), b = x.col(j);
    out.push_back(cokurtosis22(std::span<const double>(a.data(), static_cast<std::size_t>(a.size())),
                               std::span<const double>(b.data(), static_cast<std::size_t>(b.size()))));
  }
  return out;
}

EvalReport make_report(const std::string& method, const FitResult& fit, const ReturnsLoglik& ll,
                       std::optional<bool> corr_test) {
  EvalReport r;
  r.method = method;
  r.type = to_string(fit.item);
  r.llis = ll.llis;
  r.lloos = ll.lloos;
  r.aic = fit.aic;
  r.bic = fit.bic;
  r.corr_test = corr_test;
  r.addin_used = fit.model.addin.has_value();
  return r;
}

}  // namespace cdg
