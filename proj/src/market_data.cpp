#include "cdg/market_data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "cdg/errors.hpp"
#include "cdg/parallel.hpp"
#include "cdg/rng.hpp"

namespace cdg {
namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, delim)) out.push_back(trim(cell));
  if (!line.empty() && line.back() == delim) out.emplace_back();
  return out;
}

Vector column_copy(std::span<const double> x) {
  return Eigen::Map<const Vector>(x.data(), static_cast<Eigen::Index>(x.size()));
}

}  // namespace

Date parse_date(const std::string& text) {
  int y = 0;
  unsigned m = 0, d = 0;
  char tail = 0;
  if (std::sscanf(text.c_str(), "%d-%u-%u%c", &y, &m, &d, &tail) != 3)
    throw IngestError("malformed date '" + text + "' (expected YYYY-MM-DD)");
  Date date{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (!date.ok()) throw IngestError("invalid calendar date '" + text + "'");
  return date;
}

std::string format_date(Date d) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(d.year()),
                static_cast<unsigned>(d.month()), static_cast<unsigned>(d.day()));
  return buf;
}

RatePanel read_rates(std::istream& in, const std::set<std::string>& inverse_assets, char delimiter) {
  std::string line;
  if (!std::getline(in, line)) throw IngestError("empty input: missing header row");
  auto header = split(line, delimiter);
  if (header.size() < 2) throw IngestError("header must contain a date column and at least one asset");
  std::vector<std::string> names(header.begin() + 1, header.end());
  for (const auto& inv : inverse_assets)
    if (std::find(names.begin(), names.end(), inv) == names.end())
      throw ConfigError("inverse asset '" + inv + "' not present in header");

  std::map<Date, std::vector<double>> rows;
  std::size_t row_index = 0;
  while (std::getline(in, line)) {
    ++row_index;
    if (trim(line).empty()) continue;
    auto cells = split(line, delimiter);
    if (cells.size() != header.size())
      throw IngestError("row " + std::to_string(row_index) + ": expected " +
                        std::to_string(header.size()) + " cells, got " + std::to_string(cells.size()));
    if (cells[0].empty()) throw IngestError("row " + std::to_string(row_index) + ": missing date");
    Date date = parse_date(cells[0]);
    std::vector<double> values(names.size());
    for (std::size_t j = 0; j < names.size(); ++j) {
      const std::string& c = cells[j + 1];
      if (c.empty())
        throw IngestError("row " + std::to_string(row_index) + ": missing value for " + names[j]);
      char* end = nullptr;
      double v = std::strtod(c.c_str(), &end);
      if (end == c.c_str() || *end != '\0' || !std::isfinite(v))
        throw IngestError("row " + std::to_string(row_index) + ": cannot parse '" + c + "'");
      if (v <= 0.0)
        throw IngestError("row " + std::to_string(row_index) + ": non-positive level for " + names[j]);
      values[j] = inverse_assets.count(names[j]) ? 1.0 / v : v;
    }
    if (!rows.emplace(date, std::move(values)).second)
      throw IngestError("duplicate date " + cells[0] + " at row " + std::to_string(row_index));
  }
  if (rows.empty()) throw IngestError("no data rows");

  RatePanel panel;
  panel.asset_names = std::move(names);
  panel.rates.resize(static_cast<Eigen::Index>(rows.size()),
                     static_cast<Eigen::Index>(panel.asset_names.size()));
  Eigen::Index t = 0;
  for (auto& [date, values] : rows) {
    panel.dates.push_back(date);
    for (std::size_t j = 0; j < values.size(); ++j) panel.rates(t, static_cast<Eigen::Index>(j)) = values[j];
    ++t;
  }
  return panel;
}

RatePanel ingest_rates(const std::string& path, const std::set<std::string>& inverse_assets,
                       char delimiter) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open " + path);
  return read_rates(in, inverse_assets, delimiter);
}

RatePanel select_assets(const RatePanel& panel, const std::vector<std::string>& names) {
  RatePanel out;
  out.dates = panel.dates;
  out.asset_names = names;
  out.rates.resize(panel.rates.rows(), static_cast<Eigen::Index>(names.size()));
  for (std::size_t j = 0; j < names.size(); ++j) {
    auto it = std::find(panel.asset_names.begin(), panel.asset_names.end(), names[j]);
    if (it == panel.asset_names.end()) throw ConfigError("unknown asset '" + names[j] + "'");
    out.rates.col(static_cast<Eigen::Index>(j)) =
        panel.rates.col(static_cast<Eigen::Index>(it - panel.asset_names.begin()));
  }
  return out;
}

ReturnPanel log_returns(const RatePanel& panel, Date split_date) {
  const auto rows = panel.rates.rows();
  if (rows < 2) throw ConfigError("at least two observations are needed for returns");
  if (split_date < panel.dates.front() || split_date > panel.dates.back())
    throw ConfigError("split date " + format_date(split_date) + " outside data range");
  ReturnPanel out;
  out.asset_names = panel.asset_names;
  out.returns = (panel.rates.bottomRows(rows - 1).array() / panel.rates.topRows(rows - 1).array()).log();
  out.dates.assign(panel.dates.begin() + 1, panel.dates.end());
  auto it = std::lower_bound(out.dates.begin(), out.dates.end(), split_date);
  out.split_index = static_cast<std::size_t>(it - out.dates.begin());
  return out;
}

double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw StatError("quantile of empty sample");
  double pos = q * static_cast<double>(sorted.size() - 1);
  auto lo = static_cast<std::size_t>(std::floor(pos));
  auto hi = std::min(lo + 1, sorted.size() - 1);
  double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

SampleStats sample_stats(std::span<const double> x) {
  const std::size_t n = x.size();
  if (n < 4) throw StatError("sample statistics need at least 4 observations");
  SampleStats s;
  const double nd = static_cast<double>(n);
  s.mean = std::accumulate(x.begin(), x.end(), 0.0) / nd;
  double m2 = 0, m3 = 0, m4 = 0;
  for (double v : x) {
    double d = v - s.mean;
    double d2 = d * d;
    m2 += d2;
    m3 += d2 * d;
    m4 += d2 * d2;
  }
  m2 /= nd;
  m3 /= nd;
  m4 /= nd;
  s.std = std::sqrt(m2 * nd / (nd - 1.0));
  if (m2 > 0.0) {
    // Bias-adjusted sample skewness (G1) and excess kurtosis (G2).
    double g1 = m3 / std::pow(m2, 1.5);
    double g2 = m4 / (m2 * m2) - 3.0;
    s.skew = std::sqrt(nd * (nd - 1.0)) / (nd - 2.0) * g1;
    s.excess_kurtosis = (nd - 1.0) / ((nd - 2.0) * (nd - 3.0)) * ((nd + 1.0) * g2 + 6.0);
  }
  std::vector<double> sorted(x.begin(), x.end());
  std::sort(sorted.begin(), sorted.end());
  s.min = sorted.front();
  s.max = sorted.back();
  s.p25 = quantile_sorted(sorted, 0.25);
  s.p50 = quantile_sorted(sorted, 0.50);
  s.p75 = quantile_sorted(sorted, 0.75);
  return s;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw StatError("correlation inputs differ in length");
  if (x.size() < 2) throw StatError("correlation needs at least two observations");
  Vector a = column_copy(x), b = column_copy(y);
  a.array() -= a.mean();
  b.array() -= b.mean();
  double saa = a.squaredNorm(), sbb = b.squaredNorm();
  if (saa == 0.0 || sbb == 0.0) throw StatError("zero variance column in correlation");
  return std::clamp(a.dot(b) / std::sqrt(saa * sbb), -1.0, 1.0);
}

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  auto rx = average_ranks(x);
  auto ry = average_ranks(y);
  return pearson(rx, ry);
}

Correlations correlations(const Matrix& panel) {
  const auto n = panel.cols();
  if (panel.rows() < 3) throw StatError("correlations need at least 3 rows");
  Correlations c{Matrix::Identity(n, n), Matrix::Identity(n, n)};
  std::vector<std::vector<double>> cols(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < n; ++j) {
    cols[static_cast<std::size_t>(j)].assign(panel.col(j).data(), panel.col(j).data() + panel.rows());
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const auto& a = cols[static_cast<std::size_t>(i)];
      const auto& b = cols[static_cast<std::size_t>(j)];
      c.linear(i, j) = c.linear(j, i) = pearson(a, b);
      c.rank(i, j) = c.rank(j, i) = spearman(a, b);
    }
    // zero-variance columns are rejected even when n == 1
    const auto& a = cols[static_cast<std::size_t>(i)];
    if (std::all_of(a.begin(), a.end(), [&](double v) { return v == a.front(); }))
      throw StatError("zero variance in column " + std::to_string(i));
  }
  return c;
}

CorrInterval bootstrap_corr_ci(const Matrix& pairs, int resamples, double level, std::uint64_t seed,
                               unsigned jobs) {
  if (pairs.cols() != 2) throw StatError("bootstrap expects a T x 2 matrix");
  const auto t_obs = static_cast<std::size_t>(pairs.rows());
  if (t_obs < 10) throw StatError("bootstrap needs at least 10 observations");
  if (!(level > 0.0 && level < 1.0)) throw StatError("confidence level must be in (0, 1)");
  if (resamples < 1) throw StatError("resample count must be positive");

  std::vector<double> x(pairs.col(0).data(), pairs.col(0).data() + t_obs);
  std::vector<double> y(pairs.col(1).data(), pairs.col(1).data() + t_obs);
  CorrInterval out;
  out.point = pearson(x, y);
  out.resamples = resamples;

  constexpr int kMaxRedraws = 100;
  std::vector<double> stats(static_cast<std::size_t>(resamples));
  parallel_for(stats.size(), jobs, [&](std::size_t b) {
    Rng rng = make_rng(seed, b);
    std::uniform_int_distribution<std::size_t> pick(0, t_obs - 1);
    std::vector<double> xs(t_obs), ys(t_obs);
    for (int attempt = 0; attempt < kMaxRedraws; ++attempt) {
      for (std::size_t i = 0; i < t_obs; ++i) {
        std::size_t k = pick(rng);
        xs[i] = x[k];
        ys[i] = y[k];
      }
      bool flat_x = std::all_of(xs.begin(), xs.end(), [&](double v) { return v == xs[0]; });
      bool flat_y = std::all_of(ys.begin(), ys.end(), [&](double v) { return v == ys[0]; });
      if (!flat_x && !flat_y) {
        stats[b] = pearson(xs, ys);
        return;
      }
    }
    throw StatError("bootstrap resample kept drawing a zero-variance column");
  });
  std::sort(stats.begin(), stats.end());
  double tail = 0.5 * (1.0 - level);
  out.lower = quantile_sorted(stats, tail);
  out.upper = quantile_sorted(stats, 1.0 - tail);
  return out;
}

}  // namespace cdg
