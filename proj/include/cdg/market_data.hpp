#pragma once

#include <chrono>
#include <cstdint>
#include <iosfwd>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "cdg/types.hpp"

namespace cdg {

using Date = std::chrono::year_month_day;

/// Parses YYYY-MM-DD. Throws IngestError on malformed or invalid dates.
Date parse_date(const std::string& text);
std::string format_date(Date d);

/// Positive price levels, one column per asset, rows in strictly increasing date order.
struct RatePanel {
  std::vector<Date> dates;
  Matrix rates;  // T x N
  std::vector<std::string> asset_names;
};

/// Log returns between consecutive observations; row t is the return from
/// rates[t] to rates[t + 1] and is stamped with dates[t + 1].
struct ReturnPanel {
  std::vector<Date> dates;
  Matrix returns;  // (T-1) x N
  std::vector<std::string> asset_names;
  std::size_t split_index = 0;  // first out-of-sample row

  Matrix in_sample() const { return returns.topRows(static_cast<Eigen::Index>(split_index)); }
  Matrix out_of_sample() const {
    return returns.bottomRows(returns.rows() - static_cast<Eigen::Index>(split_index));
  }
};

struct SampleStats {
  double mean = 0.0;
  double std = 0.0;  // denominator n - 1
  double skew = 0.0;
  double excess_kurtosis = 0.0;
  double min = 0.0;
  double p25 = 0.0;
  double p50 = 0.0;
  double p75 = 0.0;
  double max = 0.0;
};

struct CorrInterval {
  double point = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  int resamples = 0;

  bool contains(double x) const { return lower <= x && x <= upper; }
};

struct Correlations {
  Matrix linear;  // Pearson
  Matrix rank;    // Spearman with average ranks
};

/// Reads `date,<asset1>,...` delimited text. Rows are sorted by date and
/// assets listed in `inverse_assets` are replaced by their reciprocal.
RatePanel read_rates(std::istream& in, const std::set<std::string>& inverse_assets = {},
                     char delimiter = ',');
RatePanel ingest_rates(const std::string& path, const std::set<std::string>& inverse_assets = {},
                       char delimiter = ',');

/// Keeps the named columns, in the given order.
RatePanel select_assets(const RatePanel& panel, const std::vector<std::string>& names);

ReturnPanel log_returns(const RatePanel& panel, Date split_date);

/// Linear-interpolated quantile of sorted data (q in [0, 1]).
double quantile_sorted(std::span<const double> sorted, double q);

SampleStats sample_stats(std::span<const double> x);

double pearson(std::span<const double> x, std::span<const double> y);
/// 1-based ranks, ties receive the average of the ranks they span.
std::vector<double> average_ranks(std::span<const double> x);
double spearman(std::span<const double> x, std::span<const double> y);

Correlations correlations(const Matrix& panel);

/// Percentile bootstrap interval for the Pearson correlation of the two
/// columns of `pairs`. Resample b draws its rows from the stream (seed, b), so
/// the interval does not depend on `jobs`.
CorrInterval bootstrap_corr_ci(const Matrix& pairs, int resamples, double level,
                               std::uint64_t seed, unsigned jobs = 1);

}  // namespace cdg
