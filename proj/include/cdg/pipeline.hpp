#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cdg/dcc.hpp"
#include "cdg/decomp.hpp"
#include "cdg/evalkit.hpp"
#include "cdg/garch.hpp"
#include "cdg/market_data.hpp"
#include "cdg/residual_fit.hpp"

namespace cdg {

inline constexpr int kConfigSchemaVersion = 1;
inline constexpr const char* kVersion = "0.1.0";

struct PipelineConfig {
  std::string data;
  std::vector<std::string> assets;   // empty: every column
  std::vector<std::string> inverse;  // quoted the other way round in the file
  std::string split;                 // first out-of-sample date, YYYY-MM-DD
  std::vector<DecompKind> methods{DecompKind::Cholesky};
  int tau = 50;
  std::vector<MenuItem> menu{all_menu_items().begin(), all_menu_items().end()};
  bool nodcc = true;  // also model the GARCH residuals directly
  std::vector<std::string> families;  // pair-copula menu codes; empty: all twelve
  std::vector<Pivot> pivots;          // empty: all three
  std::string pc_spec = "P1:t:t:t";   // pair copula used by fit for PC / CPC
  bool sweep = false;                 // fit also runs the pair-copula sweep
  int grid_sections = 100;            // model-correlation grid of the report
  std::uint64_t seed = 1;
  int resamples = 10000;
  double level = 0.95;
  OutOfSampleStart oos = OutOfSampleStart::Continue;
  std::string group = "Group1";
  std::string out = "cdg_out";
  unsigned jobs = 1;
};

/// Throws ConfigError on invalid values.
void validate(const PipelineConfig& c);

/// Every setting that can change a numeric output (jobs and out are excluded).
nlohmann::json config_json(const PipelineConfig& c);

/// FNV-1a of the canonical config_json dump, as 16 hex digits.
std::string config_hash(const PipelineConfig& c);

nlohmann::json provenance(const PipelineConfig& c);

/// The label used for a residual type: "NoDCC" or the decomposition name.
std::string type_label(const std::optional<DecompKind>& method);

/// Residual types in report order: NoDCC first when enabled, then the methods.
std::vector<std::optional<DecompKind>> residual_types(const PipelineConfig& c);

// JSON round trips for the fitted objects.
nlohmann::json to_json(const GarchParams& p);
GarchParams garch_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DccParams& p);
DccParams dcc_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ResidualModel& m);
ResidualModel residual_model_from_json(const nlohmann::json& j);
nlohmann::json to_json(const FitResult& r);
FitResult fit_result_from_json(const nlohmann::json& j);

/// State produced by the estimation stages; everything later stages need.
struct PipelineState {
  ReturnPanel returns;
  std::vector<GarchFit> garch;
  DccFit dcc;
  Matrix xi;                           // GARCH residuals, all rows
  Matrix sigma;                        // conditional volatilities, all rows
  CorrPath path;                       // DCC correlations, all rows
  std::vector<std::pair<std::string, Matrix>> residuals;  // type label -> residuals, all rows
};

/// Ingest, GARCH and DCC stages plus the residuals of every configured type.
PipelineState estimate(const PipelineConfig& c);

/// Fits `c.menu` for every residual type on the in-sample rows.
struct FitRow {
  std::string type;
  FitResult fit;
  ReturnsLoglik loglik;
};

ReturnsModel returns_model(const PipelineState& s, const std::optional<DecompKind>& method, int tau);

/// `on_fit` runs once per finished fit, possibly from several threads.
std::vector<FitRow> fit_menu(const PipelineConfig& c, const PipelineState& s,
                             const std::function<void(const FitRow&)>& on_fit = {});

/// One sweep row; `error` is set when the fit failed.
struct SweepRow {
  std::string type;
  MenuItem item = MenuItem::PC;
  std::string spec;
  std::optional<FitResult> fit;
  double llis = 0.0;
  double lloos = 0.0;
  std::string error;
};

/// Returns context for llis / lloos; without it llis is the in-sample
/// residual log-likelihood per observation and lloos is NaN.
struct SweepReturns {
  ReturnsModel model;
  Matrix returns;
  std::size_t split = 0;
  OutOfSampleStart oos = OutOfSampleStart::Continue;
};

/// PC / CPC fits of every spec in enumeration order on `jobs` threads.
std::vector<SweepRow> sweep_specs(const Matrix& residuals, const std::string& type, const std::vector<MenuItem>& items,
                                  const std::vector<PairCopula>& specs, unsigned jobs,
                                  const std::optional<SweepReturns>& ctx = std::nullopt);

std::vector<PairCopula> sweep_menu(const PipelineConfig& c);

void write_sweep_report(std::ostream& out, const std::vector<SweepRow>& rows);
nlohmann::json sweep_summary(const std::vector<SweepRow>& rows);

// Subcommands. Each writes its artifacts below c.out and returns normally, or
// writes c.out/.failed and rethrows.
/// Residuals of every configured type rebuilt from garch.json / dcc.json
/// under c.out, which must come from the same data, assets and split.
PipelineState load_state(const PipelineConfig& c);

void cmd_ingest(const PipelineConfig& c);
void cmd_fit(const PipelineConfig& c);
void cmd_sweep(const PipelineConfig& c);
void cmd_report(const PipelineConfig& c);

}  // namespace cdg
