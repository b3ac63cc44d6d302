// cdg: estimate, fit, sweep and report copula-DCC-GARCH models from a CSV of rates.
#include <CLI11.hpp>

#include <iostream>

#include "cdg/errors.hpp"
#include "cdg/parallel.hpp"
#include "cdg/pipeline.hpp"

using namespace cdg;

namespace {

std::vector<DecompKind> parse_methods(const std::vector<std::string>& names) {
  std::vector<DecompKind> out;
  for (const auto& n : names) {
    if (n == "all") return {DecompKind::Sqrt, DecompKind::Sqrt2, DecompKind::Cholesky, DecompKind::Eigen, DecompKind::Eigen2};
    out.push_back(parse_decomp_kind(n));
  }
  return out;
}

std::vector<MenuItem> parse_menu(const std::vector<std::string>& names) {
  std::vector<MenuItem> out;
  for (const auto& n : names) {
    if (n == "all") return {all_menu_items().begin(), all_menu_items().end()};
    out.push_back(parse_menu_item(n));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Copula-DCC-GARCH estimation and model comparison"};
  app.require_subcommand(1, 1);
  app.fallthrough();
  app.set_config("--config", "", "Key-value config file; command-line flags take precedence");

  PipelineConfig c;
  c.jobs = default_jobs();
  std::vector<std::string> decomp{"cholesky"}, menu{"all"}, pivots;
  std::string oos = "continue";
  int schema = kConfigSchemaVersion;

  auto env = [](CLI::Option* o, const char* name) { o->envname(std::string("CDG_") + name); };
  env(app.add_option("--data", c.data, "CSV of rates: date column then one column per asset"), "DATA");
  env(app.add_option("--assets", c.assets, "Assets to keep, in order (default: all)")->delimiter(','), "ASSETS");
  env(app.add_option("--inverse", c.inverse, "Assets quoted the other way round")->delimiter(','), "INVERSE");
  env(app.add_option("--split", c.split, "First out-of-sample date, YYYY-MM-DD"), "SPLIT");
  env(app.add_option("--decomp", decomp, "sqrt, sqrt2, cholesky, eigen, eigen2 or all")->delimiter(','), "DECOMP");
  env(app.add_option("--tau", c.tau, "Eigen-sort window")->capture_default_str(), "TAU");
  env(app.add_option("--menu", menu, "Residual models: IC, CIC, GC, CGC, TC, CTC, PC, CPC or all")->delimiter(','),
      "MENU");
  env(app.add_option("--nodcc", c.nodcc, "Also model the GARCH residuals directly")->capture_default_str(), "NODCC");
  env(app.add_option("--families", c.families, "Pair-copula family codes for the sweep (default: all twelve)")
          ->delimiter(','),
      "FAMILIES");
  env(app.add_option("--pivots", pivots, "Pivots 1, 2, 3 for the sweep (default: all)")->delimiter(','), "PIVOTS");
  env(app.add_option("--pc-spec", c.pc_spec, "Pair copula fitted for PC / CPC by fit")->capture_default_str(),
      "PC_SPEC");
  env(app.add_flag("--sweep", c.sweep, "Run the pair-copula sweep after fit"), "SWEEP");
  env(app.add_option("--seed", c.seed, "Bootstrap seed")->capture_default_str(), "SEED");
  env(app.add_option("--resamples", c.resamples, "Bootstrap resamples")->capture_default_str(), "RESAMPLES");
  env(app.add_option("--level", c.level, "Confidence level of the intervals")->capture_default_str(), "LEVEL");
  env(app.add_option("--grid-sections", c.grid_sections, "Cells per axis of the model-correlation grid")
          ->capture_default_str(),
      "GRID_SECTIONS");
  env(app.add_option("--oos", oos, "Out-of-sample correlation start: continue or reset_q")
          ->check(CLI::IsMember({"continue", "reset_q"}))
          ->capture_default_str(),
      "OOS");
  env(app.add_option("--group", c.group, "Label of the asset group in report rows")->capture_default_str(), "GROUP");
  env(app.add_option("--jobs", c.jobs, "Worker threads")->capture_default_str(), "JOBS");
  env(app.add_option("--out", c.out, "Output directory")->capture_default_str(), "OUT");
  app.add_option("--schema-version,--schema_version", schema, "Config schema version")->group("");
  app.allow_config_extras(CLI::config_extras_mode::error);

  auto ingest = app.add_subcommand("ingest", "Read rates, write returns and summary statistics");
  auto fit = app.add_subcommand("fit", "GARCH, DCC and residual-model fits");
  auto sweep = app.add_subcommand("sweep", "Every pair-copula spec on the stored residuals");
  auto report = app.add_subcommand("report", "Correlation intervals, cokurtosis and LLIS/LLOOS scatter data");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (schema != kConfigSchemaVersion)
      throw ConfigError("unsupported config schema version " + std::to_string(schema));
    c.methods = parse_methods(decomp);
    c.menu = parse_menu(menu);
    c.pivots.clear();
    for (const auto& p : pivots) {
      if (p != "1" && p != "2" && p != "3") throw ConfigError("pivot must be 1, 2 or 3: " + p);
      c.pivots.push_back(static_cast<Pivot>(std::stoi(p)));
    }
    c.oos = oos == "continue" ? OutOfSampleStart::Continue : OutOfSampleStart::ResetQ;

    if (*ingest) cmd_ingest(c);
    if (*fit) cmd_fit(c);
    if (*sweep) cmd_sweep(c);
    if (*report) cmd_report(c);
  } catch (const ConfigError& e) {
    std::cerr << "cdg: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "cdg: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
