#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cdg/errors.hpp"
#include "cdg/pipeline.hpp"

using namespace cdg;
namespace fs = std::filesystem;

namespace {

PipelineConfig fixture_config(const std::string& out) {
  PipelineConfig c;
  c.data = CDG_TEST_DATA_DIR "/fx_synthetic.csv";
  c.split = "2020-07-01";
  c.methods = {DecompKind::Cholesky, DecompKind::Eigen};
  c.menu = {MenuItem::IC, MenuItem::GC, MenuItem::CGC};
  c.families = {"ga", "fr"};
  c.pivots = {Pivot::P1};
  c.resamples = 500;
  c.out = (fs::temp_directory_path() / out).string();
  fs::remove_all(c.out);
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

}  // namespace

TEST_CASE("config validation and hashing") {
  PipelineConfig c = fixture_config("cdg_cfg");
  CHECK_NOTHROW(validate(c));
  const std::string h = config_hash(c);
  CHECK(h.size() == 16);

  PipelineConfig other = c;
  other.jobs = 7;
  other.out = "elsewhere";
  CHECK(config_hash(other) == h);
  other.tau = 20;
  CHECK(config_hash(other) != h);

  auto j = config_json(c);
  CHECK(j["schema_version"] == kConfigSchemaVersion);
  CHECK(j["decomp"] == nlohmann::json({"cholesky", "eigen"}));

  PipelineConfig bad = c;
  bad.split = "2020-13-01";
  CHECK_THROWS_AS(validate(bad), ConfigError);
  bad = c;
  bad.menu.clear();
  CHECK_THROWS_AS(validate(bad), ConfigError);
  bad = c;
  bad.families = {"zz"};
  CHECK_THROWS_AS(validate(bad), ConfigError);
  bad = c;
  bad.assets = {"EUR", "EUR"};
  CHECK_THROWS_AS(validate(bad), ConfigError);

  CHECK(type_label(std::nullopt) == "NoDCC");
  CHECK(type_label(DecompKind::Sqrt2) == "Sqrt2");
  CHECK(residual_types(c).size() == 3);
}

TEST_CASE("fitted objects survive a JSON round trip") {
  GarchParams g{2e-7, 0.06, 0.9, 0.004};
  auto g2 = garch_from_json(nlohmann::json::parse(to_json(g).dump()));
  CHECK(g2.omega == g.omega);
  CHECK(g2.sigma0 == g.sigma0);

  Matrix q(2, 2);
  q << 1, 0.3, 0.3, 1;
  DccParams d{0.03, 0.9, CorrMatrix(q), CorrMatrix::identity(2)};
  auto d2 = dcc_from_json(nlohmann::json::parse(to_json(d).dump()));
  CHECK(d2.q_bar.matrix() == d.q_bar.matrix());

  Matrix s(3, 3);
  s << 1, 0.2, 0.1, 0.2, 1, -0.3, 0.1, -0.3, 1;
  Matrix l(3, 3);
  l << 1, 0, 0, 0.1, 0.9, 0, -0.2, 0.05, 1.1;
  std::vector<ResidualModel> models(3);
  for (auto& m : models) m.marginals = {{5.0, 0.9}, {7.5, 1.1}, {12.0, 1.0}};
  models[0].copula = StudentTCopula{CorrMatrix(s), 6.5};
  models[0].addin = AddInTransform{l};
  models[1].copula = parse_spec_string("P2:gu90:fr:t");
  auto& pc = std::get<PairCopula>(models[1].copula);
  pc.edges[0].theta = 1.4;
  pc.edges[1].theta = 3.0;
  pc.edges[2] = CopulaFamily::student_t(0.2, 8.0);
  models[2].copula = IndependentCopula{};

  std::vector<double> x{0.3, -1.2, 0.7};
  for (const auto& m : models) {
    FitResult r;
    r.item = MenuItem::CTC;
    r.model = m;
    r.loglik = -123.25;
    r.k = parameter_count(m);
    r.n = 400;
    auto back = fit_result_from_json(nlohmann::json::parse(to_json(r).dump()));
    CHECK(residual_logdensity(back.model, x) == residual_logdensity(m, x));
    CHECK(back.spec() == r.spec());
    CHECK(back.k == r.k);
  }
}

TEST_CASE("menu fits on the fixture") {
  PipelineConfig c = fixture_config("cdg_menu");
  PipelineState s = estimate(c);
  REQUIRE(s.residuals.size() == 3);
  CHECK(s.returns.asset_names == std::vector<std::string>{"EUR", "GBP", "JPY"});
  auto rows = fit_menu(c, s);
  REQUIRE(rows.size() == 9);
  for (std::size_t t = 0; t < 3; ++t) {
    const auto& ic = rows[3 * t].fit;
    const auto& gc = rows[3 * t + 1].fit;
    const auto& cgc = rows[3 * t + 2].fit;
    CHECK(gc.loglik >= ic.loglik - 1e-6);
    CHECK(cgc.loglik >= gc.loglik - 1e-6);
    CHECK(std::isfinite(rows[3 * t].loglik.lloos));
  }
  CHECK(rows[3].type == "Cholesky");
  CHECK(rows[8].fit.item == MenuItem::CGC);
}

TEST_CASE("reduced sweep") {
  PipelineConfig c = fixture_config("cdg_sweep");
  c.nodcc = false;
  c.methods = {DecompKind::Cholesky};
  PipelineState s = estimate(c);
  const auto specs = sweep_menu(c);
  REQUIRE(specs.size() == 8);
  const Matrix in = s.residuals[0].second.topRows(static_cast<Eigen::Index>(s.returns.split_index));
  SweepReturns ctx{returns_model(s, DecompKind::Cholesky, c.tau), s.returns.returns, s.returns.split_index};

  auto serial = sweep_specs(in, "Cholesky", {MenuItem::PC, MenuItem::CPC}, specs, 1, ctx);
  auto parallel = sweep_specs(in, "Cholesky", {MenuItem::PC, MenuItem::CPC}, specs, 3, ctx);
  REQUIRE(serial.size() == 16);
  std::ostringstream a, b;
  write_sweep_report(a, serial);
  write_sweep_report(b, parallel);
  CHECK(a.str() == b.str());
  CHECK(lines_of(a.str()).size() == 17);

  for (std::size_t k = 0; k < 8; ++k) {
    CHECK(serial[k].item == MenuItem::PC);
    CHECK(serial[k].spec == spec_string(specs[k]));
    REQUIRE(serial[k].fit);
    REQUIRE(serial[8 + k].fit);
    CHECK(serial[8 + k].fit->loglik >= serial[k].fit->loglik - 1e-6);
  }

  auto summary = sweep_summary(serial);
  REQUIRE(summary["groups"].size() == 2);
  const auto& pc = summary["groups"][0];
  CHECK(pc["rows"] == 8);
  double min_aic = INFINITY, max_llis = -INFINITY;
  std::string aic_spec, llis_spec;
  for (std::size_t k = 0; k < 8; ++k) {
    if (serial[k].fit->aic < min_aic) {
      min_aic = serial[k].fit->aic;
      aic_spec = serial[k].spec;
    }
    if (serial[k].llis > max_llis) {
      max_llis = serial[k].llis;
      llis_spec = serial[k].spec;
    }
  }
  CHECK(pc["best_aic"]["spec"] == aic_spec);
  CHECK(pc["best_aic"]["aic"].get<double>() == min_aic);
  CHECK(pc["best_llis"]["spec"] == llis_spec);

  CHECK_THROWS_AS(sweep_specs(in, "Cholesky", {MenuItem::GC}, specs, 1), ParamError);

  SweepRow bad{"Cholesky", MenuItem::PC, "P1:ga:ga:ga", std::nullopt, 0.0, 0.0, "no convergence, stopped"};
  std::ostringstream c1;
  write_sweep_report(c1, {bad});
  CHECK(lines_of(c1.str())[1] == "Cholesky,PC,P1:ga:ga:ga,failed,,,,,,,,,,no convergence; stopped");
  CHECK(sweep_summary({bad})["groups"][0]["failed"] == 1);
}

TEST_CASE("subcommands write their artifacts") {
  PipelineConfig c = fixture_config("cdg_cmd");
  c.methods = {DecompKind::Eigen};
  c.menu = {MenuItem::IC, MenuItem::GC, MenuItem::PC};
  c.pc_spec = "P1:ga:fr:ga";
  c.grid_sections = 40;
  const fs::path out(c.out);

  CHECK_THROWS(cmd_report(c));
  CHECK(fs::exists(out / ".failed"));

  cmd_ingest(c);
  CHECK(fs::exists(out / "returns.csv"));
  cmd_fit(c);
  CHECK_FALSE(fs::exists(out / ".failed"));
  for (const char* f : {"garch.json", "dcc.json", "residuals.csv", "rpath.csv", "report.csv", "provenance.json",
                        "fits/Eigen_PC.json", "fits/NoDCC_IC.json"})
    CHECK_MESSAGE(fs::exists(out / f), f);
  auto report = lines_of(slurp(out / "report.csv"));
  CHECK(report.size() == 1 + 2 * 3);
  CHECK(report[0].rfind("method,type,spec,loglik,k,aic,bic,llis,lloos,addin_used", 0) == 0);
  CHECK(lines_of(slurp(out / "residuals.csv"))[0] == "date,window,xi:EUR,xi:GBP,xi:JPY,Eigen:EUR,Eigen:GBP,Eigen:JPY");

  auto garch = nlohmann::json::parse(slurp(out / "garch.json"));
  CHECK(garch["provenance"]["config"]["decomp"] == nlohmann::json({"eigen"}));
  CHECK(garch["provenance"]["config"]["tau"] == 50);
  CHECK(garch["provenance"]["config_hash"] == config_hash(c));

  const std::string first = slurp(out / "fits/Eigen_PC.json");
  cmd_fit(c);
  CHECK(slurp(out / "fits/Eigen_PC.json") == first);

  cmd_sweep(c);
  CHECK(lines_of(slurp(out / "sweep_report.csv")).size() == 1 + 2 * 8);

  cmd_report(c);
  auto ci = lines_of(slurp(out / "corr_intervals.csv"));
  CHECK(ci[0] == "pair,method,point,lower,upper");
  CHECK(ci.size() == 1 + 2 * 3);
  auto ck = lines_of(slurp(out / "cokurtosis.csv"));
  CHECK(ck[0] == "row,NoDCC,Eigen");
  CHECK(ck[1].rfind("Group1-12,", 0) == 0);
  CHECK(ck[3].rfind("Group1-23,", 0) == 0);
  auto scatter = lines_of(slurp(out / "llis_lloos_scatter.csv"));
  CHECK(scatter[0] == "spec,method,type,source,llis,lloos,aic,bic,corr_test");
  CHECK(scatter.size() == 1 + 6 + 2 * 8);
  for (std::size_t k = 1; k < scatter.size(); ++k) {
    const auto tail = scatter[k].substr(scatter[k].rfind(',') + 1);
    CHECK((tail == "pass" || tail == "reject"));
  }

  // Later stages refuse estimates made on another split.
  PipelineConfig moved = c;
  moved.split = "2020-08-03";
  CHECK_THROWS_AS(cmd_sweep(moved), ConfigError);
  CHECK(fs::exists(out / ".failed"));
}
