#include "cdg/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "cdg/errors.hpp"
#include "cdg/parallel.hpp"
#include "cdg/rng.hpp"

namespace cdg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

json num_json(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

double from_num_json(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

// Commas and line breaks would break the flat CSV layout.
std::string csv_field(std::string s) {
  for (char& ch : s)
    if (ch == ',' || ch == '\n' || ch == '\r') ch = ch == ',' ? ';' : ' ';
  return s;
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex16(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot read " + p.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const fs::path& p, const std::string& content) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + p.string());
  out << content;
  if (!out) throw Error("cannot write " + p.string());
}

void write_json(const fs::path& p, const json& j) { write_file(p, j.dump(2) + "\n"); }

json read_json(const fs::path& p) {
  try {
    return json::parse(read_file(p));
  } catch (const json::exception& e) {
    throw Error("malformed JSON in " + p.string() + ": " + e.what());
  }
}

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const json& j) {
  const auto n = static_cast<Eigen::Index>(j.size());
  const auto k = n ? static_cast<Eigen::Index>(j.at(0).size()) : 0;
  Matrix m(n, k);
  for (Eigen::Index r = 0; r < n; ++r) {
    if (static_cast<Eigen::Index>(j.at(r).size()) != k) throw ParamError("ragged matrix in JSON");
    for (Eigen::Index c = 0; c < k; ++c) m(r, c) = j.at(r).at(c).get<double>();
  }
  return m;
}

std::string oos_name(OutOfSampleStart s) { return s == OutOfSampleStart::Continue ? "continue" : "reset_q"; }

std::string pair_label(int i, int j) {
  if (i < 9 && j < 9) return std::to_string(i + 1) + std::to_string(j + 1);
  return std::to_string(i + 1) + "-" + std::to_string(j + 1);
}

std::vector<CopulaFamily> family_menu(const PipelineConfig& c) {
  if (c.families.empty()) return pair_family_menu();
  std::vector<CopulaFamily> out;
  for (const auto& code : c.families) out.push_back(parse_family_code(code));
  return out;
}

std::vector<Pivot> pivot_menu(const PipelineConfig& c) {
  if (c.pivots.empty()) return {Pivot::P1, Pivot::P2, Pivot::P3};
  return c.pivots;
}

// The settings that determine the estimation stages.
json estimation_json(const PipelineConfig& c) {
  json j = config_json(c);
  return {{"data", j["data"]}, {"assets", j["assets"]}, {"inverse", j["inverse"]}, {"split", j["split"]}};
}

std::string data_fingerprint(const std::string& path) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) return "";
  return hex16(fnv1a(read_file(path)));
}

std::optional<DecompKind> kind_from_label(const std::string& label) {
  if (label == "NoDCC") return std::nullopt;
  std::string lower = label;
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return parse_decomp_kind(lower);
}

ReturnPanel read_returns(const PipelineConfig& c) {
  std::set<std::string> inverse(c.inverse.begin(), c.inverse.end());
  RatePanel rates = ingest_rates(c.data, inverse);
  if (!c.assets.empty()) rates = select_assets(rates, c.assets);
  if (rates.asset_names.size() < 2) throw ConfigError("at least two assets are needed");
  ReturnPanel r = log_returns(rates, parse_date(c.split));
  if (r.split_index < 2) throw ConfigError("the split date leaves no in-sample returns");
  return r;
}

// Residual types beyond the GARCH residuals, from the filtered path.
void add_residuals(const PipelineConfig& c, PipelineState& s) {
  s.residuals.clear();
  for (const auto& type : residual_types(c)) {
    if (!type) {
      s.residuals.emplace_back("NoDCC", s.xi);
    } else {
      DecompMethod m{*type, c.tau};
      s.residuals.emplace_back(type_label(type), dcc_residuals(s.path, s.xi, m, &s.sigma));
    }
  }
}

void filter_all(PipelineState& s) {
  const Eigen::Index T = s.returns.returns.rows(), n = s.returns.returns.cols();
  s.sigma.resize(T, n);
  s.xi.resize(T, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    VolPath v = filter_variance(s.garch[static_cast<std::size_t>(i)].params, s.returns.returns.col(i));
    s.sigma.col(i) = v.sigma;
    s.xi.col(i) = v.xi;
  }
}

void check_pair_copula_dimension(const PipelineConfig& c, Eigen::Index n) {
  bool pair = c.sweep;
  for (auto item : c.menu) pair = pair || uses_pair_copula(item);
  if (pair && n != 3) throw ConfigError("pair-copula models need exactly three assets");
}

std::string fit_file_name(const std::string& type, MenuItem item) { return type + "_" + to_string(item) + ".json"; }

json fit_record(const PipelineConfig& c, const FitRow& row) {
  return {{"provenance", provenance(c)},
          {"method", row.type},
          {"fit", to_json(row.fit)},
          {"llis", num_json(row.loglik.llis)},
          {"lloos", num_json(row.loglik.lloos)}};
}

void write_state(const PipelineConfig& c, const PipelineState& s) {
  const fs::path out(c.out);
  json prov = provenance(c);

  json assets = json::array();
  for (std::size_t i = 0; i < s.garch.size(); ++i)
    assets.push_back({{"name", s.returns.asset_names[i]},
                      {"params", to_json(s.garch[i].params)},
                      {"loglik", s.garch[i].report.loglik},
                      {"converged", s.garch[i].report.converged}});
  write_json(out / "garch.json", {{"provenance", prov}, {"assets", assets}});
  write_json(out / "dcc.json", {{"provenance", prov},
                                {"params", to_json(s.dcc.params)},
                                {"loglik", s.dcc.report.loglik},
                                {"converged", s.dcc.report.converged}});

  const auto& names = s.returns.asset_names;
  std::ostringstream res;
  // GARCH residuals first, then the DCC residuals of each method.
  std::vector<std::pair<std::string, const Matrix*>> blocks{{"xi", &s.xi}};
  for (const auto& [label, m] : s.residuals)
    if (label != "NoDCC") blocks.emplace_back(label, &m);
  res << "date,window";
  for (const auto& [label, m] : blocks)
    for (const auto& a : names) res << ',' << label << ':' << a;
  res << '\n';
  for (Eigen::Index t = 0; t < s.xi.rows(); ++t) {
    res << format_date(s.returns.dates[static_cast<std::size_t>(t)]) << ','
        << (static_cast<std::size_t>(t) < s.returns.split_index ? "in" : "out");
    for (const auto& [label, m] : blocks)
      for (Eigen::Index i = 0; i < m->cols(); ++i) res << ',' << num((*m)(t, i));
    res << '\n';
  }
  write_file(out / "residuals.csv", res.str());

  auto pairs = index_pairs(static_cast<int>(names.size()));
  std::ostringstream rp;
  rp << "date,window";
  for (auto [i, j] : pairs) rp << ",R:" << names[i] << ':' << names[j];
  rp << '\n';
  for (std::size_t t = 0; t < s.path.r.size(); ++t) {
    rp << format_date(s.returns.dates[t]) << ',' << (t < s.returns.split_index ? "in" : "out");
    for (auto [i, j] : pairs) rp << ',' << num(s.path.r[t](i, j));
    rp << '\n';
  }
  write_file(out / "rpath.csv", rp.str());
}

void write_fit_report(const PipelineConfig& c, const std::vector<FitRow>& rows) {
  std::ostringstream r;
  r << "method,type,spec,loglik,k,aic,bic,llis,lloos,addin_used,converged,at_boundary,clamp_count\n";
  for (const auto& row : rows) {
    const auto& f = row.fit;
    r << row.type << ',' << to_string(f.item) << ',' << f.spec() << ',' << num(f.loglik) << ',' << f.k << ','
      << num(f.aic) << ',' << num(f.bic) << ',' << num(row.loglik.llis) << ',' << num(row.loglik.lloos) << ','
      << (f.model.addin ? "true" : "false") << ',' << (f.converged ? "true" : "false") << ','
      << (f.at_boundary ? "true" : "false") << ',' << f.clamp_count << '\n';
  }
  write_file(fs::path(c.out) / "report.csv", r.str());
}

void write_provenance(const PipelineConfig& c, const std::string& command, const std::vector<std::string>& artifacts) {
  const fs::path p = fs::path(c.out) / "provenance.json";
  json j;
  std::error_code ec;
  if (fs::is_regular_file(p, ec)) {
    try {
      j = json::parse(read_file(p));
    } catch (const json::exception&) {
      j = json::object();
    }
  }
  // A run with another configuration starts the record afresh.
  if (!j.is_object() || j.value("config_hash", "") != config_hash(c)) j = provenance(c);
  j["artifacts"][command] = artifacts;
  write_json(p, j);
}

template <class Fn>
void guarded(const PipelineConfig& c, const std::string& command, Fn&& fn) {
  validate(c);
  const fs::path out(c.out);
  fs::create_directories(out);
  const fs::path marker = out / ".failed";
  std::error_code ec;
  fs::remove(marker, ec);
  try {
    fn();
  } catch (const std::exception& e) {
    try {
      write_file(marker, command + ": " + e.what() + "\n");
    } catch (...) {
    }
    throw;
  }
}

void run_sweep(const PipelineConfig& c, const PipelineState& s) {
  std::vector<MenuItem> items;
  for (auto item : {MenuItem::PC, MenuItem::CPC})
    if (std::find(c.menu.begin(), c.menu.end(), item) != c.menu.end()) items.push_back(item);
  if (items.empty()) items = {MenuItem::PC, MenuItem::CPC};

  const auto specs = sweep_menu(c);
  const auto split = static_cast<Eigen::Index>(s.returns.split_index);
  std::vector<SweepRow> rows;
  for (const auto& [label, resid] : s.residuals) {
    SweepReturns ctx{returns_model(s, kind_from_label(label), c.tau), s.returns.returns, s.returns.split_index, c.oos};
    auto part = sweep_specs(resid.topRows(split), label, items, specs, c.jobs, ctx);
    for (const auto& row : part)
      if (!row.error.empty())
        std::cerr << "sweep: " << label << ' ' << to_string(row.item) << ' ' << row.spec << ": " << row.error << '\n';
    rows.insert(rows.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }

  const fs::path out(c.out);
  std::ostringstream csv;
  write_sweep_report(csv, rows);
  write_file(out / "sweep_report.csv", csv.str());

  json summary = sweep_summary(rows);
  summary["provenance"] = provenance(c);
  write_json(out / "sweep_summary.json", summary);

  std::ostringstream models;
  for (const auto& row : rows) {
    if (!row.fit) continue;
    json j = {{"method", row.type}, {"fit", to_json(*row.fit)}, {"llis", num_json(row.llis)},
              {"lloos", num_json(row.lloos)}};
    models << j.dump() << '\n';
  }
  write_file(out / "sweep_models.jsonl", models.str());
}

}  // namespace

void validate(const PipelineConfig& c) {
  if (c.data.empty()) throw ConfigError("no data file given");
  if (c.split.empty()) throw ConfigError("no split date given");
  try {
    parse_date(c.split);
  } catch (const IngestError& e) {
    throw ConfigError(std::string("split date: ") + e.what());
  }
  if (c.tau < 1) throw ConfigError("tau must be at least 1");
  if (c.menu.empty()) throw ConfigError("the menu is empty");
  if (!c.nodcc && c.methods.empty()) throw ConfigError("no residual type selected");
  if (c.resamples < 1) throw ConfigError("resamples must be positive");
  if (!(c.level > 0.0 && c.level < 1.0)) throw ConfigError("level must lie in (0, 1)");
  if (c.jobs < 1) throw ConfigError("jobs must be at least 1");
  if (c.grid_sections < 10) throw ConfigError("grid sections must be at least 10");
  if (c.group.empty()) throw ConfigError("group label is empty");
  std::set<std::string> seen;
  for (const auto& a : c.assets)
    if (!seen.insert(a).second) throw ConfigError("asset listed twice: " + a);
  try {
    family_menu(c);
    parse_spec_string(c.pc_spec);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
}

json config_json(const PipelineConfig& c) {
  json methods = json::array();
  for (auto m : c.methods) methods.push_back(to_string(m));
  json menu = json::array();
  for (auto m : c.menu) menu.push_back(to_string(m));
  json pivots = json::array();
  for (auto p : c.pivots) pivots.push_back(static_cast<int>(p));
  return {{"schema_version", kConfigSchemaVersion},
          {"data", c.data},
          {"assets", c.assets},
          {"inverse", c.inverse},
          {"split", c.split},
          {"decomp", methods},
          {"tau", c.tau},
          {"menu", menu},
          {"nodcc", c.nodcc},
          {"families", c.families},
          {"pivots", pivots},
          {"pc_spec", c.pc_spec},
          {"sweep", c.sweep},
          {"grid_sections", c.grid_sections},
          {"seed", c.seed},
          {"resamples", c.resamples},
          {"level", c.level},
          {"oos", oos_name(c.oos)},
          {"group", c.group}};
}

std::string config_hash(const PipelineConfig& c) { return hex16(fnv1a(config_json(c).dump())); }

json provenance(const PipelineConfig& c) {
  return {{"version", kVersion},
          {"config_hash", config_hash(c)},
          {"config", config_json(c)},
          {"data_fingerprint", data_fingerprint(c.data)}};
}

std::string type_label(const std::optional<DecompKind>& method) {
  if (!method) return "NoDCC";
  std::string s = to_string(*method);
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

std::vector<std::optional<DecompKind>> residual_types(const PipelineConfig& c) {
  std::vector<std::optional<DecompKind>> out;
  if (c.nodcc) out.push_back(std::nullopt);
  for (auto m : c.methods)
    if (std::find(out.begin(), out.end(), std::optional<DecompKind>(m)) == out.end()) out.push_back(m);
  return out;
}

json to_json(const GarchParams& p) {
  return {{"omega", p.omega}, {"alpha", p.alpha}, {"beta", p.beta}, {"sigma0", p.sigma0}};
}

GarchParams garch_from_json(const json& j) {
  GarchParams p{j.at("omega").get<double>(), j.at("alpha").get<double>(), j.at("beta").get<double>(),
                j.at("sigma0").get<double>()};
  validate(p);
  return p;
}

json to_json(const DccParams& p) {
  return {{"a", p.a}, {"b", p.b}, {"q_bar", matrix_json(p.q_bar.matrix())}, {"q0", matrix_json(p.q0.matrix())}};
}

DccParams dcc_from_json(const json& j) {
  DccParams p{j.at("a").get<double>(), j.at("b").get<double>(), CorrMatrix(matrix_from_json(j.at("q_bar"))),
              CorrMatrix(matrix_from_json(j.at("q0")))};
  validate(p);
  return p;
}

json to_json(const ResidualModel& m) {
  json marginals = json::array();
  for (const auto& p : m.marginals) marginals.push_back({{"nu", p.nu}, {"gamma", p.gamma}});
  json copula;
  if (std::holds_alternative<IndependentCopula>(m.copula)) {
    copula = {{"kind", "independent"}};
  } else if (auto g = std::get_if<GaussianCopula>(&m.copula)) {
    copula = {{"kind", "gaussian"}, {"sigma", matrix_json(g->sigma.matrix())}};
  } else if (auto t = std::get_if<StudentTCopula>(&m.copula)) {
    copula = {{"kind", "t"}, {"sigma", matrix_json(t->sigma.matrix())}, {"nu", t->nu}};
  } else {
    const auto& pc = std::get<PairCopula>(m.copula);
    json edges = json::array();
    for (const auto& e : pc.edges)
      edges.push_back({{"family", family_code(e)}, {"theta", e.theta}, {"nu", e.nu}});
    copula = {{"kind", "pair"}, {"spec", spec_string(pc)}, {"pivot", static_cast<int>(pc.pivot)}, {"edges", edges}};
  }
  return {{"marginals", marginals},
          {"copula", copula},
          {"addin", m.addin ? matrix_json(m.addin->lower) : json(nullptr)}};
}

ResidualModel residual_model_from_json(const json& j) {
  ResidualModel m;
  for (const auto& p : j.at("marginals")) m.marginals.push_back({p.at("nu").get<double>(), p.at("gamma").get<double>()});
  const json& c = j.at("copula");
  const std::string kind = c.at("kind").get<std::string>();
  if (kind == "independent") {
    m.copula = IndependentCopula{};
  } else if (kind == "gaussian") {
    m.copula = GaussianCopula{CorrMatrix(matrix_from_json(c.at("sigma")))};
  } else if (kind == "t") {
    m.copula = StudentTCopula{CorrMatrix(matrix_from_json(c.at("sigma"))), c.at("nu").get<double>()};
  } else if (kind == "pair") {
    PairCopula pc;
    const int pivot = c.at("pivot").get<int>();
    if (pivot < 1 || pivot > 3) throw ParamError("pivot must be 1, 2 or 3");
    pc.pivot = static_cast<Pivot>(pivot);
    if (c.at("edges").size() != 3) throw ParamError("a pair copula has three edges");
    for (std::size_t e = 0; e < 3; ++e) {
      const json& ej = c.at("edges").at(e);
      CopulaFamily f = parse_family_code(ej.at("family").get<std::string>());
      f.theta = ej.at("theta").get<double>();
      f.nu = ej.at("nu").get<double>();
      pc.edges[e] = f;
    }
    m.copula = pc;
  } else {
    throw ParamError("unknown copula kind: " + kind);
  }
  if (!j.at("addin").is_null()) m.addin = AddInTransform{matrix_from_json(j.at("addin"))};
  m.validate();
  return m;
}

json to_json(const FitResult& r) {
  return {{"item", to_string(r.item)},
          {"spec", r.spec()},
          {"model", to_json(r.model)},
          {"loglik", num_json(r.loglik)},
          {"k", r.k},
          {"aic", num_json(r.aic)},
          {"bic", num_json(r.bic)},
          {"n", r.n},
          {"converged", r.converged},
          {"at_boundary", r.at_boundary},
          {"clamp_count", r.clamp_count},
          {"iterations", r.iterations}};
}

FitResult fit_result_from_json(const json& j) {
  FitResult r;
  r.item = parse_menu_item(j.at("item").get<std::string>());
  r.model = residual_model_from_json(j.at("model"));
  r.loglik = from_num_json(j.at("loglik"));
  r.k = j.at("k").get<int>();
  r.aic = from_num_json(j.at("aic"));
  r.bic = from_num_json(j.at("bic"));
  r.n = j.at("n").get<std::size_t>();
  r.converged = j.at("converged").get<bool>();
  r.at_boundary = j.at("at_boundary").get<bool>();
  r.clamp_count = j.at("clamp_count").get<long>();
  r.iterations = j.at("iterations").get<int>();
  return r;
}

PipelineState estimate(const PipelineConfig& c) {
  validate(c);
  PipelineState s;
  s.returns = read_returns(c);
  const auto n = s.returns.returns.cols();
  check_pair_copula_dimension(c, n);
  const Matrix in = s.returns.in_sample();
  s.garch.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) s.garch[static_cast<std::size_t>(i)] = fit_garch(in.col(i));
  filter_all(s);
  s.dcc = fit_dcc(s.xi.topRows(in.rows()));
  s.path = filter_dcc(s.dcc.params, s.xi);
  add_residuals(c, s);
  return s;
}

PipelineState load_state(const PipelineConfig& c) {
  validate(c);
  const fs::path out(c.out);
  for (const char* name : {"garch.json", "dcc.json"})
    if (!fs::is_regular_file(out / name)) throw Error(std::string("missing artifact ") + (out / name).string() + "; run fit first");
  json g = read_json(out / "garch.json");
  json d = read_json(out / "dcc.json");
  for (const json* j : {&g, &d}) {
    const json& prov = j->at("provenance");
    PipelineConfig stored;
    const json& cj = prov.at("config");
    stored.data = cj.at("data").get<std::string>();
    stored.assets = cj.at("assets").get<std::vector<std::string>>();
    stored.inverse = cj.at("inverse").get<std::vector<std::string>>();
    stored.split = cj.at("split").get<std::string>();
    if (estimation_json(stored) != estimation_json(c))
      throw ConfigError("stored estimates were made with other data, assets or split");
    if (prov.at("data_fingerprint").get<std::string>() != data_fingerprint(c.data))
      throw ConfigError("the data file changed since the estimates were made");
  }

  PipelineState s;
  s.returns = read_returns(c);
  const auto n = s.returns.returns.cols();
  check_pair_copula_dimension(c, n);
  const json& assets = g.at("assets");
  if (static_cast<Eigen::Index>(assets.size()) != n) throw ConfigError("garch.json does not match the assets");
  for (Eigen::Index i = 0; i < n; ++i) {
    const json& a = assets.at(static_cast<std::size_t>(i));
    if (a.at("name").get<std::string>() != s.returns.asset_names[static_cast<std::size_t>(i)])
      throw ConfigError("garch.json does not match the assets");
    GarchFit f;
    f.params = garch_from_json(a.at("params"));
    f.report.loglik = a.at("loglik").get<double>();
    f.report.converged = a.at("converged").get<bool>();
    s.garch.push_back(f);
  }
  filter_all(s);
  s.dcc.params = dcc_from_json(d.at("params"));
  s.dcc.report.loglik = d.at("loglik").get<double>();
  s.dcc.report.converged = d.at("converged").get<bool>();
  s.path = filter_dcc(s.dcc.params, s.xi);
  add_residuals(c, s);
  return s;
}

ReturnsModel returns_model(const PipelineState& s, const std::optional<DecompKind>& method, int tau) {
  ReturnsModel m;
  for (const auto& g : s.garch) m.garch.push_back(g.params);
  if (method) {
    m.dcc = s.dcc.params;
    m.method = {*method, tau};
  }
  return m;
}

std::vector<FitRow> fit_menu(const PipelineConfig& c, const PipelineState& s,
                             const std::function<void(const FitRow&)>& on_fit) {
  const auto split = static_cast<Eigen::Index>(s.returns.split_index);
  const std::optional<PairCopula> pc = parse_spec_string(c.pc_spec);
  std::vector<std::vector<FitRow>> per_type(s.residuals.size());
  parallel_for(s.residuals.size(), c.jobs, [&](std::size_t t) {
    const auto& [label, resid] = s.residuals[t];
    const auto kind = kind_from_label(label);
    FitOptions opts;
    opts.target = kind ? AddInTarget::Identity : AddInTarget::SampleCorrelation;
    ResidualFitter fitter(resid.topRows(split), opts);
    ReturnsTerms terms = returns_terms(returns_model(s, kind, c.tau), s.returns.returns, s.returns.split_index, c.oos);
    std::map<MenuItem, FitResult> done;
    for (auto item : c.menu) {
      const auto spec = uses_pair_copula(item) ? pc : std::nullopt;
      auto base = done.find(base_item(item));
      const FitResult* nested = has_addin(item) && base != done.end() ? &base->second : nullptr;
      FitRow row{label, fitter.fit(item, spec, nested), {}};
      row.loglik = score_returns(terms, row.fit.model);
      done[item] = row.fit;
      if (on_fit) on_fit(row);
      per_type[t].push_back(std::move(row));
    }
  });
  std::vector<FitRow> rows;
  for (auto& part : per_type) rows.insert(rows.end(), part.begin(), part.end());
  return rows;
}

std::vector<SweepRow> sweep_specs(const Matrix& residuals, const std::string& type, const std::vector<MenuItem>& items,
                                  const std::vector<PairCopula>& specs, unsigned jobs,
                                  const std::optional<SweepReturns>& ctx) {
  for (auto item : items)
    if (!uses_pair_copula(item)) throw ParamError("the sweep covers PC and CPC only");
  std::optional<ReturnsTerms> terms;
  if (ctx) terms = returns_terms(ctx->model, ctx->returns, ctx->split, ctx->oos);
  ResidualFitter fitter(residuals);

  const std::size_t ns = specs.size();
  std::vector<SweepRow> rows(items.size() * ns);
  parallel_for(ns, jobs, [&](std::size_t s) {
    std::optional<FitResult> pc;
    for (std::size_t k = 0; k < items.size(); ++k) {
      SweepRow& row = rows[k * ns + s];
      row.type = type;
      row.item = items[k];
      row.spec = spec_string(specs[s]);
      try {
        FitResult f = fitter.fit(items[k], specs[s], items[k] == MenuItem::CPC && pc ? &*pc : nullptr);
        if (items[k] == MenuItem::PC) pc = f;
        if (terms) {
          auto ll = score_returns(*terms, f.model);
          row.llis = ll.llis;
          row.lloos = ll.lloos;
        } else {
          row.llis = f.loglik / static_cast<double>(f.n);
          row.lloos = std::numeric_limits<double>::quiet_NaN();
        }
        row.fit = std::move(f);
      } catch (const Error& e) {
        row.fit.reset();
        row.error = e.what();
      }
    }
  });
  return rows;
}

std::vector<PairCopula> sweep_menu(const PipelineConfig& c) {
  auto families = family_menu(c);
  auto pivots = pivot_menu(c);
  return enumerate_specs(families, pivots);
}

void write_sweep_report(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "method,type,spec,status,loglik,k,aic,bic,llis,lloos,converged,at_boundary,clamp_count,error\n";
  for (const auto& r : rows) {
    out << r.type << ',' << to_string(r.item) << ',' << r.spec << ',';
    if (r.fit) {
      const auto& f = *r.fit;
      out << "ok," << num(f.loglik) << ',' << f.k << ',' << num(f.aic) << ',' << num(f.bic) << ',' << num(r.llis)
          << ',' << num(r.lloos) << ',' << (f.converged ? "true" : "false") << ','
          << (f.at_boundary ? "true" : "false") << ',' << f.clamp_count << ",\n";
    } else {
      out << "failed,,,,,,,,,," << csv_field(r.error) << '\n';
    }
  }
}

json sweep_summary(const std::vector<SweepRow>& rows) {
  struct Best {
    const SweepRow* row = nullptr;
    double value = 0.0;
  };
  struct Group {
    std::string type;
    MenuItem item;
    std::size_t count = 0, failed = 0;
    Best aic, bic, llis;
  };
  std::vector<Group> groups;
  for (const auto& r : rows) {
    auto it = std::find_if(groups.begin(), groups.end(),
                           [&](const Group& g) { return g.type == r.type && g.item == r.item; });
    if (it == groups.end()) {
      groups.push_back({r.type, r.item, 0, 0, {}, {}, {}});
      it = groups.end() - 1;
    }
    ++it->count;
    if (!r.fit) {
      ++it->failed;
      continue;
    }
    // Strict comparisons keep the first spec in enumeration order on ties.
    if (std::isfinite(r.fit->aic) && (!it->aic.row || r.fit->aic < it->aic.value)) it->aic = {&r, r.fit->aic};
    if (std::isfinite(r.fit->bic) && (!it->bic.row || r.fit->bic < it->bic.value)) it->bic = {&r, r.fit->bic};
    if (std::isfinite(r.llis) && (!it->llis.row || r.llis > it->llis.value)) it->llis = {&r, r.llis};
  }
  auto best = [](const Best& b, const char* key) {
    if (!b.row) return json(nullptr);
    return json{{"spec", b.row->spec}, {key, b.value}, {"lloos", num_json(b.row->lloos)}};
  };
  json out = json::array();
  for (const auto& g : groups)
    out.push_back({{"method", g.type},
                   {"type", to_string(g.item)},
                   {"rows", g.count},
                   {"failed", g.failed},
                   {"best_aic", best(g.aic, "aic")},
                   {"best_bic", best(g.bic, "bic")},
                   {"best_llis", best(g.llis, "llis")}});
  return {{"groups", out}};
}

void cmd_ingest(const PipelineConfig& c) {
  guarded(c, "ingest", [&] {
    ReturnPanel r = read_returns(c);
    const fs::path out(c.out);
    std::ostringstream csv;
    csv << "date,window";
    for (const auto& a : r.asset_names) csv << ',' << a;
    csv << '\n';
    for (Eigen::Index t = 0; t < r.returns.rows(); ++t) {
      csv << format_date(r.dates[static_cast<std::size_t>(t)]) << ','
          << (static_cast<std::size_t>(t) < r.split_index ? "in" : "out");
      for (Eigen::Index i = 0; i < r.returns.cols(); ++i) csv << ',' << num(r.returns(t, i));
      csv << '\n';
    }
    write_file(out / "returns.csv", csv.str());

    std::ostringstream st;
    st << "asset,window,n,mean,std,skew,excess_kurtosis,min,p25,p50,p75,max\n";
    const Matrix parts[2] = {r.in_sample(), r.out_of_sample()};
    const char* names[2] = {"in", "out"};
    for (Eigen::Index i = 0; i < r.returns.cols(); ++i)
      for (int w = 0; w < 2; ++w) {
        if (parts[w].rows() < 4) continue;
        Vector x = parts[w].col(i);
        auto s = sample_stats(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())));
        st << r.asset_names[static_cast<std::size_t>(i)] << ',' << names[w] << ',' << x.size() << ',' << num(s.mean)
           << ',' << num(s.std) << ',' << num(s.skew) << ',' << num(s.excess_kurtosis) << ',' << num(s.min) << ','
           << num(s.p25) << ',' << num(s.p50) << ',' << num(s.p75) << ',' << num(s.max) << '\n';
      }
    write_file(out / "stats.csv", st.str());
    write_provenance(c, "ingest", {"returns.csv", "stats.csv"});
  });
}

void cmd_fit(const PipelineConfig& c) {
  guarded(c, "fit", [&] {
    PipelineState s = estimate(c);
    write_state(c, s);
    const fs::path fits = fs::path(c.out) / "fits";
    fs::create_directories(fits);
    auto rows = fit_menu(c, s, [&](const FitRow& row) {
      write_json(fits / fit_file_name(row.type, row.fit.item), fit_record(c, row));
    });
    write_fit_report(c, rows);
    std::vector<std::string> artifacts{"garch.json", "dcc.json", "residuals.csv", "rpath.csv", "report.csv"};
    for (const auto& row : rows) artifacts.push_back("fits/" + fit_file_name(row.type, row.fit.item));
    write_provenance(c, "fit", artifacts);
    if (c.sweep) {
      run_sweep(c, s);
      write_provenance(c, "sweep", {"sweep_report.csv", "sweep_summary.json", "sweep_models.jsonl"});
    }
  });
}

void cmd_sweep(const PipelineConfig& c) {
  guarded(c, "sweep", [&] {
    PipelineState s = load_state(c);
    if (s.returns.returns.cols() != 3) throw ConfigError("pair-copula models need exactly three assets");
    run_sweep(c, s);
    write_provenance(c, "sweep", {"sweep_report.csv", "sweep_summary.json", "sweep_models.jsonl"});
  });
}

void cmd_report(const PipelineConfig& c) {
  guarded(c, "report", [&] {
    const fs::path out(c.out);
    std::vector<fs::path> fit_files;
    if (fs::is_directory(out / "fits"))
      for (const auto& e : fs::directory_iterator(out / "fits"))
        if (e.path().extension() == ".json") fit_files.push_back(e.path());
    std::sort(fit_files.begin(), fit_files.end());
    const bool have_sweep = fs::is_regular_file(out / "sweep_models.jsonl");
    if (fit_files.empty() && !have_sweep) throw Error("missing artifacts: no fits/*.json or sweep_models.jsonl in " + c.out);

    PipelineState s = load_state(c);
    const auto split = static_cast<Eigen::Index>(s.returns.split_index);
    const int n = static_cast<int>(s.returns.returns.cols());
    const auto pairs = index_pairs(n);

    std::map<std::string, std::vector<CorrInterval>> intervals;
    std::ostringstream ci;
    ci << "pair,method,point,lower,upper\n";
    for (std::size_t t = 0; t < s.residuals.size(); ++t) {
      const auto& [label, resid] = s.residuals[t];
      auto& list = intervals[label];
      for (std::size_t p = 0; p < pairs.size(); ++p) {
        Matrix two(split, 2);
        two.col(0) = resid.col(pairs[p].first).head(split);
        two.col(1) = resid.col(pairs[p].second).head(split);
        list.push_back(bootstrap_corr_ci(two, c.resamples, c.level, stream_seed(c.seed, t * 4096 + p), c.jobs));
        const auto& iv = list.back();
        ci << pair_label(pairs[p].first, pairs[p].second) << ',' << label << ',' << num(iv.point) << ','
           << num(iv.lower) << ',' << num(iv.upper) << '\n';
      }
    }
    write_file(out / "corr_intervals.csv", ci.str());

    std::ostringstream ck;
    ck << "row";
    std::vector<std::vector<double>> tables;
    for (const auto& [label, resid] : s.residuals) {
      ck << ',' << label;
      tables.push_back(cokurtosis_table(resid.topRows(split)));
    }
    ck << '\n';
    for (std::size_t p = 0; p < pairs.size(); ++p) {
      ck << c.group << '-' << pair_label(pairs[p].first, pairs[p].second);
      for (const auto& tab : tables) ck << ',' << num(tab[p]);
      ck << '\n';
    }
    write_file(out / "cokurtosis.csv", ck.str());

    struct Record {
      std::string source, method;
      FitResult fit;
      double llis, lloos;
    };
    std::vector<Record> records;
    auto add = [&](const std::string& source, const json& j) {
      records.push_back({source, j.at("method").get<std::string>(), fit_result_from_json(j.at("fit")),
                         from_num_json(j.at("llis")), from_num_json(j.at("lloos"))});
    };
    for (const auto& f : fit_files) add("fit", read_json(f));
    if (have_sweep) {
      std::istringstream lines(read_file(out / "sweep_models.jsonl"));
      std::string line;
      while (std::getline(lines, line))
        if (!line.empty()) add("sweep", json::parse(line));
    }

    std::vector<std::string> verdict(records.size());
    parallel_for(records.size(), c.jobs, [&](std::size_t r) {
      const auto it = intervals.find(records[r].method);
      if (it == intervals.end() || n > 3) {
        verdict[r] = "n/a";
        return;
      }
      Matrix corr = model_moments(records[r].fit.model, c.grid_sections).correlation;
      verdict[r] = correlation_test(corr, it->second) ? "pass" : "reject";
    });

    std::ostringstream sc;
    sc << "spec,method,type,source,llis,lloos,aic,bic,corr_test\n";
    for (std::size_t r = 0; r < records.size(); ++r) {
      const auto& rec = records[r];
      std::string spec = rec.fit.spec();
      if (spec.empty()) spec = to_string(rec.fit.item);
      sc << spec << ',' << rec.method << ',' << to_string(rec.fit.item) << ',' << rec.source << ',' << num(rec.llis)
         << ',' << num(rec.lloos) << ',' << num(rec.fit.aic) << ',' << num(rec.fit.bic) << ',' << verdict[r] << '\n';
    }
    write_file(out / "llis_lloos_scatter.csv", sc.str());
    write_provenance(c, "report", {"corr_intervals.csv", "cokurtosis.csv", "llis_lloos_scatter.csv"});
  });
}

}  // namespace cdg
