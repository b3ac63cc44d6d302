#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cdg/copula.hpp"
#include "cdg/dcc.hpp"
#include "cdg/decomp.hpp"
#include "cdg/errors.hpp"
#include "cdg/evalkit.hpp"
#include "cdg/garch.hpp"
#include "cdg/pipeline.hpp"
#include "cdg/residual_fit.hpp"

namespace py = pybind11;
using namespace cdg;

namespace {

// Fitted objects cross the boundary as JSON text; the Python side parses it.
std::string dump(const nlohmann::json& j) { return j.dump(); }

PipelineConfig config_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  PipelineConfig c;
  c.data = j.value("data", c.data);
  c.assets = j.value("assets", c.assets);
  c.inverse = j.value("inverse", c.inverse);
  c.split = j.value("split", c.split);
  if (j.contains("decomp")) {
    c.methods.clear();
    for (const auto& m : j["decomp"]) c.methods.push_back(parse_decomp_kind(m.get<std::string>()));
  }
  c.tau = j.value("tau", c.tau);
  if (j.contains("menu")) {
    c.menu.clear();
    for (const auto& m : j["menu"]) c.menu.push_back(parse_menu_item(m.get<std::string>()));
  }
  c.nodcc = j.value("nodcc", c.nodcc);
  c.families = j.value("families", c.families);
  if (j.contains("pivots")) {
    c.pivots.clear();
    for (int p : j["pivots"].get<std::vector<int>>()) {
      if (p < 1 || p > 3) throw ConfigError("pivot must be 1, 2 or 3");
      c.pivots.push_back(static_cast<Pivot>(p));
    }
  }
  c.pc_spec = j.value("pc_spec", c.pc_spec);
  c.sweep = j.value("sweep", c.sweep);
  c.grid_sections = j.value("grid_sections", c.grid_sections);
  c.seed = j.value("seed", c.seed);
  c.resamples = j.value("resamples", c.resamples);
  c.level = j.value("level", c.level);
  const std::string oos = j.value("oos", std::string("continue"));
  if (oos != "continue" && oos != "reset_q") throw ConfigError("oos must be continue or reset_q");
  c.oos = oos == "continue" ? OutOfSampleStart::Continue : OutOfSampleStart::ResetQ;
  c.group = j.value("group", c.group);
  c.out = j.value("out", c.out);
  c.jobs = j.value("jobs", c.jobs);
  return c;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Copula-DCC-GARCH estimation";
  m.attr("__version__") = kVersion;

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<IngestError>(m, "IngestError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<StatError>(m, "StatError", base.ptr());
  py::register_exception<ParamError>(m, "ParamError", base.ptr());
  py::register_exception<DomainError>(m, "DomainError", base.ptr());
  py::register_exception<MatrixError>(m, "MatrixError", base.ptr());
  py::register_exception<FitError>(m, "FitError", base.ptr());
  py::register_exception<EvalError>(m, "EvalError", base.ptr());

  m.def("unconditional_sigma", [](double omega, double alpha, double beta) {
    return unconditional_sigma({omega, alpha, beta, 1.0});
  });
  m.def(
      "fit_garch",
      [](const Vector& r, bool constrain_sigma0) {
        GarchFit f = fit_garch(r, constrain_sigma0);
        nlohmann::json j = to_json(f.params);
        j["loglik"] = f.report.loglik;
        j["converged"] = f.report.converged;
        return dump(j);
      },
      py::arg("returns"), py::arg("constrain_sigma0") = true);
  m.def(
      "filter_variance",
      [](const std::string& params, const Vector& r) {
        VolPath v = filter_variance(garch_from_json(nlohmann::json::parse(params)), r);
        return std::make_pair(v.sigma, v.xi);
      },
      py::arg("params"), py::arg("returns"));
  m.def(
      "fit_dcc",
      [](const Matrix& xi) {
        DccFit f = fit_dcc(xi);
        nlohmann::json j = to_json(f.params);
        j["loglik"] = f.report.loglik;
        j["converged"] = f.report.converged;
        return dump(j);
      },
      py::arg("xi"));
  m.def(
      "dcc_residuals",
      [](const std::string& params, const Matrix& xi, const std::string& method, int tau,
         std::optional<Matrix> sigma) {
        CorrPath path = filter_dcc(dcc_from_json(nlohmann::json::parse(params)), xi);
        return dcc_residuals(path, xi, {parse_decomp_kind(method), tau}, sigma ? &*sigma : nullptr);
      },
      py::arg("params"), py::arg("xi"), py::arg("method") = "cholesky", py::arg("tau") = 50,
      py::arg("sigma") = std::nullopt);
  m.def(
      "decompose",
      [](const std::string& method, const Matrix& r, std::vector<double> sigma) {
        EigenSortState st;
        return decompose({parse_decomp_kind(method)}, r, sigma, &st);
      },
      py::arg("method"), py::arg("r"), py::arg("sigma") = std::vector<double>{});

  m.def(
      "copula_logdensity",
      [](const std::string& code, double theta, double nu, double u, double v) {
        CopulaFamily f = parse_family_code(code);
        f.theta = theta;
        f.nu = nu;
        return copula_logdensity(f, u, v);
      },
      py::arg("family"), py::arg("theta"), py::arg("nu") = 0.0, py::arg("u"), py::arg("v"));
  m.def("cokurtosis22", [](std::vector<double> x, std::vector<double> y) { return cokurtosis22(x, y); });
  m.def("information_criteria", [](double ll, int k, std::size_t n) {
    auto ic = information_criteria(ll, k, n);
    return std::make_pair(ic.aic, ic.bic);
  });

  m.def(
      "fit_residual_model",
      [](const Matrix& data, const std::string& item, std::optional<std::string> spec) {
        std::optional<PairCopula> pc;
        if (spec) pc = parse_spec_string(*spec);
        FitResult r;
        {
          py::gil_scoped_release release;
          r = fit_residual_model(data, parse_menu_item(item), pc);
        }
        return dump(to_json(r));
      },
      py::arg("data"), py::arg("item"), py::arg("spec") = std::nullopt);
  m.def(
      "residual_logdensity",
      [](const std::string& model, std::vector<double> x) {
        return residual_logdensity(residual_model_from_json(nlohmann::json::parse(model)), x);
      },
      py::arg("model"), py::arg("x"));
  m.def(
      "model_correlation",
      [](const std::string& model, int sections) {
        return model_moments(residual_model_from_json(nlohmann::json::parse(model)), sections).correlation;
      },
      py::arg("model"), py::arg("sections") = 100);

  m.def("config_hash", [](const std::string& config) { return config_hash(config_from_json(config)); });
  for (auto [name, fn] : {std::pair{"cmd_ingest", &cmd_ingest}, std::pair{"cmd_fit", &cmd_fit},
                          std::pair{"cmd_sweep", &cmd_sweep}, std::pair{"cmd_report", &cmd_report}}) {
    m.def(name, [fn](const std::string& config) {
      PipelineConfig c = config_from_json(config);
      py::gil_scoped_release release;
      fn(c);
    });
  }
}
