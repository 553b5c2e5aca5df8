// Python bindings. Structured values cross the boundary as canonical JSON
// text; the package's __init__ turns them into dicts.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "jointlab/error.hpp"
#include "jointlab/io.hpp"
#include "jointlab/likelihood.hpp"
#include "jointlab/profile.hpp"
#include "jointlab/quadrature.hpp"
#include "jointlab/sim.hpp"

namespace py = pybind11;
using namespace jointlab;
using io::Json;

namespace {

Json parse(const std::string& text) { return text.empty() ? Json(nullptr) : Json::parse(text); }

std::string dump(const Json& j) { return io::canonical_dump(j); }

Dataset dataset(const std::string& text) { return io::dataset_from_json(parse(text)); }

FitConfig config(const std::string& text, int threads) {
  FitConfig cfg = text.empty() ? FitConfig{} : io::fit_config_from_json(parse(text));
  cfg.threads = threads;
  cfg.validate();
  return cfg;
}

ThetaParams theta(const std::string& text, const ModelSpec& spec) {
  Json j = parse(text);
  if (j.contains("theta_hat")) j = j["theta_hat"];
  ThetaParams t = io::theta_from_json(j, spec, "");
  t.validate(spec);
  return t;
}

std::string simulate_json(const std::string& scenario, int n, std::optional<std::uint64_t> seed, int threads) {
  SimScenario sc = scenario.empty() ? default_scenario() : io::scenario_from_json(parse(scenario));
  if (seed) sc.seed = *seed;
  sc.validate();
  const SimulatedData sim = simulate(sc, n, threads);
  return dump(io::to_json(sim.data, &sim.truth));
}

std::string fit_json(const std::string& data_text, const std::string& cfg_text, const std::string& init_text,
                     int threads) {
  const Dataset data = dataset(data_text);
  const FitConfig cfg = config(cfg_text, threads);
  std::optional<ThetaParams> init;
  if (!init_text.empty()) init = theta(init_text, data.spec);
  FitResult fit;
  {
    py::gil_scoped_release release;
    fit = em_fit(data, cfg, init);
  }
  Json out = io::to_json(fit, data.spec);
  out["config"] = io::to_json(cfg);
  out["manifest"] = {{"dataset_digest", io::dataset_digest(data)}};
  return dump(out);
}

double loglik(const std::string& data_text, const std::string& theta_text, const std::string& hazard_text,
              int points) {
  const Dataset data = dataset(data_text);
  const StepCumHazard lam = io::hazard_from_json(parse(hazard_text), "");
  return total_loglik(data, theta(theta_text, data.spec), lam, Integrator::make(points, data.spec.d_a));
}

double profile(const std::string& data_text, const std::string& theta_text, const std::string& cfg_text) {
  const Dataset data = dataset(data_text);
  const FitConfig cfg = config(cfg_text, 1);
  py::gil_scoped_release release;
  return profile_loglik(theta(theta_text, data.spec), data, cfg);
}

std::string information_json(const std::string& data_text, const std::string& fit_text, const std::string& scheme,
                             double c_h, double level, int threads) {
  const Dataset data = dataset(data_text);
  const io::FitFile ff = io::fit_from_json(parse(fit_text), data.spec);
  if (!ff.converged) throw FitError("information: fit did not converge");
  FitConfig cfg = ff.config;
  cfg.threads = threads;
  FitResult fit;
  fit.theta_hat = ff.theta_hat;
  fit.lambda_hat = ff.lambda_hat;
  fit.converged = true;
  InfoEstimate est;
  {
    py::gil_scoped_release release;
    est = information_estimate(fit.theta_hat, data, cfg, c_h, info_scheme_from_string(scheme));
  }
  Json out = io::to_json(est, data.spec);
  out["intervals"] = nullptr;
  if (est.reliable) {
    out["intervals"] = Json::array();
    for (const auto& w : wald_intervals(fit, est, level)) out["intervals"].push_back(io::to_json(w));
  }
  return dump(out);
}

double lr_json(const std::string& data_text, const std::string& fit_text, const std::string& theta0_text) {
  const Dataset data = dataset(data_text);
  const io::FitFile ff = io::fit_from_json(parse(fit_text), data.spec);
  FitResult fit;
  fit.theta_hat = ff.theta_hat;
  fit.lambda_hat = ff.lambda_hat;
  fit.converged = ff.converged;
  const ThetaParams t0 = theta(theta0_text, data.spec);
  py::gil_scoped_release release;
  return lr_statistic(data, ff.config, t0, fit);
}

py::dict posterior_dict(const std::string& data_text, int index, const std::string& theta_text,
                        const std::string& hazard_text, int points, bool adaptive) {
  const Dataset data = dataset(data_text);
  if (index < 0 || index >= data.n()) throw py::index_error("subject index out of range");
  const StepCumHazard lam = io::hazard_from_json(parse(hazard_text), "");
  const PosteriorSummary ps =
      posterior_moments(data.subjects[static_cast<std::size_t>(index)], theta(theta_text, data.spec), lam,
                        gauss_hermite_rule(points, data.spec.d_a), adaptive ? Centering::adaptive : Centering::prior);
  py::dict out;
  out["log_norm"] = ps.log_norm;
  out["mean"] = ps.mean;
  out["cov"] = MatrixXd(ps.covariance());
  return out;
}

std::string study_json(const std::string& scenario, const std::string& kind, int n, int replicates, std::uint64_t seed,
                       int threads) {
  SimScenario sc = scenario.empty() ? default_scenario() : io::scenario_from_json(parse(scenario));
  sc.seed = seed;
  StudyOptions opt;
  opt.kind = study_kind_from_string(kind);
  opt.n = n;
  opt.replicates = replicates;
  opt.threads = threads;
  StudySummary s;
  {
    py::gil_scoped_release release;
    s = replicate_study(sc, opt);
  }
  Json out = io::to_json(s);
  if (opt.kind == StudyKind::coverage) {
    out["checks"] = Json::array();
    for (const auto& c : coverage_checks(s)) out["checks"].push_back(io::to_json(c));
  } else if (opt.kind == StudyKind::lr) {
    out["checks"] = Json::array();
    for (const auto& c : lr_checks(s)) out["checks"].push_back(io::to_json(c));
  }
  return dump(out);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "jointlab core: joint longitudinal-survival models fitted by EM";

  static py::exception<Error> base(m, "JointlabError", PyExc_ValueError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const io::InputError& e) {
      const std::string where = e.pointer().empty() ? "" : " (at " + e.pointer() + ")";
      py::set_error(base, (std::string(e.what()) + where).c_str());
    } catch (const Error& e) {
      py::set_error(base, e.what());
    } catch (const Json::exception& e) {
      py::set_error(base, e.what());
    }
  });

  m.attr("tool_version") = io::kToolVersion;
  m.def("default_scenario", [] { return dump(io::to_json(default_scenario())); });
  m.def("simulate", &simulate_json, py::arg("scenario"), py::arg("n"), py::arg("seed") = py::none(),
        py::arg("threads") = 1);
  m.def("fit", &fit_json, py::arg("data"), py::arg("config") = "", py::arg("init") = "", py::arg("threads") = 1);
  m.def("total_loglik", &loglik, py::arg("data"), py::arg("theta"), py::arg("hazard"), py::arg("points") = 20);
  m.def("profile_loglik", &profile, py::arg("data"), py::arg("theta"), py::arg("config") = "");
  m.def("information", &information_json, py::arg("data"), py::arg("fit"), py::arg("scheme") = "central",
        py::arg("c_h") = 1.0, py::arg("level") = 0.95, py::arg("threads") = 1);
  m.def("lr_statistic", &lr_json, py::arg("data"), py::arg("fit"), py::arg("theta_0"));
  m.def("posterior", &posterior_dict, py::arg("data"), py::arg("index"), py::arg("theta"), py::arg("hazard"),
        py::arg("points") = 20, py::arg("adaptive") = true);
  m.def("replicate_study", &study_json, py::arg("scenario"), py::arg("kind"), py::arg("n"), py::arg("replicates"),
        py::arg("seed") = 0, py::arg("threads") = 1);
  m.def("dataset_digest", [](const std::string& d) { return io::dataset_digest(dataset(d)); });
  m.def("import_csv", [](const std::string& meas, const std::string& paths, const std::string& events, double tau) {
    return dump(io::to_json(io::import_csv(meas, paths, events, tau)));
  });
  m.def("chi_squared_quantile", &chi_squared_quantile, py::arg("p"), py::arg("df"));
}
