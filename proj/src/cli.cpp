#include "jointlab/cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <cstdlib>
#include <iostream>
#include <sstream>

#include "jointlab/io.hpp"
#include "jointlab/parallel.hpp"

namespace jointlab::cli {

namespace {

using io::Json;

struct Common {
  int threads = 0;
  bool quiet = false;
  bool record_wall_time = false;
};

// Thrown to leave a command with a specific exit code.
struct Exit {
  int code;
  std::string message;
};

class Logger {
 public:
  Logger(std::ostream& os, const bool& quiet) : os_(os), quiet_(quiet) {}
  template <typename... Args>
  void operator()(const Args&... args) const {
    if (quiet_) return;
    (os_ << ... << args) << '\n';
  }

 private:
  std::ostream& os_;
  const bool& quiet_;
};

int effective_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("JOINTLAB_THREADS")) {
    try {
      const int v = std::stoi(env);
      if (v > 0) return v;
    } catch (const std::exception&) {
    }
    throw Exit{kInvalidInput, std::string("JOINTLAB_THREADS must be a positive integer, got '") + env + "'"};
  }
  return resolve_threads(0);
}

std::vector<double> parse_list(const std::string& s, const char* what) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Exit{kInvalidInput, std::string(what) + ": '" + item + "' is not a number"};
    }
  }
  if (out.empty()) throw Exit{kInvalidInput, std::string(what) + ": empty list"};
  return out;
}

io::JsonDocument load(const std::string& path) {
  try {
    return io::read_json_file(path);
  } catch (const io::InputError& e) {
    throw Exit{kInvalidInput, e.what()};
  }
}

template <typename Fn>
auto anchored(const io::JsonDocument& doc, Fn&& fn) -> decltype(fn(doc.value)) {
  try {
    return fn(doc.value);
  } catch (const io::InputError& e) {
    throw Exit{kInvalidInput, io::anchored_message(doc, e)};
  }
}

Dataset load_dataset(const std::string& path) {
  const auto doc = load(path);
  Dataset data = anchored(doc, [](const Json& j) { return io::dataset_from_json(j); });
  const auto findings = validate_dataset(data);
  if (!findings.empty()) {
    std::string msg = path + ": invalid dataset (" + std::to_string(findings.size()) + " findings)";
    for (const auto& f : findings) msg += "\n  " + f;
    throw Exit{kInvalidInput, msg};
  }
  return data;
}

FitConfig load_config(const std::string& path) {
  if (path.empty()) return {};
  const auto doc = load(path);
  return anchored(doc, [](const Json& j) { return io::fit_config_from_json(j); });
}

void write_output(const std::string& path, const Json& j) { io::write_text_file(path, io::canonical_dump(j)); }

std::string digest(const Json& j) { return io::sha256_hex(io::canonical_dump(j)); }

void add_common(CLI::App* app, Common& c) {
  app->add_option("--threads", c.threads, "worker threads (default: JOINTLAB_THREADS, else all cores)")
      ->check(CLI::NonNegativeNumber);
  app->add_flag("--quiet", c.quiet, "suppress progress logs");
  app->add_flag("--record-wall-time", c.record_wall_time,
                "store the elapsed time in the manifest (outputs are then not byte-reproducible)");
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string scenario, out;
  long long n = -1;
  std::optional<std::uint64_t> seed;
};

int cmd_simulate(const SimulateArgs& a, const Common& c, const Logger& log) {
  const auto t0 = std::chrono::steady_clock::now();
  if (a.n <= 0) throw Exit{kInvalidInput, "n must be positive"};
  SimScenario sc = default_scenario();
  if (!a.scenario.empty()) {
    const auto doc = load(a.scenario);
    sc = anchored(doc, [](const Json& j) { return io::scenario_from_json(j); });
  }
  if (a.seed) sc.seed = *a.seed;
  const int threads = effective_threads(c.threads);
  log("simulate: n=", a.n, " seed=", sc.seed, " threads=", threads);
  const SimulatedData sim = simulate(sc, static_cast<int>(a.n), threads);
  if (!validate_dataset(sim.data).empty())
    log("simulate: warning: the generated dataset does not pass validation (e.g. no events)");

  io::RunManifest m;
  m.command = "simulate";
  m.config_digest = digest({{"scenario", io::to_json(sc)}, {"n", a.n}});
  m.dataset_digest = io::dataset_digest(sim.data);
  m.seed = sc.seed;
  const double wall = seconds_since(t0);
  if (c.record_wall_time) m.wall_time = wall;
  Json out = io::to_json(sim.data, &sim.truth);
  out["manifest"] = io::to_json(m);
  write_output(a.out, out);
  log("simulate: wrote ", a.out, " in ", wall, " s");
  return kOk;
}

struct ScenarioArgs {
  std::string out;
};

int cmd_scenario(const ScenarioArgs& a, const Logger& log) {
  write_output(a.out, io::to_json(default_scenario()));
  log("scenario: wrote default scenario to ", a.out);
  return kOk;
}

// ---------------------------------------------------------------------------

struct FitArgs {
  std::string data, config, init, out;
  bool fix_phi_zero = false;
  int max_iters = -1;
  int quad_points = -1;
};

int cmd_fit(const FitArgs& a, const Common& c, const Logger& log) {
  const auto t0 = std::chrono::steady_clock::now();
  const Dataset data = load_dataset(a.data);
  FitConfig cfg = load_config(a.config);
  if (a.fix_phi_zero) cfg.fix_phi_zero = true;
  if (a.max_iters >= 0) cfg.max_iters = a.max_iters;
  if (a.quad_points >= 0) cfg.quad_points = a.quad_points;
  try {
    cfg.validate();
  } catch (const Error& e) {
    throw Exit{kInvalidInput, std::string("fit config: ") + e.what()};
  }
  cfg.threads = effective_threads(c.threads);

  std::optional<ThetaParams> init;
  Json init_json = nullptr;
  if (!a.init.empty()) {
    const auto doc = load(a.init);
    init = anchored(doc, [&](const Json& j) {
      // Either a bare theta object or a fit file.
      if (j.is_object() && j.contains("theta_hat")) {
        try {
          return io::theta_from_json(j["theta_hat"], data.spec, "/theta_hat");
        } catch (const io::InputError& e) {
          throw io::InputError(e.pointer(), e.what());
        }
      }
      return io::theta_from_json(j, data.spec, "");
    });
    if (cfg.fix_phi_zero) init->phi.setZero();
    init_json = io::to_json(*init);
  }

  log("fit: n=", data.n(), " threads=", cfg.threads, init ? " (warm start)" : "");
  FitResult fit;
  try {
    fit = em_fit(data, cfg, init);
  } catch (const ParameterError& e) {
    throw Exit{kInvalidInput, std::string("fit: ") + e.what()};
  }

  io::RunManifest m;
  m.command = "fit";
  m.config_digest = digest({{"config", io::to_json(cfg)}, {"init", init_json}});
  m.dataset_digest = io::dataset_digest(data);
  const double wall = seconds_since(t0);
  if (c.record_wall_time) m.wall_time = wall;
  Json out = io::to_json(fit, data.spec);
  out["config"] = io::to_json(cfg);
  out["spec"] = io::to_json(data.spec);
  out["manifest"] = io::to_json(m);
  write_output(a.out, out);
  log("fit: ", fit.converged ? "converged" : "did not converge", " after ", fit.iters, " iterations, loglik ",
      fit.loglik, ", ", wall, " s");
  for (const auto& w : fit.diagnostics.warnings) log("fit: warning: ", w);
  return fit.converged ? kOk : kNotConverged;
}

// ---------------------------------------------------------------------------

struct ProfileArgs {
  std::string data, fit, out, scheme = "both", ch = "1";
  double level = 0.95;
};

int cmd_profile(const ProfileArgs& a, const Common& c, const Logger& log) {
  const auto t0 = std::chrono::steady_clock::now();
  const Dataset data = load_dataset(a.data);
  const auto fit_doc = load(a.fit);
  const io::FitFile ff = anchored(fit_doc, [&](const Json& j) { return io::fit_from_json(j, data.spec); });
  const std::string dd = io::dataset_digest(data);
  if (!ff.dataset_digest.empty() && ff.dataset_digest != dd)
    throw Exit{kInvalidInput, a.fit + ": fit was produced from a different dataset (digest mismatch)"};
  if (!ff.converged) throw Exit{kInvalidInput, a.fit + ": fit did not converge; refusing to profile"};

  std::vector<InfoScheme> schemes;
  if (a.scheme == "both") schemes = {InfoScheme::forward_cross, InfoScheme::central_cross};
  else if (a.scheme == "paper") schemes = {InfoScheme::forward_cross};
  else if (a.scheme == "central") schemes = {InfoScheme::central_cross};
  else throw Exit{kInvalidInput, "--scheme must be paper, central or both"};
  const std::vector<double> chs = parse_list(a.ch, "--ch");
  for (double v : chs)
    if (!(v > 0.0)) throw Exit{kInvalidInput, "--ch values must be positive"};
  if (!(a.level > 0.0 && a.level < 1.0)) throw Exit{kInvalidInput, "--level must lie in (0, 1)"};

  FitConfig cfg = ff.config;
  cfg.threads = effective_threads(c.threads);
  const auto coords = free_coordinates(data.spec, cfg);
  FitResult fit;
  fit.theta_hat = ff.theta_hat;
  fit.lambda_hat = ff.lambda_hat;
  fit.converged = true;

  log("profile: n=", data.n(), " coordinates=", coords.size(), " schemes=", a.scheme, " c_h=", a.ch);
  ProfileLikelihood pl(data, cfg);
  ProfileFn fn = [&](const VectorXd& v) { return pl.at_vector(v); };
  Json estimates = Json::array();
  bool all_reliable = true;
  std::map<std::string, Json> sensitivity;
  for (double ch : chs) {
    // Cold start per step size so each sweep entry is reproducible on its own.
    pl.reset_warm_start();
    const auto est = information_estimates(fn, fit.theta_hat.to_vector(), data.n(), ch, schemes, coords);
    for (const auto& e : est) {
      Json ej = io::to_json(e, data.spec);
      if (e.reliable) {
        Json iv = Json::array();
        for (const auto& w : wald_intervals(fit, e, a.level)) iv.push_back(io::to_json(w));
        ej["intervals"] = iv;
      } else {
        all_reliable = false;
        ej["intervals"] = nullptr;
        ej["refusal"] = "information estimate unreliable; no intervals reported";
        log("profile: scheme ", to_string(e.scheme), " c_h=", ch, " unreliable");
      }
      estimates.push_back(ej);
      sensitivity[to_string(e.scheme)].push_back({{"c_h", ch}, {"se", ej["se"]}});
    }
  }
  Json sens = Json::object();
  for (auto& [k, v] : sensitivity) sens[k] = v;

  io::RunManifest m;
  m.command = "profile";
  m.config_digest = digest({{"config", io::to_json(cfg)},
                            {"scheme", a.scheme},
                            {"c_h", chs},
                            {"level", a.level},
                            {"theta_hat", io::to_json(fit.theta_hat)}});
  m.dataset_digest = dd;
  const double wall = seconds_since(t0);
  if (c.record_wall_time) m.wall_time = wall;
  Json out = {{"manifest", io::to_json(m)},
              {"estimates", estimates},
              {"reliable", all_reliable},
              {"level", a.level},
              {"sensitivity", sens},
              {"theta_hat", io::to_json(fit.theta_hat)}};
  write_output(a.out, out);
  log("profile: wrote ", a.out, " in ", wall, " s");
  return kOk;
}

// ---------------------------------------------------------------------------

struct VerifyArgs {
  std::string study, n = "200", scenario, config, out;
  int replicates = 100;
  std::optional<std::uint64_t> seed;
  double ch = 1.0;
};

int cmd_verify(const VerifyArgs& a, const Common& c, const Logger& log) {
  const auto t0 = std::chrono::steady_clock::now();
  SimScenario sc = default_scenario();
  if (!a.scenario.empty()) {
    const auto doc = load(a.scenario);
    sc = anchored(doc, [](const Json& j) { return io::scenario_from_json(j); });
  }
  if (a.seed) sc.seed = *a.seed;
  StudyOptions opt;
  opt.fit = load_config(a.config);
  opt.kind = [&] {
    try {
      return study_kind_from_string(a.study);
    } catch (const Error& e) {
      throw Exit{kInvalidInput, e.what()};
    }
  }();
  if (a.replicates < 2) throw Exit{kInvalidInput, "replicates must be >= 2"};
  if (!(a.ch > 0.0)) throw Exit{kInvalidInput, "--ch must be positive"};
  opt.replicates = a.replicates;
  opt.c_h = a.ch;
  opt.threads = effective_threads(c.threads);
  std::vector<int> ns;
  for (double v : parse_list(a.n, "--n")) {
    if (!(v >= 1.0) || v != std::floor(v)) throw Exit{kInvalidInput, "n must be a positive integer"};
    ns.push_back(static_cast<int>(v));
  }
  if (opt.kind == StudyKind::consistency && (ns.size() != 2 || ns[0] >= ns[1]))
    throw Exit{kInvalidInput, "consistency study needs --n small,large with small < large"};

  Json studies = Json::array();
  Json checks = Json::array();
  std::vector<StudySummary> sums;
  bool passed = true, valid = true;
  for (int n : ns) {
    opt.n = n;
    log("verify: study=", a.study, " n=", n, " replicates=", opt.replicates, " threads=", opt.threads);
    sums.push_back(replicate_study(sc, opt));
    studies.push_back(io::to_json(sums.back()));
    valid = valid && sums.back().valid;
    log("verify: n=", n, " converged ", sums.back().converged, "/", opt.replicates);
  }
  std::vector<CheckResult> res;
  if (opt.kind == StudyKind::consistency) {
    res = consistency_checks(sums[0], sums[1]);
  } else {
    for (const auto& s : sums) {
      auto r = opt.kind == StudyKind::coverage ? coverage_checks(s) : lr_checks(s);
      for (auto& x : r) x.name = "n=" + std::to_string(s.n) + ":" + x.name;
      res.insert(res.end(), r.begin(), r.end());
    }
  }
  for (const auto& r : res) {
    passed = passed && r.passed;
    checks.push_back(io::to_json(r));
    log("verify: ", r.passed ? "PASS " : "FAIL ", r.name, " = ", r.value, " (", r.detail, ")");
  }

  io::RunManifest m;
  m.command = "verify";
  m.config_digest = digest({{"scenario", io::to_json(sc)},
                            {"study", a.study},
                            {"n", ns},
                            {"replicates", opt.replicates},
                            {"c_h", opt.c_h},
                            {"config", io::to_json(opt.fit)}});
  m.seed = sc.seed;
  const double wall = seconds_since(t0);
  if (c.record_wall_time) m.wall_time = wall;
  Json out = {{"manifest", io::to_json(m)},
              {"study", a.study},
              {"studies", studies},
              {"checks", checks},
              {"passed", passed},
              {"valid", valid}};
  write_output(a.out, out);
  if (!valid) throw Exit{kVerifyFailed, "study invalid: more than 20% of replicates did not converge"};
  log("verify: ", passed ? "all checks passed" : "some checks failed", " (", wall, " s)");
  return passed ? kOk : kVerifyFailed;
}

// ---------------------------------------------------------------------------

struct ImportArgs {
  std::string measurements, paths, events, out;
  double tau = 0.0;
};

int cmd_import(const ImportArgs& a, const Common& c, const Logger& log) {
  if (!(a.tau > 0.0)) throw Exit{kInvalidInput, "--tau must be positive"};
  Dataset data;
  try {
    data = io::import_csv(a.measurements, a.paths, a.events, a.tau);
  } catch (const io::InputError& e) {
    throw Exit{kInvalidInput, e.what()};
  }
  const auto findings = validate_dataset(data);
  if (!findings.empty()) {
    std::string msg = "imported dataset is invalid (" + std::to_string(findings.size()) + " findings)";
    for (const auto& f : findings) msg += "\n  " + f;
    throw Exit{kInvalidInput, msg};
  }
  io::RunManifest m;
  m.command = "import-csv";
  m.config_digest = digest({{"tau", a.tau}});
  m.dataset_digest = io::dataset_digest(data);
  Json out = io::to_json(data);
  out["manifest"] = io::to_json(m);
  (void)c;
  write_output(a.out, out);
  log("import-csv: wrote ", data.n(), " subjects to ", a.out);
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& err) {
  CLI::App app{"Semiparametric joint models of repeated measurements and survival time"};
  app.require_subcommand(1);
  app.set_version_flag("--version", io::kToolVersion);
  Common common;
  Logger log(err, common.quiet);

  SimulateArgs sa;
  auto* sim = app.add_subcommand("simulate", "simulate a dataset from a scenario");
  sim->add_option("--scenario", sa.scenario, "scenario JSON (default: built-in scenario)");
  sim->add_option("--n", sa.n, "number of subjects")->required();
  sim->add_option("--seed", sa.seed, "overrides the scenario seed");
  sim->add_option("--out", sa.out, "output dataset JSON")->required();
  add_common(sim, common);

  ScenarioArgs sca;
  auto* scen = app.add_subcommand("scenario", "write the built-in verification scenario");
  scen->add_option("--out", sca.out, "output scenario JSON")->required();
  add_common(scen, common);

  FitArgs fa;
  auto* fit = app.add_subcommand("fit", "EM / NPMLE fit");
  fit->add_option("--data", fa.data, "dataset JSON")->required();
  fit->add_option("--config", fa.config, "fit config JSON");
  fit->add_option("--init", fa.init, "starting theta (theta JSON or a previous fit file)");
  fit->add_flag("--fix-phi-zero", fa.fix_phi_zero, "hold phi at zero");
  fit->add_option("--max-iters", fa.max_iters, "EM iteration cap")->check(CLI::NonNegativeNumber);
  fit->add_option("--quad-points", fa.quad_points, "Gauss-Hermite points per dimension")->check(CLI::PositiveNumber);
  fit->add_option("--out", fa.out, "output fit JSON")->required();
  add_common(fit, common);

  ProfileArgs pa;
  auto* prof = app.add_subcommand("profile", "profile-likelihood information and Wald intervals");
  prof->add_option("--data", pa.data, "dataset JSON")->required();
  prof->add_option("--fit", pa.fit, "converged fit JSON")->required();
  prof->add_option("--scheme", pa.scheme, "paper | central | both");
  prof->add_option("--ch", pa.ch, "comma-separated step constants, h = c_h / sqrt(n)");
  prof->add_option("--level", pa.level, "interval level");
  prof->add_option("--out", pa.out, "output JSON")->required();
  add_common(prof, common);

  VerifyArgs va;
  auto* ver = app.add_subcommand("verify", "Monte Carlo verification study");
  ver->add_option("--study", va.study, "consistency | coverage | lr")->required();
  ver->add_option("--n", va.n, "sample size(s), comma-separated");
  ver->add_option("--replicates", va.replicates, "replicates per sample size");
  ver->add_option("--seed", va.seed, "overrides the scenario seed");
  ver->add_option("--scenario", va.scenario, "scenario JSON (default: built-in scenario)");
  ver->add_option("--config", va.config, "fit config JSON");
  ver->add_option("--ch", va.ch, "information step constant");
  ver->add_option("--out", va.out, "output summary JSON")->required();
  add_common(ver, common);

  ImportArgs ia;
  auto* imp = app.add_subcommand("import-csv", "convert measurements/paths/events CSV files to dataset JSON");
  imp->add_option("--measurements", ia.measurements, "id,t,y")->required();
  imp->add_option("--paths", ia.paths, "id,block,t,values")->required();
  imp->add_option("--events", ia.events, "id,z,delta")->required();
  imp->add_option("--tau", ia.tau, "end of follow-up")->required();
  imp->add_option("--out", ia.out, "output dataset JSON")->required();
  add_common(imp, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e, std::cout, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, std::cout, err);
    return kInvalidInput;
  }

  try {
    if (*sim) return cmd_simulate(sa, common, log);
    if (*scen) return cmd_scenario(sca, log);
    if (*fit) return cmd_fit(fa, common, log);
    if (*prof) return cmd_profile(pa, common, log);
    if (*ver) return cmd_verify(va, common, log);
    if (*imp) return cmd_import(ia, common, log);
  } catch (const Exit& e) {
    err << "error: " << e.message << '\n';
    return e.code;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kInternal;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kInternal;
  }
  return kInternal;
}

}  // namespace jointlab::cli
