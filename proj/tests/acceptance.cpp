// Acceptance run: criteria 1-8, one PASS/FAIL line each.
// Usage: acceptance <path-to-jointlab-cli> [scratch-dir]

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <sys/wait.h>

#include "fixtures.hpp"
#include "helpers.hpp"
#include "jointlab/io.hpp"
#include "jointlab/likelihood.hpp"
#include "jointlab/quadrature.hpp"
#include "oracles.hpp"

using namespace jointlab;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

struct FitHealth {
  int fits = 0;
  double worst_decrease = 0.0;
  double worst_self_consistency = 0.0;

  void add(double decrease, double sc) {
    ++fits;
    worst_decrease = std::max(worst_decrease, decrease);
    worst_self_consistency = std::max(worst_self_consistency, sc);
  }
  void add(const FitResult& f) { add(f.diagnostics.max_loglik_decrease, f.diagnostics.self_consistency); }
  void add(const StudySummary& s) {
    for (const auto& r : s.records) add(r.max_loglik_decrease, r.self_consistency);
  }
};

FitHealth health;

int worker_threads() {
  if (const char* env = std::getenv("JOINTLAB_THREADS")) return std::max(1, std::atoi(env));
  return std::max(1u, std::thread::hardware_concurrency());
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

void log(const std::string& s) { std::cerr << "[acceptance] " << s << std::endl; }

Outcome criterion1() {
  Outcome o;
  double worst_gauss = 0.0, worst_jump = 0.0;
  const FitConfig cfg = fx::tight_config(true);
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const Dataset d = simulate(fx::decoupled_scenario(1000 + seed), 200).data;
    const FitResult fit = em_fit(d, cfg);
    health.add(fit);
    if (!fit.converged) {
      o.pass = false;
      o.detail += "seed " + std::to_string(seed) + " did not converge; ";
      continue;
    }
    const oracle::LmmFit lmm = oracle::lmm_mle(d, 0.3, th::mat1(0.5));
    double g = (fit.theta_hat.beta - lmm.beta).cwiseAbs().maxCoeff();
    g = std::max(g, std::abs(fit.theta_hat.sigma_y - lmm.sigma_y));
    g = std::max(g, (fit.theta_hat.sigma_a - lmm.sigma_a).cwiseAbs().maxCoeff());
    worst_gauss = std::max(worst_gauss, g);
    // Textbook Breslow jumps at the Cox partial-likelihood MLE.
    const std::vector<double> jumps = oracle::cox_mle(d).jumps;
    if (jumps.size() != fit.lambda_hat.size()) {
      o.pass = false;
      o.detail += "support mismatch; ";
      continue;
    }
    for (std::size_t k = 0; k < jumps.size(); ++k)
      worst_jump = std::max(worst_jump, std::abs(jumps[k] - fit.lambda_hat.jump_sizes()[k]));
  }
  o.pass = o.pass && worst_gauss < 1e-6 && worst_jump < 1e-8;
  o.detail += "gaussian max-norm " + fmt(worst_gauss) + " (< 1e-6), breslow max jump diff " + fmt(worst_jump) +
              " (< 1e-8)";
  return o;
}

Outcome criterion2() {
  th::Rng rng(20260);
  const std::array<QuadRule, 4> rules{QuadRule{}, gauss_hermite_rule(20, 1), gauss_hermite_rule(20, 2),
                                      gauss_hermite_rule(20, 3)};
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const int d = th::uniform_int(rng, 1, 3);
    const ModelSpec sp{th::uniform_int(rng, 0, 2), d, th::uniform_int(rng, 0, 2), d, 5.0};
    Dataset data = th::random_dataset(rng, sp, {1, 8, 3, false});
    ThetaParams t = th::random_theta(rng, sp);
    t.phi.setZero();
    const StepCumHazard lam = th::random_hazard(rng, data);
    const SubjectRecord& s = data.subjects[0];
    const GaussianPosterior g = closed_form_gaussian_posterior(s, t);
    const PosteriorSummary ps = posterior_moments(s, t, lam, rules[static_cast<std::size_t>(d)]);
    const double em = (ps.mean - g.mean).cwiseAbs().maxCoeff() / std::max(g.mean.cwiseAbs().maxCoeff(), 1e-300);
    const double ec = (ps.covariance() - g.cov).cwiseAbs().maxCoeff() / g.cov.cwiseAbs().maxCoeff();
    worst = std::max({worst, g.mean.cwiseAbs().maxCoeff() > 0 ? em : 0.0, ec});
  }
  return {worst < 1e-8, "1000 subjects, worst relative error " + fmt(worst) + " (< 1e-8)"};
}

std::vector<FitResult> joint_fits;
std::vector<Dataset> joint_data;

Outcome criterion4() {
  Outcome o;
  const FitConfig cfg = fx::tight_config();
  const Integrator quad = cfg.integrator(1);
  double worst_score = 0.0;
  for (std::uint64_t seed : {401u, 402u, 403u}) {
    SimScenario sc = default_scenario();
    sc.seed = seed;
    joint_data.push_back(simulate(sc, 200).data);
    const Dataset& d = joint_data.back();
    joint_fits.push_back(em_fit(d, cfg));
    const FitResult& fit = joint_fits.back();
    health.add(fit);
    if (!fit.converged) {
      o.pass = false;
      o.detail += "fit did not converge; ";
      continue;
    }
    VectorXd score = VectorXd::Zero(d.spec.theta_dim());
    const EventTimes ev = distinct_event_times(d);
    std::vector<double> lam_scores(4, 0.0);
    const std::array<HazardDirection, 4> dirs{constant_direction(1.0), indicator_upto(ev.times[ev.times.size() / 4]),
                                              indicator_upto(ev.times[ev.times.size() / 2]),
                                              [](double t) { return t; }};
    for (const auto& s : d.subjects) {
      score += score_theta(s, fit.theta_hat, fit.lambda_hat, quad);
      for (std::size_t k = 0; k < dirs.size(); ++k)
        lam_scores[k] += score_lambda(s, fit.theta_hat, fit.lambda_hat, dirs[k], quad);
    }
    worst_score = std::max(worst_score, (score / d.n()).cwiseAbs().maxCoeff());
    for (double l : lam_scores) worst_score = std::max(worst_score, std::abs(l / d.n()));
  }

  // Random non-MLE points: theta and Lambda both perturbed. The finest rule
  // keeps quadrature error (large |phi| skews the posterior) below the
  // tolerance, so the comparison sees the score formulas.
  const Integrator fine = Integrator::make(kMaxQuadPoints, 1);
  th::Rng rng(4040);
  const Dataset& d = joint_data.front();
  Dataset small = d;
  small.subjects.resize(60);
  const ModelSpec& sp = d.spec;
  const double h = 1e-5;
  double worst_fd = 0.0;
  for (int p = 0; p < 50; ++p) {
    ThetaParams t = th::random_theta(rng, sp, 0.6);
    const StepCumHazard lam = th::random_hazard(rng, small, 0.01, 0.2);
    VectorXd g = VectorXd::Zero(sp.theta_dim());
    for (const auto& s : small.subjects) g += score_theta(s, t, lam, fine);
    const VectorXd v = t.to_vector();
    for (Eigen::Index j = 0; j < v.size(); ++j) {
      VectorXd up = v, dn = v;
      up(j) += h;
      dn(j) -= h;
      const double fd = (total_loglik(small, ThetaParams::from_vector(up, sp), lam, fine) -
                         total_loglik(small, ThetaParams::from_vector(dn, sp), lam, fine)) /
                        (2 * h);
      worst_fd = std::max(worst_fd, std::abs(g(j) - fd) / std::max(std::abs(fd), 1.0));
    }
  }
  o.pass = o.pass && worst_score < 1e-4 && worst_fd < 1e-5;
  o.detail += "averaged score at MLE " + fmt(worst_score) + " (< 1e-4), finite-difference relative error " +
              fmt(worst_fd) + " (< 1e-5) over 50 points at m = " + std::to_string(kMaxQuadPoints);
  return o;
}

Outcome from_checks(const std::vector<CheckResult>& checks, const std::string& prefix) {
  Outcome o;
  int failed = 0;
  for (const auto& c : checks) {
    if (!c.passed) {
      ++failed;
      o.detail += c.name + " = " + fmt(c.value) + " [" + c.detail + "]; ";
    }
  }
  o.pass = failed == 0;
  o.detail = prefix + std::to_string(checks.size() - static_cast<std::size_t>(failed)) + "/" +
             std::to_string(checks.size()) + " checks passed" + (failed ? "; failing: " + o.detail : "");
  return o;
}

StudySummary study(StudyKind kind, int n, int reps, std::uint64_t seed) {
  SimScenario sc = default_scenario();
  sc.seed = seed;
  StudyOptions opt;
  opt.kind = kind;
  opt.n = n;
  opt.replicates = reps;
  opt.threads = worker_threads();
  const auto t0 = std::chrono::steady_clock::now();
  StudySummary s = replicate_study(sc, opt);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  log(to_string(kind) + " n=" + std::to_string(n) + " M=" + std::to_string(reps) + ": " +
      std::to_string(s.converged) + " converged, " + fmt(secs) + " s");
  health.add(s);
  return s;
}

std::string describe(const StudySummary& s) {
  std::ostringstream out;
  for (const auto& c : s.coords) {
    out << "    " << c.label << ": truth " << fmt(c.truth) << " mean " << fmt(c.mean) << " rmse " << fmt(c.rmse)
        << " emp_se " << fmt(c.emp_se);
    for (const auto& k : c.schemes)
      out << " | " << k.scheme << " cover " << fmt(k.coverage) << " mean_se " << fmt(k.mean_se) << " (" << k.used
          << ")";
    out << "\n";
  }
  return out.str();
}

Outcome criterion5() {
  const StudySummary small = study(StudyKind::consistency, 100, 100, 5001);
  const StudySummary large = study(StudyKind::consistency, 400, 100, 5002);
  std::cerr << describe(small) << describe(large);
  log("median sup distance " + fmt(small.sup_lambda.median) + " -> " + fmt(large.sup_lambda.median));
  Outcome o = from_checks(consistency_checks(small, large), "");
  if (!small.valid || !large.valid) {
    o.pass = false;
    o.detail += "; study invalid (too many non-converged replicates)";
  }
  return o;
}

Outcome criterion6() {
  const StudySummary s = study(StudyKind::coverage, 200, 200, 6001);
  std::cerr << describe(s);
  Outcome o = from_checks(coverage_checks(s), "");
  o.detail += "; unreliable paper/central " + std::to_string(s.unreliable[0]) + "/" + std::to_string(s.unreliable[1]);
  if (!s.valid) {
    o.pass = false;
    o.detail += "; study invalid";
  }
  return o;
}

Outcome criterion7() {
  const StudySummary s = study(StudyKind::lr, 200, 200, 7001);
  Outcome o = from_checks(lr_checks(s), "mean " + fmt(s.lr.mean) + ", q95 " + fmt(s.lr.q95) + " vs chi2 " +
                                            fmt(chi_squared_quantile(0.95, s.lr_df)) + " (d = " +
                                            std::to_string(s.lr_df) + "); ");
  if (!s.valid) {
    o.pass = false;
    o.detail += "; study invalid";
  }
  return o;
}

Outcome criterion3() {
  const bool ok = health.worst_decrease <= 1e-8 && health.worst_self_consistency < 1e-8;
  return {ok, std::to_string(health.fits) + " fits, largest loglik decrease " + fmt(health.worst_decrease) +
                  " (<= 1e-8), largest self-consistency residual " + fmt(health.worst_self_consistency) +
                  " (< 1e-8)"};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string number(double v) {
  std::string s = io::canonical_dump(io::Json(v));
  while (!s.empty() && (s.back() == '\n')) s.pop_back();
  return s;
}

void write_csv(const Dataset& d, const fs::path& dir) {
  std::ofstream ev(dir / "events.csv"), ms(dir / "meas.csv"), ps(dir / "paths.csv");
  ev << "id,z,delta\n";
  ms << "id,t,y\n";
  ps << "id,block,t,values\n";
  auto emit = [&](const std::string& id, const char* block, const CovariatePath& p) {
    for (std::size_t k = 0; k < p.change_points().size(); ++k) {
      ps << id << ',' << block << ',' << number(p.change_points()[k]) << ',';
      for (Eigen::Index c = 0; c < p.dim(); ++c)
        ps << (c ? ";" : "") << number(p.values()(static_cast<Eigen::Index>(k), c));
      ps << '\n';
    }
  };
  for (const auto& s : d.subjects) {
    ev << s.id << ',' << number(s.z) << ',' << s.delta << '\n';
    for (int j = 0; j < s.n_meas(); ++j)
      ms << s.id << ',' << number(s.meas_times[static_cast<std::size_t>(j)]) << ',' << number(s.y(j)) << '\n';
    emit(s.id, "x", s.x_path);
    emit(s.id, "xt", s.xt_path);
    emit(s.id, "w", s.w_path);
    emit(s.id, "wt", s.wt_path);
  }
}

Outcome criterion8(const std::string& cli, const fs::path& dir) {
  Outcome o;
  fs::create_directories(dir);
  auto path = [&](const std::string& name) { return (dir / name).string(); };
  auto exec = [&](const std::string& args) {
    const std::string cmd = "\"" + cli + "\" " + args + " --quiet > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  };
  int compared = 0;
  // Each command runs three times: twice single-threaded, once with 4 threads.
  auto compare = [&](const std::string& name, const std::string& args, bool threaded) {
    std::vector<std::string> outs;
    std::vector<int> codes;
    for (int k = 0; k < 3; ++k) {
      const std::string out = path(name + "_" + std::to_string(k) + ".json");
      std::string a = args + " --out \"" + out + "\"";
      if (threaded) a += k == 2 ? " --threads 4" : " --threads 1";
      codes.push_back(exec(a));
      outs.push_back(slurp(out));
    }
    ++compared;
    if (outs[0].empty() || outs[0] != outs[1] || outs[0] != outs[2] || codes[0] != codes[1] || codes[0] != codes[2]) {
      o.pass = false;
      o.detail += name + " differs; ";
    }
    return path(name + "_0.json");
  };
  compare("scenario", "scenario", false);
  const std::string data = compare("simulate", "simulate --n 150 --seed 88", true);
  const std::string fit = compare("fit", "fit --data \"" + data + "\"", true);
  compare("profile", "profile --data \"" + data + "\" --fit \"" + fit + "\" --scheme both --ch 0.5,1,2", true);
  compare("verify_lr", "verify --study lr --n 60 --replicates 4 --seed 9", true);
  compare("verify_consistency", "verify --study consistency --n 40,80 --replicates 3 --seed 9", true);
  compare("verify_coverage", "verify --study coverage --n 60 --replicates 3 --seed 9", true);
  write_csv(io::dataset_from_json(io::Json::parse(slurp(data))), dir);
  compare("import_csv",
          "import-csv --measurements \"" + path("meas.csv") + "\" --paths \"" + path("paths.csv") + "\" --events \"" +
              path("events.csv") + "\" --tau 3",
          false);
  o.detail = std::to_string(compared) + " commands compared across repeats and --threads 1/4" +
             (o.detail.empty() ? "" : "; " + o.detail);
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: acceptance <jointlab-cli> [scratch-dir]\n";
    return 2;
  }
  const std::string cli = argv[1];
  const fs::path scratch = argc > 2 ? fs::path(argv[2]) : fs::temp_directory_path() / "jointlab_acceptance";

  std::array<Outcome, 9> out;
  auto timed = [](int k, auto&& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    log("criterion " + std::to_string(k) + " ...");
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    log("criterion " + std::to_string(k) + " done in " +
        fmt(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()) + " s");
    return o;
  };
  out[1] = timed(1, criterion1);
  out[2] = timed(2, criterion2);
  out[4] = timed(4, criterion4);
  out[5] = timed(5, criterion5);
  out[6] = timed(6, criterion6);
  out[7] = timed(7, criterion7);
  out[3] = timed(3, criterion3);
  out[8] = timed(8, [&] { return criterion8(cli, scratch); });

  bool all = true;
  for (int k = 1; k <= 8; ++k) {
    std::cout << "CRITERION " << k << ": " << (out[static_cast<std::size_t>(k)].pass ? "PASS" : "FAIL") << "  "
              << out[static_cast<std::size_t>(k)].detail << "\n";
    all = all && out[static_cast<std::size_t>(k)].pass;
  }
  std::cout << (all ? "ALL CRITERIA PASS" : "SOME CRITERIA FAIL") << std::endl;
  return all ? 0 : 1;
}
