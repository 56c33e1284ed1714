#pragma once

// Experiment runner behind the `bdsde` executable.
//
//   bdsde <simulate|solve|ito-check|compare|nonpos|envelope> [--config PATH]
//         [--seed N] [--paths N] [--steps K] [--out DIR] [--force]
//         [--mode lsmc|exact_tree] [--threads N] [--set key=value]...
//
// Exit status: 0 success, 2 verdict failure, 1 usage, config or run error.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bdsde/calculus.hpp"
#include "bdsde/comparison.hpp"
#include "bdsde/config.hpp"
#include "bdsde/envelope.hpp"
#include "bdsde/parallel.hpp"
#include "bdsde/report.hpp"
#include "bdsde/solver.hpp"

namespace bdsde {

inline constexpr const char* kArtifactVersion = "0.1.0";

// Mean |f(X_0) - Ito expansion| for X = B (first component), at K, 2K, 4K
// steps. ratio compares each row with the previous one.
inline std::vector<ItoRow> ito_study(const MarkSpaces& spaces, std::size_t brownian_dim, double T,
                                     std::size_t K, std::size_t paths, std::uint64_t seed,
                                     const TestFunction& f) {
  std::vector<ItoRow> rows;
  for (std::size_t steps : {K, 2 * K, 4 * K}) {
    DriverOptions o;
    o.brownian_dim = brownian_dim;
    const auto d = simulate_drivers(TimeGrid::uniform(T, steps), spaces, paths, seed, o);
    auto x = zero_ito_process(d);
    for (std::size_t p = 0; p < d.n_paths(); ++p) {
      double b = 0.0;
      for (std::size_t k = 0; k < steps; ++k) b += d.dB(k, p, 0);
      x.terminal[p] = b;
      for (std::size_t k = 0; k <= steps; ++k) x.brownian->at(k, p, 0, 0) = 1.0;
    }
    const auto r = ito_residual(f, x, d, 0);
    ItoRow row;
    row.steps = steps;
    for (double v : r) row.mean_abs_residual += std::abs(v);
    row.mean_abs_residual /= static_cast<double>(r.size());
    if (!rows.empty()) row.ratio = row.mean_abs_residual / rows.back().mean_abs_residual;
    rows.push_back(row);
  }
  return rows;
}

namespace detail {

struct RunOutput {
  bool pass = true;
  nlohmann::ordered_json verdict = nlohmann::ordered_json::object();
  std::vector<std::string> files;
};

class OutputDir {
 public:
  OutputDir(std::filesystem::path dir, RunOutput& out) : dir_(std::move(dir)), out_(out) {
    std::filesystem::create_directories(dir_);
  }

  void write(const std::string& name, const std::function<void(std::ostream&)>& body) {
    std::ofstream f(dir_ / name, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write output file '" + (dir_ / name).string() + "'");
    body(f);
    if (!f) throw std::runtime_error("write failed for '" + (dir_ / name).string() + "'");
    out_.files.push_back(name);
  }

  const std::filesystem::path& path() const { return dir_; }

 private:
  std::filesystem::path dir_;
  RunOutput& out_;
};

inline PicardOptions picard_options(const ExperimentConfig& c) {
  PicardOptions po;
  po.tol = c.tol;
  po.max_iter = c.max_iter;
  po.force = c.force;
  return po;
}

inline ComparisonOptions comparison_options(const ExperimentConfig& c) {
  ComparisonOptions o;
  if (c.delta) o.delta = *c.delta;
  o.ceiling = c.ceiling;
  o.force = c.force;
  o.picard = picard_options(c);
  o.picard.force = false;
  o.cloud.n_pairs = c.cloud;
  o.cloud.horizon = c.T;
  return o;
}

inline void report_comparison(const ComparisonReport& rep, OutputDir& dir, RunOutput& out,
                              std::ostream& log) {
  dir.write("gap_profile.csv", [&](std::ostream& os) { write_gap_profile_csv(os, rep); });
  dir.write("gap_profile.dat", [&](std::ostream& os) { plot_gap_profile(os, rep); });
  dir.write("verdict.txt", [&](std::ostream& os) { os << rep.verdict() << '\n'; });
  log << rep.verdict() << '\n';
  out.pass = rep.pass;
  out.verdict = {{"kind", rep.kind},
                 {"pass", rep.pass},
                 {"violation_fraction", rep.violation_fraction},
                 {"ceiling", rep.ceiling},
                 {"delta", rep.delta},
                 {"calibration_error", rep.calibration_error},
                 {"max_positive_gap", rep.max_positive_gap},
                 {"forced", rep.forced}};
}

inline RunOutput run_simulate(const Experiment& x, OutputDir& dir, std::ostream& log) {
  RunOutput out;
  const auto d = x.drivers();
  dir.write("drivers.csv", [&](std::ostream& os) { write_drivers_csv(os, d); });
  out.verdict = {{"paths", d.n_paths()}, {"steps", d.steps()}};
  log << "simulate: " << d.n_paths() << " paths x " << d.steps() << " steps\n";
  return out;
}

inline RunOutput run_solve(const Experiment& x, OutputDir& dir, std::ostream& log) {
  RunOutput out;
  const auto d = x.drivers();
  const ConditionalExpectation ce(d, x.regression);
  PicardOptions po = picard_options(x.config);
  if (x.config.initial != 0.0) po.initial = SolutionTriple::constant(d, x.config.initial);
  const auto res = picard_solve(x.coefficients1(), x.terminal1.realize(d), ce, po);
  const auto& diag = res.diagnostics;
  dir.write("solution.csv", [&](std::ostream& os) { write_solution_csv(os, res.solution); });
  dir.write("picard.csv", [&](std::ostream& os) { write_picard_csv(os, diag); });
  dir.write("convergence.dat", [&](std::ostream& os) { plot_convergence(os, diag); });
  const double y0 = detail::mean_at_zero(res.solution);
  out.pass = diag.converged;
  out.verdict = {{"converged", diag.converged},
                 {"iterations_used", diag.iterations_used},
                 {"theoretical_bound", diag.theoretical_bound},
                 {"y0_mean", y0}};
  char buf[160];
  std::snprintf(buf, sizeof buf, "solve: converged=%d iterations=%zu y0_mean=%.10g bound=%.6g\n",
                diag.converged ? 1 : 0, diag.iterations_used, y0, diag.theoretical_bound);
  log << buf;
  return out;
}

inline RunOutput run_ito(const Experiment& x, OutputDir& dir, std::ostream& log) {
  RunOutput out;
  const auto& c = x.config;
  const bool square = c.test_function == "square";
  TestFunction f = square_test_function();
  if (!square) f = linear_test_function(Eigen::VectorXd::Ones(1), 0.5);
  const auto rows = ito_study(x.spaces, c.brownian_dim, c.T, c.K, c.paths, c.seed, f);
  dir.write("ito.csv", [&](std::ostream& os) { write_ito_csv(os, rows); });
  dir.write("ito.dat", [&](std::ostream& os) { plot_ito(os, rows); });
  if (square) {
    // halving within 30% per refinement
    for (std::size_t i = 1; i < rows.size(); ++i)
      out.pass = out.pass && std::abs(rows[i].ratio - 0.5) <= 0.15;
  } else {
    for (const auto& r : rows) out.pass = out.pass && r.mean_abs_residual < 1e-10;
  }
  nlohmann::ordered_json table = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    table.push_back({{"K", r.steps}, {"mean_abs_residual", r.mean_abs_residual}});
    char buf[128];
    std::snprintf(buf, sizeof buf, "ito-check: K=%zu mean|residual|=%.6g ratio=%.4g\n", r.steps,
                  r.mean_abs_residual, r.ratio);
    log << buf;
  }
  out.verdict = {{"test_function", c.test_function}, {"pass", out.pass}, {"rows", table}};
  return out;
}

inline RunOutput run_compare(const Experiment& x, OutputDir& dir, std::ostream& log) {
  RunOutput out;
  const Hypothesis h = parse_hypothesis(x.config.hypothesis);
  if (h == Hypothesis::lemma41)
    throw config_error("compare: hypothesis lemma41 concerns one equation; use the nonpos command");
  const auto d = x.drivers();
  const ConditionalExpectation ce(d, x.regression);
  const auto opt = comparison_options(x.config);
  const bool holder = h == Hypothesis::thm43a || h == Hypothesis::thm43b;
  const auto c1 = x.coefficients1(), c2 = x.coefficients2();
  const ComparisonReport rep =
      holder ? compare_pair_holder(c1, c2, h, x.terminal1, x.terminal2, ce, opt)
             : compare_pair(c1, c2, h, x.terminal1, x.terminal2, ce, opt);
  report_comparison(rep, dir, out, log);
  return out;
}

inline RunOutput run_nonpos(const Experiment& x, OutputDir& dir, std::ostream& log) {
  RunOutput out;
  const auto d = x.drivers();
  const ConditionalExpectation ce(d, x.regression);
  const auto rep = nonpositivity_check(x.coefficients1(), x.terminal1, ce,
                                       comparison_options(x.config));
  report_comparison(rep, dir, out, log);
  return out;
}

inline RunOutput run_envelope(const Experiment& x, OutputDir& dir, std::ostream& log) {
  RunOutput out;
  const auto& c = x.config;
  const auto d = x.drivers();
  const ConditionalExpectation ce(d, x.regression);
  EnvelopeOptions opt;
  opt.levels = c.levels;
  opt.picard = picard_options(c);
  opt.picard.force = false;
  if (c.delta) opt.delta = *c.delta;
  opt.force = c.force;
  opt.cloud.n_pairs = c.cloud;
  const auto rep = envelope_solve(x.coefficients1(), x.terminal1.realize(d), ce, opt);
  dir.write("envelope.csv", [&](std::ostream& os) { write_envelope_csv(os, rep); });
  dir.write("envelope_links.csv", [&](std::ostream& os) { write_links_csv(os, rep); });
  dir.write("envelope.dat", [&](std::ostream& os) { plot_envelope(os, rep); });
  out.pass = rep.monotone;
  nlohmann::ordered_json links = nlohmann::ordered_json::array();
  for (const auto& l : rep.links)
    links.push_back({{"link", l.name}, {"violations", l.violations}, {"worst_excess", l.worst_excess}});
  out.verdict = {{"monotone", rep.monotone},
                 {"delta", rep.delta},
                 {"limit_lower", rep.limit_lower},
                 {"limit_upper", rep.limit_upper},
                 {"y0_lower_bound", rep.y0_lower_bound},
                 {"y0_upper_bound", rep.y0_upper_bound},
                 {"forced", rep.forced},
                 {"links", links}};
  for (const auto& L : rep.levels) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "envelope: n=%g y0_lower=%.10g y0_upper=%.10g width=%.6g\n",
                  L.n, L.y0_lower, L.y0_upper, L.width);
    log << buf;
  }
  log << "envelope: monotone=" << (rep.monotone ? 1 : 0) << '\n';
  return out;
}

// Temp file plus rename, so readers never see a partial manifest.
inline void write_manifest(const std::filesystem::path& dir, const nlohmann::ordered_json& m) {
  const auto final_path = dir / "manifest.json";
  const auto tmp = dir / "manifest.json.tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    f << m.dump(2) << '\n';
    if (!f) throw std::runtime_error("write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, final_path);
}

}  // namespace detail

inline int run_cli(int argc, const char* const* argv, std::ostream& log = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App app{"Numerical lab for backward doubly stochastic equations with jumps", "bdsde"};
  std::string command, config_path, out_dir = "out", mode;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> paths, steps, threads;
  std::vector<std::string> sets;
  bool force = false;
  app.add_option("command", command, "simulate | solve | ito-check | compare | nonpos | envelope")
      ->required()
      ->check(CLI::IsMember({"simulate", "solve", "ito-check", "compare", "nonpos", "envelope"}));
  app.add_option("--config", config_path, "experiment config file");
  app.add_option("--seed", seed, "master seed (overrides BDSDE_SEED and the config)");
  app.add_option("--paths", paths, "number of paths (tree mode: scenarios)");
  app.add_option("--steps", steps, "number of time steps K");
  app.add_option("--out", out_dir, "output directory")->capture_default_str();
  app.add_flag("--force", force, "run even when hypothesis validation fails");
  app.add_option("--mode", mode, "conditional expectations")
      ->check(CLI::IsMember({"lsmc", "exact_tree"}));
  app.add_option("--threads", threads, "worker threads");
  app.add_option("--set", sets, "config override key=value (repeatable)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      log << app.help();
      return 0;
    }
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  const auto start = std::chrono::steady_clock::now();
  Experiment x;
  try {
    ExperimentConfig cfg = config_path.empty() ? ExperimentConfig{} : load_config(config_path);
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw config_error("--set needs key=value, got '" + s + "'");
      set_config_value(cfg, detail::trim(s.substr(0, eq)), detail::trim(s.substr(eq + 1)));
    }
    if (seed) {
      cfg.seed = *seed;
    } else if (const char* env = std::getenv("BDSDE_SEED")) {
      cfg.seed = detail::parse_uint("BDSDE_SEED", env);
    }
    if (paths) cfg.paths = *paths;
    if (steps) cfg.K = *steps;
    if (!mode.empty()) cfg.mode = parse_mode(mode);
    if (force) cfg.force = true;
    if (threads) {
      if (*threads == 0) throw config_error("--threads must be >= 1");
      set_thread_count(*threads);
    }
    x = build_experiment(cfg);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }

  detail::RunOutput out;
  try {
    detail::OutputDir dir(out_dir, out);
    detail::RunOutput r;
    if (command == "simulate") r = detail::run_simulate(x, dir, log);
    else if (command == "solve") r = detail::run_solve(x, dir, log);
    else if (command == "ito-check") r = detail::run_ito(x, dir, log);
    else if (command == "compare") r = detail::run_compare(x, dir, log);
    else if (command == "nonpos") r = detail::run_nonpos(x, dir, log);
    else r = detail::run_envelope(x, dir, log);
    out.pass = r.pass;
    out.verdict = std::move(r.verdict);

    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    auto files = out.files;
    files.push_back("manifest.json");
    nlohmann::ordered_json m;
    m["artifact"] = "bdsde";
    m["version"] = kArtifactVersion;
    m["command"] = command;
    m["config_hash"] = config_hash(x.config);
    m["seed"] = x.config.seed;
    m["threads"] = thread_count();
    m["wall_time_seconds"] = wall;
    m["outputs"] = files;
    m["pass"] = out.pass;
    m["verdict"] = out.verdict;
    m["config"] = serialize(x.config);
    detail::write_manifest(dir.path(), m);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return out.pass ? 0 : 2;
}

}  // namespace bdsde
