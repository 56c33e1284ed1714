#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "bdsde/cli.hpp"

using namespace bdsde;
namespace fs = std::filesystem;

namespace {

const std::string kConfigDir = BDSDE_CONFIG_DIR;

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / "bdsde_cli_tests" / name;
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

int run(std::vector<std::string> args, std::string* err_text = nullptr) {
  args.insert(args.begin(), "bdsde");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream log, err;
  const int rc = run_cli(static_cast<int>(argv.size()), argv.data(), log, err);
  if (err_text) *err_text = err.str();
  return rc;
}

int run_binary(const std::string& args) {
  const std::string cmd = std::string(BDSDE_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string cfg(const std::string& name) { return kConfigDir + "/" + name + ".cfg"; }

std::vector<std::vector<double>> read_plot(const fs::path& p) {
  std::ifstream f(p);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::vector<double> row;
    std::string tok;
    while (ls >> tok) row.push_back(tok == "nan" ? std::nan("") : std::stod(tok));
    rows.push_back(row);
  }
  return rows;
}

nlohmann::json manifest(const fs::path& dir) {
  return nlohmann::json::parse(slurp(dir / "manifest.json"));
}

}  // namespace

TEST(Config, RoundTrip) {
  const std::string text =
      "# comment line\n"
      "T = 0.75\nK = 12\nE = uniform:0,1,3\nF = atoms:1@0.5\npaths = 77\nseed = 42\n"
      "mode = exact_tree\ndrift = trig:-0.5\nsigma = constant:0.2\nterminal = brownian\n"
      "drift2 = trig:0.5\ndelta = 0.001\nlevels = 2,4\ntol = 1e-07\nforce = true\n";
  const auto c = parse_config(text);
  EXPECT_EQ(c.T, 0.75);
  EXPECT_EQ(c.K, 12u);
  EXPECT_EQ(c.mode, RegressionMode::exact_tree);
  EXPECT_EQ(c.levels, (std::vector<double>{2, 4}));
  ASSERT_TRUE(c.delta.has_value());
  const auto again = parse_config(serialize(c));
  EXPECT_EQ(again, c);
  EXPECT_EQ(serialize(again), serialize(c));
}

TEST(Config, RoundTripOfAwkwardDoubles) {
  ExperimentConfig c;
  for (double v : {0.1, 1.0 / 3.0, 1e-300, 123456789.123456789, 5e-324}) {
    c.T = v;
    c.ridge = v / 7.0;
    EXPECT_EQ(parse_config(serialize(c)), c) << v;
  }
}

TEST(Config, EveryShippedConfigRoundTrips) {
  std::size_t seen = 0;
  for (const auto& e : fs::directory_iterator(kConfigDir)) {
    if (e.path().extension() != ".cfg") continue;
    const auto c = load_config(e.path().string());
    EXPECT_EQ(parse_config(serialize(c)), c) << e.path();
    EXPECT_NO_THROW(build_experiment(c)) << e.path();
    ++seen;
  }
  EXPECT_GE(seen, 10u);
}

TEST(Config, HashIsFnv1aOfCanonicalText) {
  // published FNV-1a 64 test vectors
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ull);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cull);
  EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ull);
  const ExperimentConfig c;
  const auto h = config_hash(c);
  EXPECT_EQ(h.size(), 16u);
  EXPECT_EQ(h, config_hash(parse_config(serialize(c))));
  // comments and spacing do not change the hash
  EXPECT_EQ(config_hash(parse_config("  seed=1  # x\n\n")), h);
  ExperimentConfig d = c;
  d.seed = 2;
  EXPECT_NE(config_hash(d), h);
}

TEST(Config, RejectsBadInput) {
  auto line_of = [](const std::string& text) {
    try {
      parse_config(text);
    } catch (const config_error& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  EXPECT_NE(line_of("T = 1\nbogus = 3\n").find("line 2"), std::string::npos);
  EXPECT_NE(line_of("K = 4\nK = 5\n").find("line 2"), std::string::npos);
  EXPECT_NE(line_of("just words\n").find("line 1"), std::string::npos);
  EXPECT_THROW(parse_config("K = -3\n"), config_error);
  EXPECT_THROW(parse_config("T = abc\n"), config_error);
  EXPECT_THROW(parse_config("mode = fast\n"), config_error);
  EXPECT_THROW(parse_config("force = maybe\n"), config_error);
  EXPECT_THROW(load_config("/nonexistent/x.cfg"), config_error);
  EXPECT_THROW(build_experiment(parse_config("drift = wobbly\n")), std::exception);
  EXPECT_THROW(build_experiment(parse_config("terminal = huge\n")), std::exception);
  EXPECT_THROW(build_experiment(parse_config("E = cauchy:1\n")), config_error);
}

TEST(Config, MeasureGrammar) {
  EXPECT_EQ(parse_measure("none").size(), 0u);
  const auto a = parse_measure("atoms:0.25@0.5, 0.75@1.5");
  ASSERT_EQ(a.size(), 2u);
  EXPECT_DOUBLE_EQ(a.total_mass(), 2.0);
  EXPECT_DOUBLE_EQ(*a.atom(1).coord, 0.75);
  const auto u = parse_measure("uniform:0,2,4,3");
  EXPECT_EQ(u.size(), 4u);
  EXPECT_NEAR(u.total_mass(), 6.0, 1e-12);
  // density u^-1/2 on [0.25, 1]: mass 2 (1 - 0.5) = 1
  const auto p = parse_measure("power:1,-0.5,0.25,1,8");
  EXPECT_EQ(p.size(), 8u);
  EXPECT_NEAR(p.total_mass(), 1.0, 1e-6);
  EXPECT_GT(parse_measure("sigma:1,-1.5,4,3").size(), 0u);
  EXPECT_THROW(parse_measure("atoms:1"), config_error);
  EXPECT_THROW(parse_measure("uniform:0,1,2.5"), config_error);
  EXPECT_THROW(parse_measure("uniform:0,1"), config_error);
  EXPECT_THROW(parse_measure("lognormal:0,1,3"), config_error);
}

TEST(Cli, TrivialSolveGivesConstantColumn) {
  const auto out = scratch("trivial");
  ASSERT_EQ(run({"solve", "--config", cfg("trivial"), "--out", out.string()}), 0);
  std::ifstream f(out / "solution.csv");
  std::string line;
  std::getline(f, line);
  EXPECT_EQ(line, "k,t,p,Y,Z0");
  std::size_t rows = 0;
  while (std::getline(f, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    ASSERT_EQ(cells.size(), 5u);
    EXPECT_EQ(std::stod(cells[3]), 0.7);
    EXPECT_EQ(std::stod(cells[4]), 0.0);
    ++rows;
  }
  EXPECT_EQ(rows, 11u * 200u);
  const auto m = manifest(out);
  EXPECT_TRUE(m["pass"].get<bool>());
  EXPECT_EQ(m["verdict"]["iterations_used"].get<int>(), 1);
}

TEST(Cli, RepeatedRunsAreByteIdentical) {
  for (const std::string name : {"trig_contraction", "compare_thm43_jump", "envelope_sqrt"}) {
    const std::string cmd = name == "trig_contraction" ? "solve"
                            : name == "envelope_sqrt"  ? "envelope"
                                                       : "compare";
    const auto a = scratch(name + "_a"), b = scratch(name + "_b"), c = scratch(name + "_c");
    const std::vector<std::string> common = {cmd, "--config", cfg(name), "--paths", "300"};
    auto with = [&](const fs::path& dir, const std::string& threads) {
      auto args = common;
      if (name == "envelope_sqrt") args.back() = "2";
      args.insert(args.end(), {"--out", dir.string(), "--threads", threads});
      return run(args);
    };
    const int ra = with(a, "1"), rb = with(b, "1"), rc = with(c, "3");
    EXPECT_EQ(ra, rb);
    EXPECT_EQ(ra, rc);
    for (const auto& e : fs::directory_iterator(a)) {
      const auto file = e.path().filename();
      if (file == "manifest.json") continue;
      EXPECT_EQ(slurp(a / file), slurp(b / file)) << name << ": " << file;
      EXPECT_EQ(slurp(a / file), slurp(c / file)) << name << ": " << file << " (threads)";
    }
  }
  set_thread_count(1);
}

TEST(Cli, SeedPrecedence) {
  const auto out = scratch("seed");
  const std::string base = "simulate --config " + cfg("simulate") + " --out " + out.string();
  ASSERT_EQ(run_binary(base), 0);
  EXPECT_EQ(manifest(out)["seed"].get<std::uint64_t>(), 4u);
  // env var beats the config file, the flag beats both
  ASSERT_EQ(std::system(("BDSDE_SEED=99 " + std::string(BDSDE_CLI_PATH) + " " + base +
                         " > /dev/null 2>&1")
                            .c_str()),
            0);
  EXPECT_EQ(manifest(out)["seed"].get<std::uint64_t>(), 99u);
  ASSERT_EQ(std::system(("BDSDE_SEED=99 " + std::string(BDSDE_CLI_PATH) + " " + base +
                         " --seed 5 > /dev/null 2>&1")
                            .c_str()),
            0);
  EXPECT_EQ(manifest(out)["seed"].get<std::uint64_t>(), 5u);
}

TEST(Cli, OverridesApply) {
  const auto out = scratch("overrides");
  ASSERT_EQ(run({"simulate", "--config", cfg("simulate"), "--out", out.string(), "--paths", "7",
                 "--steps", "3", "--set", "T=2", "--set", "seed = 11"}),
            0);
  const auto c = parse_config(manifest(out)["config"].get<std::string>());
  EXPECT_EQ(c.paths, 7u);
  EXPECT_EQ(c.K, 3u);
  EXPECT_EQ(c.T, 2.0);
  EXPECT_EQ(c.seed, 11u);
  std::ifstream f(out / "drivers.csv");
  std::string header;
  std::getline(f, header);
  EXPECT_FALSE(header.empty());
}

TEST(Cli, ViolatingDemoExitsWithVerdictFailure) {
  const auto out = scratch("violating");
  EXPECT_EQ(run_binary("compare --config " + cfg("violating_demo") + " --out " + out.string()), 2);
  const auto m = manifest(out);
  EXPECT_FALSE(m["pass"].get<bool>());
  EXPECT_TRUE(m["verdict"]["forced"].get<bool>());
  EXPECT_GT(m["verdict"]["violation_fraction"].get<double>(), 0.1);
  EXPECT_NE(slurp(out / "verdict.txt").find("verdict=fail"), std::string::npos);
  // without force the hypothesis check refuses to run
  EXPECT_EQ(run_binary("compare --config " + cfg("violating_demo") + " --set force=false --out " +
                       out.string()),
            1);
}

TEST(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(run_binary("frobnicate"), 1);
  EXPECT_EQ(run_binary("solve --no-such-flag"), 1);
  EXPECT_EQ(run_binary(""), 1);
  EXPECT_EQ(run_binary("solve --mode quantum"), 1);
  EXPECT_EQ(run_binary("solve --config /nonexistent.cfg"), 1);
  std::string err;
  EXPECT_EQ(run({"solve", "--bogus"}, &err), 1);
  EXPECT_NE(err.find("Usage"), std::string::npos);
  EXPECT_EQ(run({"solve", "--set", "noequals"}, &err), 1);
  EXPECT_EQ(run({"solve", "--set", "unknown_key=1"}, &err), 1);
  EXPECT_EQ(run({"solve", "--threads", "0"}, &err), 1);
  EXPECT_EQ(run({"compare", "--set", "hypothesis=lemma41", "--out", scratch("l41").string()}, &err), 1);
}

TEST(Cli, IdenticalPairGapProfileIsZero) {
  const auto out = scratch("identical");
  ASSERT_EQ(run({"compare", "--config", cfg("compare_thm43_sqrt"), "--set", "drift2=", "--paths",
                 "400", "--steps", "8", "--out", out.string()}),
            0);
  const auto rows = read_plot(out / "gap_profile.dat");
  ASSERT_EQ(rows.size(), 9u);
  for (const auto& r : rows) {
    ASSERT_EQ(r.size(), 4u);
    EXPECT_EQ(r[1], 0.0);
    EXPECT_EQ(r[2], 0.0);
    EXPECT_EQ(r[3], 0.0);
  }
}

TEST(Cli, ConvergencePlotDecreases) {
  const auto out = scratch("convergence");
  ASSERT_EQ(run({"solve", "--config", cfg("trig_contraction"), "--paths", "500", "--out",
                 out.string()}),
            0);
  const auto rows = read_plot(out / "convergence.dat");
  ASSERT_GE(rows.size(), 3u);
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_LT(rows[i][1], rows[i - 1][1]) << i;
}

TEST(Cli, EnvelopePlotWidthShrinks) {
  const auto out = scratch("envelope");
  ASSERT_EQ(run({"envelope", "--config", cfg("envelope_sqrt"), "--out", out.string()}), 0);
  const double delta = manifest(out)["verdict"]["delta"].get<double>();
  const auto rows = read_plot(out / "envelope.dat");
  ASSERT_EQ(rows.size(), 3u);
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_LE(rows[i][3], rows[i - 1][3] + delta);
  for (const auto& r : rows) {
    EXPECT_LE(r[4], r[1] + delta);
    EXPECT_LE(r[2], r[5] + delta);
  }
}

TEST(Cli, ManifestListsEveryFile) {
  const std::vector<std::pair<std::string, std::string>> runs = {
      {"simulate", "simulate"},      {"solve", "trivial"},        {"ito-check", "ito_linear"},
      {"nonpos", "nonpos_constant"}, {"envelope", "envelope_lipschitz"},
      {"compare", "compare_thm41"}};
  for (const auto& [cmd, name] : runs) {
    const auto out = scratch("manifest_" + name);
    // tree mode counts scenarios, each expanding to 2^K paths
    const std::string paths = name == "envelope_lipschitz" ? "2" : "200";
    const int rc = run({cmd, "--config", cfg(name), "--paths", paths, "--steps", "8", "--out",
                        out.string()});
    EXPECT_TRUE(rc == 0 || rc == 2) << cmd;
    const auto m = manifest(out);
    std::set<std::string> listed, present;
    for (const auto& f : m["outputs"]) listed.insert(f.get<std::string>());
    for (const auto& e : fs::directory_iterator(out)) present.insert(e.path().filename().string());
    EXPECT_EQ(listed, present) << cmd;
    EXPECT_EQ(m["command"].get<std::string>(), cmd);
    EXPECT_EQ(m["config_hash"].get<std::string>(),
              config_hash(parse_config(m["config"].get<std::string>())));
    EXPECT_TRUE(m.contains("wall_time_seconds"));
    EXPECT_TRUE(m.contains("version"));
  }
}
