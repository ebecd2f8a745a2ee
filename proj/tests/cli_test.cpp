// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "agfn/checkpoint.hpp"
#include "agfn/config.hpp"

namespace fs = std::filesystem;

namespace {

const std::string kCli = AGFN_CLI_PATH;
const std::string kTiny = std::string(AGFN_CONFIG_DIR) + "/tiny.conf";

struct Outcome {
  int status = -1;
  std::string out;
};

Outcome run(const std::string& args) {
  static int calls = 0;
  const auto log = fs::temp_directory_path() /
                   ("agfn_cli_test_" + std::to_string(::getpid()) + "_" + std::to_string(calls++) + ".log");
  const int rc = std::system((kCli + " " + args + " > " + log.string() + " 2>&1").c_str());
  Outcome o;
  o.status = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  o.out = agfn::read_file(log);
  fs::remove(log);
  return o;
}

fs::path fresh(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("agfn_cli_test_" + name);
  fs::remove_all(d);
  return d;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> v;
  std::istringstream is(text);
  for (std::string l; std::getline(is, l);) v.push_back(l);
  return v;
}

std::vector<std::string> fields(const std::string& line) {
  std::vector<std::string> v;
  std::istringstream is(line);
  for (std::string f; std::getline(is, f, ',');) v.push_back(f);
  return v;
}

}  // namespace

TEST(Cli, TrainWritesMetricsAndIsDeterministic) {
  const auto a = fresh("train_a"), b = fresh("train_b");
  const auto ra = run("train --config " + kTiny + " --out " + a.string());
  ASSERT_EQ(ra.status, 0) << ra.out;
  ASSERT_EQ(run("train --config " + kTiny + " --out " + b.string()).status, 0);
  const auto csv = agfn::read_file(a / "metrics.csv");
  const auto rows = lines_of(csv);
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0], "step,alpha,epsilon,loss,modes,topk_reward,spearman,entropy,mean_length");
  EXPECT_EQ(fields(rows[1])[0], "30");
  EXPECT_EQ(fields(rows[4])[0], "100");
  EXPECT_EQ(csv, agfn::read_file(b / "metrics.csv"));
  EXPECT_EQ(agfn::read_file(a / "checkpoint.json"), agfn::read_file(b / "checkpoint.json"));
  // the effective configuration is saved next to the results and parses back
  const auto conf = agfn::read_file(a / "config.conf");
  EXPECT_NE(conf.find("train.steps = 100\n"), std::string::npos);
  EXPECT_EQ(agfn::format_config(agfn::config_from_text(conf)), conf);
  const auto summary = nlohmann::json::parse(agfn::read_file(a / "summary.json"));
  EXPECT_EQ(summary.at("final").at("step"), 100);
  EXPECT_GT(summary.at("final").at("mean_reward").get<double>(), 0.0);
}

TEST(Cli, OverrideFixesAlpha) {
  const auto d = fresh("override");
  ASSERT_EQ(run("train --config " + kTiny + " --override schedule.alpha0=0.5 --out " + d.string()).status, 0);
  const auto rows = lines_of(agfn::read_file(d / "metrics.csv"));
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_EQ(fields(rows[i])[1], "0.5");
  const auto d2 = fresh("override_alias");
  ASSERT_EQ(run("train --config " + kTiny + " --override objective.alpha0=0.7 --out " + d2.string()).status, 0);
  EXPECT_EQ(fields(lines_of(agfn::read_file(d2 / "metrics.csv"))[1])[1], "0.7");
}

TEST(Cli, TrainPerSeedDirectories) {
  const auto d = fresh("seeds");
  ASSERT_EQ(run("train --config " + kTiny + " --seeds 1,2 --parallel 2 --out " + d.string()).status, 0);
  EXPECT_TRUE(fs::exists(d / "seed_1" / "metrics.csv"));
  EXPECT_TRUE(fs::exists(d / "seed_2" / "metrics.csv"));
  EXPECT_NE(agfn::read_file(d / "seed_1" / "checkpoint.json"), agfn::read_file(d / "seed_2" / "checkpoint.json"));
}

TEST(Cli, SweepTable) {
  const auto d = fresh("sweep");
  const auto r = run("sweep --config " + kTiny + " --override sweep.alphas=0.3 --seeds 4 --out " + d.string());
  ASSERT_EQ(r.status, 0) << r.out;
  const auto rows = lines_of(agfn::read_file(d / "sweep.csv"));
  ASSERT_EQ(rows.size(), 7u);
  EXPECT_EQ(rows[0], "objective,metric,stat,0.3");
  for (std::size_t i = 2; i < rows.size(); i += 2) {
    const auto f = fields(rows[i]);
    EXPECT_EQ(f[2], "std");
    EXPECT_EQ(f[3], "0");
  }
  EXPECT_TRUE(fs::exists(d / "alpha_0.3" / "seed_4" / "metrics.csv"));
}

TEST(Cli, AnalyzeTrainedCheckpoint) {
  const auto t = fresh("analyze_train"), d = fresh("analyze");
  ASSERT_EQ(run("train --config " + kTiny + " --out " + t.string()).status, 0);
  const auto r = run("analyze --config " + kTiny + " --checkpoint " + (t / "checkpoint.json").string() + " --out " +
                     d.string());
  ASSERT_EQ(r.status, 0) << r.out;
  const auto rep = nlohmann::json::parse(agfn::read_file(d / "report.json"));
  EXPECT_TRUE(rep.at("criterion").at("is_gfnmc").get<bool>());
  EXPECT_EQ(rep.at("period"), 4);
  ASSERT_EQ(rep.at("mixed").size(), 9u);
  for (const auto& m : rep.at("mixed")) {
    EXPECT_GE(m.at("beta").get<double>(), 0.0);
    EXPECT_LE(m.at("beta").get<double>(), 1.0 + 1e-9);
  }
  double total = 0.0;
  for (double v : rep.at("pi")) total += v;
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(Cli, VerifyAndNegativeControl) {
  const auto d = fresh("verify");
  const auto ok = run("verify --out " + d.string());
  EXPECT_EQ(ok.status, 0) << ok.out;
  const auto arr = nlohmann::json::parse(agfn::read_file(d / "verify.json"));
  EXPECT_GE(arr.size(), 10u);
  const auto bad = run("verify --inject-perturbation");
  EXPECT_NE(bad.status, 0);
  EXPECT_NE(bad.out.find("FAIL oracle.balance_suite"), std::string::npos) << bad.out;
}

TEST(Cli, BadInputsFail) {
  const auto d = fresh("bad");
  fs::create_directories(d);
  { std::ofstream(d / "bad.conf") << "env.colour = red\n"; }
  EXPECT_EQ(run("train --config " + (d / "bad.conf").string() + " --out " + d.string()).status, 2);
  EXPECT_EQ(run("train --config " + kTiny + " --override train.lr=-1 --out " + d.string()).status, 2);
  EXPECT_NE(run("train --config /nonexistent.conf").status, 0);
  EXPECT_NE(run("bogus").status, 0);
}

TEST(Cli, ReferenceMatchesShippedFile) {
  const auto r = run("reference");
  ASSERT_EQ(r.status, 0);
  EXPECT_EQ(r.out, agfn::config_reference());
  const auto shipped = lines_of(agfn::read_file(std::string(AGFN_CONFIG_DIR) + "/reference.conf"));
  const auto printed = lines_of(r.out);
  ASSERT_EQ(shipped.size(), printed.size() + 2);
  for (std::size_t i = 0; i < printed.size(); ++i) EXPECT_EQ(shipped[i + 2], printed[i]);
}
