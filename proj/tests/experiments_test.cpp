// Configuration, experiment suites, writers, manifest and CLI exit codes.

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "json.hpp"
#include "mamba_icl/experiments.hpp"
#include "mamba_icl/theory.hpp"

using namespace mamba_icl;
namespace fs = std::filesystem;

namespace {

std::string scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mamba_icl_exp_" + name);
  fs::remove_all(p);
  return p.string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines_of(const std::string& path) {
  std::ifstream in(path);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  for (std::string cell; std::getline(ss, cell, ',');) out.push_back(cell);
  return out;
}

// Numbers written to CSV carry at most six significant digits.
bool six_significant(const std::string& cell) {
  static const std::regex num(R"(-?(\d+)(\.(\d+))?(e[+-]\d+)?)");
  std::smatch m;
  if (!std::regex_match(cell, m, num)) return true;  // labels
  std::string digits = m[1].str() + m[3].str();
  const auto first = digits.find_first_not_of('0');
  if (first == std::string::npos) return true;
  digits = digits.substr(first);
  while (!digits.empty() && digits.back() == '0') digits.pop_back();
  return digits.size() <= 6;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(MAMBA_ICL_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

ExperimentConfig small_figure_config(const std::string& out) {
  ExperimentConfig c;
  c.out = out;
  c.trials = 2;
  c.sweep_n_min = 10;
  c.sweep_n_max = 30;
  c.sweep_n_step = 10;
  c.test_prompts = 500;
  return c;
}

}  // namespace

TEST(Config, SettingsAndAliases) {
  ExperimentConfig c;
  apply_setting(c, "seed", "42");
  apply_setting(c, "d", "6");
  apply_setting(c, "train-prompts", "123");
  apply_setting(c, "mode", "empirical");
  apply_setting(c, "train_wdelta", "true");
  apply_setting(c, "eta", "0.5");
  EXPECT_EQ(c.seed, 42u);
  EXPECT_EQ(c.d, 6);
  EXPECT_EQ(c.train_prompts, 123);
  EXPECT_EQ(c.mode, TrainMode::empirical);
  EXPECT_TRUE(c.train_wdelta);
  EXPECT_DOUBLE_EQ(c.eta, 0.5);
  EXPECT_EQ(c.snapshot().at("d"), "6");
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  ExperimentConfig c;
  EXPECT_THROW(apply_setting(c, "learning_speed", "1"), ConfigError);
  EXPECT_THROW(apply_setting(c, "d", "four"), ConfigError);
  EXPECT_THROW(apply_setting(c, "mode", "both"), ConfigError);
  EXPECT_THROW(apply_setting(c, "init", "uniform"), ConfigError);
}

TEST(Config, IniFileWithSections) {
  const std::string dir = scratch_dir("ini");
  fs::create_directories(dir);
  const std::string path = dir + "/run.ini";
  std::ofstream(path) << "seed = 7\n[model]\nd = 3\ndh = 12\n[run]\ntrials = 4\n";
  const ExperimentConfig c = load_config(path);
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.d, 3);
  EXPECT_EQ(c.dh, 12);
  EXPECT_EQ(c.trials, 4);
  std::ofstream(path) << "[model]\nwidth = 3\n";
  EXPECT_THROW(load_config(path), ConfigError);
  EXPECT_THROW(load_config(dir + "/missing.ini"), ConfigError);
}

TEST(Config, TrainConfigDefaults) {
  ExperimentConfig c;
  TrainConfig pop = train_config_for(c, 4, 50, 80, 3);
  EXPECT_EQ(pop.init, InitKind::gaussian);
  EXPECT_DOUBLE_EQ(pop.learning_rate(), default_learning_rate(4, 80));
  c.mode = TrainMode::empirical;
  TrainConfig emp = train_config_for(c, 4, 50, 80, 3);
  EXPECT_EQ(emp.init, InitKind::orthogonal);
  EXPECT_DOUBLE_EQ(emp.learning_rate(), c.empirical_eta);
  EXPECT_EQ(emp.steps, c.epochs);
  c.eta = 0.01;
  c.init = "gaussian";
  emp = train_config_for(c, 4, 50, 80, 3);
  EXPECT_DOUBLE_EQ(emp.learning_rate(), 0.01);
  EXPECT_EQ(emp.init, InitKind::gaussian);
}

TEST(Hash, KnownDigest) {
  const std::string dir = scratch_dir("hash");
  fs::create_directories(dir);
  std::ofstream(dir + "/abc.txt", std::ios::binary) << "abc";
  EXPECT_EQ(sha256_file(dir + "/abc.txt"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Verification, DefaultSuitePasses) {
  ExperimentConfig c;
  c.out = scratch_dir("verify");
  const VerificationReport r = run_verification_suite(c);
  EXPECT_TRUE(r.passed());
  for (const auto& check : r.checks)
    if (check.gating) EXPECT_TRUE(check.pass) << check.name << " " << check.detail;
  const std::string path = write_verification(c, r);
  const auto doc = nlohmann::json::parse(slurp(path));
  EXPECT_TRUE(doc.contains("checks"));
}

TEST(Verification, PerturbedFirstConstantIsCaught) {
  ExperimentConfig c;
  c.beta1_fault = 1.01;
  c.oracle_samples = 20000;
  const VerificationReport r = run_verification_suite(c);
  EXPECT_FALSE(r.passed());
  bool found = false;
  for (const auto& check : r.checks)
    if (check.name == "beta_identity_grid") {
      found = true;
      EXPECT_FALSE(check.pass);
    }
  EXPECT_TRUE(found);
}

TEST(Verification, AssumptionShortfallIsInformational) {
  ExperimentConfig c;
  c.confidence = 0.5;
  c.dh = 20;
  c.oracle_samples = 20000;
  const VerificationReport r = run_verification_suite(c);
  bool found = false;
  for (const auto& check : r.checks)
    if (check.name == "assumption_report") {
      found = true;
      EXPECT_FALSE(check.gating);
      EXPECT_FALSE(check.pass);
    }
  EXPECT_TRUE(found);
  EXPECT_TRUE(r.passed());
}

TEST(Figures, SmallRunMeetsTargetsAndWritesCsv) {
  const ExperimentConfig c = small_figure_config(scratch_dir("fig_a"));
  const FigureResults res = compute_figures(c);

  const Mat& h = res.heatmap_after;
  ASSERT_EQ(h.rows(), 4);
  ASSERT_EQ(h.cols(), 5);
  const double diag_mean = h.leftCols(4).diagonal().mean();
  double off = 0;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 5; ++j)
      if (i != j) off = std::max(off, std::abs(h(i, j)));
  EXPECT_LE(off, 0.05 * diag_mean);

  ASSERT_EQ(res.cosine.mean.size(), 50u);
  EXPECT_GT(res.cosine.mean.back(), 0.9);

  ASSERT_EQ(res.loss_vs_n.size(), 3u);
  for (const auto& r : res.loss_vs_n) {
    EXPECT_EQ(r.diverged, 0);
    EXPECT_LE(r.mean_loss, r.bound + 2 * r.se) << r.n;
    EXPECT_NEAR(r.theoretical, theoretical_loss(4, r.n).loss, 1e-12);
  }

  const auto files = write_figures(c, res);
  ASSERT_EQ(files.size(), 3u);
  EXPECT_EQ(lines_of(c.out + "/loss_vs_n.csv")[0], "N,mean_loss,std_loss,bound,theoretical_loss");
  EXPECT_EQ(lines_of(c.out + "/cosine_trace.csv")[0], "l,mean_cosine,se");
  EXPECT_EQ(lines_of(c.out + "/heatmap.csv")[0], "stage,row,col1,col2,col3,col4,col5");
  EXPECT_EQ(lines_of(c.out + "/heatmap.csv").size(), 9u);
  for (const auto& f : files)
    for (const auto& line : lines_of(f))
      for (const auto& cell : split(line)) EXPECT_TRUE(six_significant(cell)) << f << ": " << cell;

  const std::string manifest = write_manifest(c, "figures", files, "start", "end");
  const auto doc = nlohmann::json::parse(slurp(manifest));
  EXPECT_EQ(doc["command"], "figures");
  EXPECT_EQ(doc["artifact_version"], kArtifactVersion);
  EXPECT_EQ(doc["config"]["trials"], "2");
  ASSERT_EQ(doc["outputs"].size(), 3u);
  for (const auto& o : doc["outputs"])
    EXPECT_EQ(o["sha256"].get<std::string>(),
              sha256_file(c.out + "/" + o["path"].get<std::string>()));
}

TEST(Figures, SameSeedSameBytes) {
  ExperimentConfig a = small_figure_config(scratch_dir("fig_b1"));
  ExperimentConfig b = small_figure_config(scratch_dir("fig_b2"));
  a.sweep_n_max = b.sweep_n_max = 20;
  const auto fa = write_figures(a, compute_figures(a));
  const auto fb = write_figures(b, compute_figures(b));
  ASSERT_EQ(fa.size(), fb.size());
  for (std::size_t i = 0; i < fa.size(); ++i) EXPECT_EQ(sha256_file(fa[i]), sha256_file(fb[i]));
}

TEST(Figures, BadSweepRejected) {
  ExperimentConfig c = small_figure_config(scratch_dir("fig_bad"));
  c.sweep_n_step = 0;
  EXPECT_THROW(compute_figures(c), ConfigError);
}

TEST(Tables, ReducedRunMatchesTheory) {
  ExperimentConfig c;
  c.out = scratch_dir("tables");
  c.trials = 2;
  c.train_prompts = 300;
  c.t3_epochs = 3;
  const TableResults res = compute_tables(c);

  ASSERT_EQ(res.t1.size(), 8u);
  EXPECT_NEAR(res.t1[3][1], 1.1117, 5e-5);
  EXPECT_NEAR(res.t1[3][2], 1.0784, 5e-5);

  ASSERT_EQ(res.t2.size(), 9u);
  for (const auto& r : res.t2) {
    EXPECT_NEAR(r.theoretical, theoretical_loss(20, r.n).loss, 1e-12);
    EXPECT_LE(std::abs(r.mean_loss - r.theoretical), 4 * r.se) << r.n;
  }
  EXPECT_EQ(res.t3.size(), 4u);
  ASSERT_EQ(res.t4.size(), 8u);
  EXPECT_EQ(res.t4.front().n, 6);
  EXPECT_EQ(res.t4.back().n, 20);

  const auto files = write_tables(c, res);
  ASSERT_EQ(files.size(), 4u);
  EXPECT_EQ(lines_of(files[0])[0], "N,mamba_theoretical_loss,linear_attention_optimal_loss");
  EXPECT_EQ(lines_of(files[1])[0], "N,experimental_loss,experimental_std,theoretical_loss");
  EXPECT_EQ(lines_of(files[2])[0], "epoch,wdelta_norm,wdelta_norm_sq");
  EXPECT_EQ(lines_of(files[3])[0], "d_h,mean_loss,std_loss,theoretical_loss");
  EXPECT_EQ(lines_of(files[0])[4], "40,1.11172,1.07843");
}

TEST(Cli, ExitCodes) {
  const std::string out = scratch_dir("cli");
  EXPECT_EQ(run_cli("check-assumptions --out " + out), kExitOk);
  EXPECT_TRUE(fs::exists(out + "/assumptions.json"));
  EXPECT_TRUE(fs::exists(out + "/manifest.json"));
  EXPECT_EQ(run_cli("check-grad --d 2 --dh 6 --n 5 --out " + out), kExitOk);
  EXPECT_EQ(run_cli("train --set no_such_key=1 --out " + out), kExitConfig);
  EXPECT_EQ(run_cli("train --d 0 --out " + out), kExitConfig);
  EXPECT_EQ(run_cli("bogus-command"), kExitConfig);
  EXPECT_EQ(run_cli("verify --set beta1_fault=1.01 --set oracle_samples=20000 --out " + out),
            kExitVerification);
  EXPECT_EQ(run_cli("train --eta 1.0 --out " + out), kExitDivergence);
}

TEST(Cli, TrainWritesCheckpoint) {
  const std::string out = scratch_dir("cli_train");
  EXPECT_EQ(run_cli("train --d 3 --n 20 --dh 24 --seed 5 --out " + out), kExitOk);
  EXPECT_TRUE(fs::exists(out + "/trace.csv"));
  EXPECT_TRUE(fs::exists(out + "/checkpoint.txt"));
  std::uint64_t seed = 0;
  const MambaParams p = load_checkpoint(out + "/checkpoint.txt", &seed);
  EXPECT_EQ(seed, 5u);
  EXPECT_EQ(p.d_h, 24);
}
