// Copyright 2026 The mamba-icl Authors. Apache 2.0 License.
//
// Experiment harness: configuration, figure/table/verification suites,
// CSV / JSON writers and the run manifest.

#ifndef MAMBA_ICL_EXPERIMENTS_HPP_
#define MAMBA_ICL_EXPERIMENTS_HPP_

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mamba_icl/common.hpp"
#include "mamba_icl/training.hpp"

namespace mamba_icl {

inline constexpr const char* kArtifactVersion = "mamba-icl 1.0.0";

enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 1,
  kExitVerification = 2,
  kExitDivergence = 3,
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string out = "out";
  int d = 4;
  int n = 50;
  int dh = 80;
  double eta = 0.0;              // 0 = mode default
  int trials = 10;
  TrainMode mode = TrainMode::population;
  std::string init = "auto";     // auto | gaussian | orthogonal
  bool train_wdelta = false;
  int train_prompts = 3000;
  int test_prompts = 1000;
  int batch_size = 30;
  long epochs = 40;
  long max_steps = 1000000;
  double tol = 1e-6;
  int record_every = 100;        // population trace stride
  double confidence = 0.05;
  double empirical_eta = 0.003;  // default step when mode = empirical
  // Loss-vs-N sweep.
  int sweep_n_min = 4;
  int sweep_n_max = 80;
  int sweep_n_step = 4;
  // Tables.
  int t2_dh = 80;
  double t3_eta = 0.003;
  long t3_epochs = 40;
  int t4_n = 30;
  // Verification.
  std::int64_t oracle_samples = 200000;
  double oracle_k = 4.0;
  double beta1_fault = 1.0;      // multiplies beta1 in the identity check

  // Every key with its current value, as written to the manifest.
  std::map<std::string, std::string> snapshot() const;
};

// Sets one key; throws ConfigError for unknown keys or unparsable values.
void apply_setting(ExperimentConfig& config, const std::string& key,
                   const std::string& value);

// Reads `key = value` lines grouped under optional [section] headers; the
// section name is ignored for lookup.
ExperimentConfig load_config(const std::string& path);

// The TrainConfig a single run at (d, n, d_h, seed) uses under `config`.
TrainConfig train_config_for(const ExperimentConfig& config, int d, int n,
                             int d_h, std::uint64_t seed);

struct LossEstimate {
  double mean = 0.0;
  double se = 0.0;
};
LossEstimate test_loss(const MambaParams& params, int count, Rng& rng);

// Trains one model per `train_config_for`, using a fresh training set for
// empirical mode. Rethrows DivergenceError.
MambaParams train_model(const ExperimentConfig& config, int d, int n, int d_h,
                        std::uint64_t seed);

// Mean cosine between C^T h_l (label channel) and w for l = 1..N.
struct CosineTrace {
  std::vector<double> mean;
  std::vector<double> se;
};
CosineTrace cosine_trace(const MambaParams& params, int count, Rng& rng);

struct LossRow {
  int n = 0;
  double mean_loss = 0.0;
  double std_loss = 0.0;
  double se = 0.0;   // standard error of mean_loss, pooled over test prompts
  double bound = 0.0;
  double theoretical = 0.0;
  int diverged = 0;
};

struct FigureResults {
  Mat heatmap_before;  // C^T W_B
  Mat heatmap_after;
  CosineTrace cosine;
  std::vector<LossRow> loss_vs_n;
};

FigureResults compute_figures(const ExperimentConfig& config);
// Returns the files written.
std::vector<std::string> write_figures(const ExperimentConfig& config,
                                       const FigureResults& results);

struct TableResults {
  std::vector<std::array<double, 3>> t1;  // N, mamba, linear attention
  std::vector<LossRow> t2;
  std::vector<std::array<double, 3>> t3;  // epoch, ||w||, ||w||^2
  std::vector<LossRow> t4;                // n field holds d_h
};

TableResults compute_tables(const ExperimentConfig& config);
std::vector<std::string> write_tables(const ExperimentConfig& config,
                                      const TableResults& results);

struct CheckResult {
  std::string name;
  bool pass = false;
  bool gating = true;
  std::string detail;  // JSON text
};

struct VerificationReport {
  std::vector<CheckResult> checks;
  bool passed() const;
};

VerificationReport run_verification_suite(const ExperimentConfig& config);
std::string write_verification(const ExperimentConfig& config,
                               const VerificationReport& report);

std::string sha256_file(const std::string& path);

// Writes manifest.json listing `files` with their hashes.
std::string write_manifest(const ExperimentConfig& config,
                           const std::string& command,
                           const std::vector<std::string>& files,
                           const std::string& started,
                           const std::string& finished);

std::string utc_timestamp();

}  // namespace mamba_icl

#endif  // MAMBA_ICL_EXPERIMENTS_HPP_
