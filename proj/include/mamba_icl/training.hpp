// Copyright 2026 The mamba-icl Authors. Apache 2.0 License.
//
// Population (closed-form) and empirical (backprop through the scan)
// gradient descent for the layer, finite-difference checks and checkpoints.

#ifndef MAMBA_ICL_TRAINING_HPP_
#define MAMBA_ICL_TRAINING_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mamba_icl/common.hpp"
#include "mamba_icl/dynamics.hpp"
#include "mamba_icl/mamba_ssm.hpp"
#include "mamba_icl/task_gen.hpp"
#include "mamba_icl/theory.hpp"

namespace mamba_icl {

enum class InitKind { gaussian, orthogonal };
enum class TrainMode { population, empirical };

struct TrainConfig {
  int d = 4;
  int n = 50;
  int d_h = 80;
  std::optional<double> eta;  // unset selects default_learning_rate(d, d_h)
  long steps = 1000000;    // iterations (population) or epochs (empirical)
  InitKind init = InitKind::gaussian;
  TrainMode mode = TrainMode::population;
  int batch_size = 0;      // empirical; 0 = full batch
  bool train_wdelta = false;
  bool train_bdelta = true;  // with train_wdelta; false keeps b_delta fixed
  double wdelta_init_std = 0.4;
  std::uint64_t seed = 0;
  int record_every = 1;    // population trace stride
  double tol = 1e-6;       // population early stop on the product residual
  double confidence = 0.05;

  double learning_rate() const;
};

// 1 / (2 d^2 d_h).
double default_learning_rate(int d, int d_h);

MambaParams init_params(const TrainConfig& config, Rng& rng);

// Gradients of the population loss; the bias-column gradient of W_C and the
// bias gradients are identically zero and reported for completeness.
struct PopulationGrads {
  Mat B, C;
  Vec b, c;
  Vec b_b, b_c;
};

// Requires b_B = b_C = 0 (UsageError otherwise).
PopulationGrads population_gradients(const MambaParams& params,
                                     const TheoryConstants& consts);

// 0.5 (beta1 ||C^T B||_F^2 + beta2 ||C^T b||^2 - 2 beta3 tr(C^T B) + d).
double population_loss(const MambaParams& params,
                       const TheoryConstants& consts);

void population_step(MambaParams& params, const TheoryConstants& consts,
                     double eta);

DynamicsRecord make_record(const MambaParams& params,
                           const TheoryConstants& consts, double eta, long t,
                           DeltaTracker& tracker);

struct PopulationResult {
  MambaParams params;
  DynamicsTrace trace;
  bool converged = false;
  long iterations = 0;
};

// Throws DivergenceError if an inner product exceeds 10 d_h.
PopulationResult train_population(const TrainConfig& config);
PopulationResult train_population(const TrainConfig& config,
                                  MambaParams start);

struct EmpiricalGrads {
  Mat w_b, w_c;
  Vec b_b, b_c;
  Vec w_delta;
  double b_delta = 0.0;
  bool has_delta = false;
  double loss = 0.0;
};

// Exact gradients of empirical_loss over `batch`.
EmpiricalGrads empirical_gradients(const MambaParams& params,
                                   const std::vector<PromptInstance>& batch,
                                   bool with_delta);

void apply_gradients(MambaParams& params, const EmpiricalGrads& grads,
                     double eta);

struct EmpiricalResult {
  MambaParams params;
  std::vector<double> loss_curve;    // epoch 0 = before training
  std::vector<double> wdelta_norms;  // filled when train_wdelta is set
};

// Throws DivergenceError on a non-finite loss.
EmpiricalResult train_empirical(const TrainConfig& config,
                                const std::vector<PromptInstance>& prompts);
EmpiricalResult train_empirical(const TrainConfig& config,
                                const std::vector<PromptInstance>& prompts,
                                MambaParams start);

struct BlockError {
  std::string name;
  double max_rel_error = 0.0;
  int checked = 0;
};

struct GradReport {
  double eps = 0.0;
  double threshold = 1e-4;
  std::vector<BlockError> blocks;
  bool pass = false;
};

// Central differences on up to `max_coords` coordinates per block chosen by
// a seeded shuffle. Requires eps in [1e-7, 1e-3].
GradReport gradient_check(const MambaParams& params,
                          const std::vector<PromptInstance>& batch, double eps,
                          bool with_delta, double threshold = 1e-4,
                          int max_coords = 2000, std::uint64_t seed = 0);

void save_checkpoint(const std::string& path, const MambaParams& params,
                     std::uint64_t seed);
MambaParams load_checkpoint(const std::string& path,
                            std::uint64_t* seed = nullptr);

}  // namespace mamba_icl

#endif  // MAMBA_ICL_TRAINING_HPP_
