// Copyright 2026 The mamba-icl Authors. Apache 2.0 License.
//
// Closed-form quantities of the trained layer: loss constants, converged
// predictor, loss and bound, baselines, and orthogonal-init scalar dynamics.

#ifndef MAMBA_ICL_THEORY_HPP_
#define MAMBA_ICL_THEORY_HPP_

#include <vector>

#include "mamba_icl/common.hpp"
#include "mamba_icl/mamba_ssm.hpp"
#include "mamba_icl/task_gen.hpp"

namespace mamba_icl {

struct TheoryConstants {
  int d = 0;
  int n = 0;
  int d_h = 0;
  double confidence = 0.05;
  double alpha = 0.0;
  double beta1 = 0.0;  // weight of ||C^T B||_F^2 in the population loss
  double beta2 = 0.0;  // weight of ||C^T b||^2, with the shared-w correlation
  double beta2_published = 0.0;  // same, with y_i^2, y_j^2 taken uncorrelated
  double beta3 = 0.0;  // weight of tr(C^T B)
  double beta = 0.0;
  double gamma = 0.0;
  double log_term = 0.0;  // log(4d(2d+1)/delta)
  double delta_max = 0.0;

  double fixed_point() const { return beta3 / beta1; }
};

// Throws ConfigError unless d >= 2, N >= 1, d_h >= 1, 0 < confidence < 1.
TheoryConstants constants(int d, int n, int d_h = 1, double confidence = 0.05);

struct TheoreticalLoss {
  double loss = 0.0;
  double bound = 0.0;
};
TheoreticalLoss theoretical_loss(int d, int n);

// x_q^T sum_i (1-alpha) alpha^(i+1) beta y_{N-i} x_{N-i}.
double converged_predict(const PromptInstance& prompt);

// alpha h + (1 - alpha) beta y x.
Vec projected_state_update(const Vec& h_tilde, const Vec& x, double y,
                           const TheoryConstants& consts);

// d(d+1) / (2(N+d+1)): loss of c x_q^T sum y_i x_i at the best scalar c.
double linear_attention_optimal_loss(int d, int n);

// Static (input-independent) S4 read-out on the label channel.
struct S4Params {
  Vec b;
  Vec c;
  Vec a_diag;
  double delta = 0.0;
};
// k_m = c^T Abar^m Bbar for m = 0..length-1.
Vec s4_coefficients(const S4Params& s4, int length);
// Output at the query step: sum_j k_{N+1-j} u_j^{(d+1)}.
double s4_static_predict(const S4Params& s4, const PromptInstance& prompt);

enum class OrthoRecursion {
  published,     // h' = h + eta g r + eta^2 h r^2
  matrix_exact,  // h' = h + 2 eta g r + eta^2 h r^2, from C^T B expanded
};

struct OrthoDynamicsTrace {
  std::vector<double> g;
  std::vector<double> h;
  double target = 0.0;       // beta3 / beta1
  long converged_at = -1;    // first t with |beta3 - beta1 h(t)| < 1e-8
  bool diverged = false;     // |h| exceeded 10 beta3 / beta1
  long diverged_at = -1;
};

// Runs T steps from g = 1, h = 0 (or until divergence).
OrthoDynamicsTrace ortho_dynamics(int d, int n, double eta, long steps,
                                  OrthoRecursion kind = OrthoRecursion::published);

// A realization of the converged layer: C with orthonormal columns scaled
// by sqrt(d_h/2), B = beta C (C^T C)^{-1}, b orthogonal to C, zero biases.
// Needs d_h >= d + 2.
MambaParams converged_params(int d, int d_h, int n, Rng& rng);

}  // namespace mamba_icl

#endif  // MAMBA_ICL_THEORY_HPP_
