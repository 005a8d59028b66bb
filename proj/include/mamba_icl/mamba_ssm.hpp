// Copyright 2026 The mamba-icl Authors. Apache 2.0 License.
//
// Single-layer selective state-space (S6) layer with diagonal A and
// zero-order-hold discretization, plus its squared ICL loss.

#ifndef MAMBA_ICL_MAMBA_SSM_HPP_
#define MAMBA_ICL_MAMBA_SSM_HPP_

#include <vector>

#include "mamba_icl/common.hpp"
#include "mamba_icl/task_gen.hpp"

namespace mamba_icl {

struct MambaParams {
  int d = 0;
  int d_h = 0;
  int n = 0;
  Mat w_b;       // d_h x (d+1)
  Mat w_c;       // d_h x (d+1)
  Vec b_b;       // d_h
  Vec b_c;       // d_h
  Vec w_delta;   // d+1
  double b_delta = 0.0;
  Vec a_diag;    // diagonal of A, d_h

  // Column views: W_B = [B b], W_C = [C c].
  auto B() { return w_b.leftCols(d); }
  auto B() const { return w_b.leftCols(d); }
  auto b() { return w_b.col(d); }
  auto b() const { return w_b.col(d); }
  auto C() { return w_c.leftCols(d); }
  auto C() const { return w_c.leftCols(d); }
  auto c() { return w_c.col(d); }
  auto c() const { return w_c.col(d); }

  // Throws DimensionError if any block disagrees with (d, d_h).
  void validate() const;
};

// b_delta giving softplus(b_delta) = ln2 / N.
double default_delta_bias(int n);

// A = -I, w_delta = 0, b_delta = default_delta_bias(N), zero W and biases.
MambaParams assumption_defaults(int d, int d_h, int n);

// assumption_defaults with W_B, W_C drawn entrywise N(0, 1).
MambaParams gaussian_init(int d, int d_h, int n, Rng& rng);

// assumption_defaults with the columns of B, b, C, c mutually orthonormal,
// so B^T B = C^T C = I and C^T B = B^T b = C^T b = 0. Needs d_h >= 2d + 2.
MambaParams orthogonal_init(int d, int d_h, int n, Rng& rng);

// Overflow-safe log(1 + e^x); returns x above 30.
double softplus(double x);
double sigmoid(double x);

struct Discretized {
  Vec a_bar;    // diagonal of exp(delta A)
  Vec b_bar;    // d_h
  Vec c_l;      // d_h
  double delta = 0.0;
};

Discretized selection_discretize(const MambaParams& params, const Vec& u);

// Reference path: forms exp(delta A) and (delta A)^{-1}(exp(delta A) - I)
// as dense matrices through Eigen's matrix exponential.
Discretized selection_discretize_reference(const MambaParams& params,
                                           const Vec& u);

// h is d_h x (d+1), one column per channel. Updates h in place and returns
// o with o[i] = C_l^T h'^{(i)}.
Vec scan_step(Mat& h, const Discretized& disc, const Vec& u);

struct ForwardTrace {
  std::vector<Mat> hidden;  // hidden[l], l = 0..N+1; hidden[0] is zero
  std::vector<Vec> outputs; // outputs[l-1] = o_l
  std::vector<double> deltas;
  double prediction = 0.0;
};

ForwardTrace forward_predict(const MambaParams& params,
                             const PromptInstance& prompt,
                             bool keep_trace = false);

// Prediction only, scanning the label channel alone.
double predict(const MambaParams& params, const PromptInstance& prompt);

// Label-channel hidden states h_l^{(d+1)} for l = 1..N+1 (columns).
Mat label_channel_states(const MambaParams& params,
                         const PromptInstance& prompt);

// Mean of 0.5 (y_hat - y_q)^2; throws UsageError on an empty batch.
double empirical_loss(const MambaParams& params,
                      const std::vector<PromptInstance>& prompts);

}  // namespace mamba_icl

#endif  // MAMBA_ICL_MAMBA_SSM_HPP_
