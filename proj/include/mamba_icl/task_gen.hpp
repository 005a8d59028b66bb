// Copyright 2026 The mamba-icl Authors. Apache 2.0 License.
//
// In-context linear regression prompts and Monte-Carlo checks of the
// Gaussian moment identities the closed-form theory relies on.

#ifndef MAMBA_ICL_TASK_GEN_HPP_
#define MAMBA_ICL_TASK_GEN_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "mamba_icl/common.hpp"

namespace mamba_icl {

// One regression task y = w^T x with N labelled context points and a query.
// Column i of `xs` is x_{i+1}; column l of `tokens` is the embedded token fed
// at step l+1, i.e. (x, y) for context points and (x_q, 0) last.
struct PromptInstance {
  Vec w;
  Mat xs;
  Vec ys;
  Vec x_q;
  double y_q = 0.0;
  Mat tokens;

  int d() const { return static_cast<int>(w.size()); }
  int n() const { return static_cast<int>(ys.size()); }
};

// Draws w, then x_1..x_N, then x_q, all i.i.d. N(0, I_d).
PromptInstance sample_prompt(int d, int n, Rng& rng);

std::vector<PromptInstance> sample_prompts(int d, int n, int count, Rng& rng);

// Builds a prompt from explicit data; labels are recomputed from w.
PromptInstance make_prompt(const Vec& w, const Mat& xs, const Vec& x_q);

// alpha = exp(-ln 2 / N), the per-token decay under the fixed step size.
double decay_factor(int n);

// Decay-weighted context sums with weight alpha^(N-l+1) on token l:
//   s = sum a_l y_l x_l,  v = sum a_l y_l^2,  y = sum a_l y_l.
struct ContextSums {
  Vec s;
  double v = 0.0;
  double y = 0.0;
};
ContextSums weighted_context_sums(const PromptInstance& prompt, double alpha);

// Geometric sums S1 = sum_{i<N} alpha^(i+1), S2 = sum_{i<N} alpha^(2i+2).
struct GeometricSums {
  double s1 = 0.0;
  double s2 = 0.0;
};
GeometricSums geometric_sums(double alpha, int n);

struct OracleEntry {
  std::string quantity;
  double closed_form = 0.0;
  double estimate = 0.0;
  double std_error = 0.0;
  std::int64_t samples = 0;
  bool pass = false;
  // Reported for comparison only; does not affect OracleReport::passed().
  bool informational = false;
};

struct OracleReport {
  std::string name;
  double k = 4.0;
  std::vector<OracleEntry> entries;

  bool passed() const;
  // Largest |estimate - closed_form| / std_error over gating entries.
  double worst_z() const;
};

// E[y^2] = d, E[y^4] = 3d(d+2), E[x x^T w w^T x x^T] = (d+2) I (entrywise).
OracleReport mc_moment_oracle(int d, std::int64_t samples, Rng& rng,
                              double k = 4.0);

// The nine decay-weighted sequence identities. The fourth-moment identity
// E[v^2] is checked against (d^2+2d) S1^2 + (2d^2+4d) S2; the commonly quoted
// d^2 S1^2 + (2d^2+6d) S2 drops the correlation of y_i^2, y_j^2 through w and
// is attached as an informational entry.
OracleReport mc_sequence_oracle(int d, int n, std::int64_t samples, Rng& rng,
                                double k = 4.0);

// Closed form of E[(sum a_l y_l^2)^2] including the shared-w correlation.
double weighted_fourth_moment(int d, int n);
// The same quantity with E[y_i^2 y_j^2] taken as d^2 for i != j.
double weighted_fourth_moment_uncorrelated(int d, int n);

}  // namespace mamba_icl

#endif  // MAMBA_ICL_TASK_GEN_HPP_
