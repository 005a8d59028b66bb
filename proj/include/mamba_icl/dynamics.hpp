// Copyright 2026 The mamba-icl Authors. Apache 2.0 License.
//
// Inner-product bookkeeping for B = [b_1..b_d], C = [c_1..c_d] and the bias
// column b during population training, the norm / decay / cross-interaction
// properties, the dimension assumptions and rate fitting.

#ifndef MAMBA_ICL_DYNAMICS_HPP_
#define MAMBA_ICL_DYNAMICS_HPP_

#include <array>
#include <string>
#include <vector>

#include "mamba_icl/common.hpp"
#include "mamba_icl/mamba_ssm.hpp"
#include "mamba_icl/theory.hpp"

namespace mamba_icl {

// Off-diagonal matrices carry zeros on their diagonals.
struct InnerProductState {
  long t = 0;
  Vec bb_diag;      // b_i^T b_i
  Vec cc_diag;      // c_i^T c_i
  double bnorm = 0; // b^T b
  Vec cb_diag;      // c_i^T b_i
  Mat cb_off;       // (i, j) = c_i^T b_j, i != j
  Vec cb_bias;      // c_i^T b
  Mat bb_off;       // b_i^T b_j, i != j
  Mat cc_off;       // c_i^T c_j, i != j
  Vec bbias_cross;  // b_i^T b
};

InnerProductState inner_products(const MambaParams& params, long t = 0);

// Running maximum of 2 sqrt(d_h L), |b_i^T b_j|, |c_i^T c_j|, |b_i^T b| over
// all states fed so far.
class DeltaTracker {
 public:
  explicit DeltaTracker(const TheoryConstants& consts);
  double update(const InnerProductState& state);
  double value() const { return value_; }

 private:
  double value_;
};

struct PropertyReport {
  bool holds_A = false;
  bool holds_B = false;
  bool holds_C = false;
  // Smallest slack (bound minus left side); negative means violated.
  double margin_A = 0;
  double margin_B_diag = 0;  // |beta3 - beta1 c_i^T b_i|
  double margin_B_off = 0;   // |c_i^T b_j|
  double margin_B_bias = 0;  // |c_i^T b|
  double margin_B = 0;
  double margin_C = 0;
  long t = 0;
  double delta_t = 0;
  double gamma = 0;
  double delta_max = 0;
};

// Feeds `state` to `tracker`, then evaluates the three properties at step
// size eta.
PropertyReport check_properties(const InnerProductState& state,
                                const TheoryConstants& consts, double eta,
                                DeltaTracker& tracker);

struct AssumptionReport {
  std::array<double, 11> lambda{};
  double lambda_max = 0;
  double d_h = 0;
  bool dh_ok = false;
  double n_min = 0;
  bool n_ok = false;
  double eta_max = 0;         // 1 / (2 d^2 d_h)
  bool eta_ok = false;
  double eta_max_beta2 = 0;   // ln 2 / (beta2 d_h)
  bool eta_beta2_ok = false;
  bool beta_order_ok = false; // 4 beta1 <= beta2
  double margin_dh = 0;       // d_h - lambda_max
  double margin_n = 0;
  double margin_eta = 0;
  bool satisfied = false;
};

AssumptionReport check_assumptions(int d, int n, int d_h, double eta,
                                   double confidence);

struct DynamicsRecord {
  long t = 0;
  InnerProductState state;
  PropertyReport props;
  double loss = 0;
  double diag_residual = 0;     // max_i |beta3 - beta1 c_i^T b_i|
  double product_residual = 0;  // max |C^T B - (beta3/beta1) I|
  double bias_residual = 0;     // max |C^T b|
};

struct DynamicsTrace {
  TheoryConstants consts;
  double eta = 0;
  std::vector<DynamicsRecord> records;
};

struct RateFit {
  double fitted = 0;
  double predicted = 0;
  double ratio = 0;
  int points = 0;
};

// Least-squares slope of log(diag_residual) against t over records with
// residual in [lo, hi]; predicted rate is eta beta1 gamma.
RateFit fit_convergence_rate(const DynamicsTrace& trace, double lo = 1e-8,
                             double hi = 1e-1);

// Same fit on an arbitrary residual series; `predicted` is passed through.
RateFit fit_decay_rate(const std::vector<double>& t,
                       const std::vector<double>& residual, double predicted,
                       double lo = 1e-8, double hi = 1e-1);

void write_trace_csv(const DynamicsTrace& trace, const std::string& path);

}  // namespace mamba_icl

#endif  // MAMBA_ICL_DYNAMICS_HPP_
