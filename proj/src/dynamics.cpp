// Copyright 2026 The mamba-icl Authors. Apache 2.0 License.

#include "mamba_icl/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <fmt/format.h>
#include <fmt/os.h>

namespace mamba_icl {

namespace {

Mat zero_diagonal(Mat m) {
  m.diagonal().setZero();
  return m;
}

double max_abs(const Mat& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }
double max_abs(const Vec& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace

InnerProductState inner_products(const MambaParams& params, long t) {
  params.validate();
  const Mat B = params.B();
  const Mat C = params.C();
  const Vec b = params.b();
  const Mat btb = B.transpose() * B;
  const Mat ctc = C.transpose() * C;
  const Mat ctb = C.transpose() * B;
  InnerProductState s;
  s.t = t;
  s.bb_diag = btb.diagonal();
  s.cc_diag = ctc.diagonal();
  s.bnorm = b.squaredNorm();
  s.cb_diag = ctb.diagonal();
  s.cb_off = zero_diagonal(ctb);
  s.cb_bias = C.transpose() * b;
  s.bb_off = zero_diagonal(btb);
  s.cc_off = zero_diagonal(ctc);
  s.bbias_cross = B.transpose() * b;
  return s;
}

DeltaTracker::DeltaTracker(const TheoryConstants& consts)
    : value_(2.0 * std::sqrt(consts.d_h * consts.log_term)) {}

double DeltaTracker::update(const InnerProductState& state) {
  value_ = std::max({value_, max_abs(state.bb_off), max_abs(state.cc_off),
                     max_abs(state.bbias_cross)});
  return value_;
}

PropertyReport check_properties(const InnerProductState& state,
                                const TheoryConstants& consts, double eta,
                                DeltaTracker& tracker) {
  PropertyReport r;
  r.t = state.t;
  r.gamma = consts.gamma;
  r.delta_max = consts.delta_max;
  r.delta_t = tracker.update(state);

  const double lo = consts.d_h / 2.0;
  const double hi = 2.0 * consts.d_h;
  double a = std::numeric_limits<double>::infinity();
  auto sandwich = [&](double x) { a = std::min({a, x - lo, hi - x}); };
  for (Eigen::Index i = 0; i < state.bb_diag.size(); ++i) sandwich(state.bb_diag[i]);
  for (Eigen::Index i = 0; i < state.cc_diag.size(); ++i) sandwich(state.cc_diag[i]);
  sandwich(state.bnorm);
  r.margin_A = a;

  const double t = static_cast<double>(state.t);
  const double decay1 = std::exp(-eta * consts.beta1 * consts.gamma * t);
  const double decay2 = std::exp(-eta * consts.beta2 * consts.gamma * t);
  const double diag_res =
      (Vec::Constant(state.cb_diag.size(), consts.beta3) -
       consts.beta1 * state.cb_diag).cwiseAbs().maxCoeff();
  r.margin_B_diag = r.delta_t * decay1 - diag_res;
  r.margin_B_off = 2.0 * r.delta_t * decay1 - max_abs(state.cb_off);
  r.margin_B_bias = 2.0 * r.delta_t * decay2 +
                    r.delta_t / consts.beta2 * decay1 - max_abs(state.cb_bias);
  r.margin_B = std::min({r.margin_B_diag, r.margin_B_off, r.margin_B_bias});

  r.margin_C = consts.delta_max - r.delta_t;

  r.holds_A = r.margin_A >= 0;
  r.holds_B = r.margin_B >= 0;
  r.holds_C = r.margin_C >= 0;
  return r;
}

AssumptionReport check_assumptions(int d, int n, int d_h, double eta,
                                   double confidence) {
  const TheoryConstants k = constants(d, n, d_h, confidence);
  const double L = k.log_term;
  const double b1 = k.beta1, b2 = k.beta2, b3 = k.beta3;
  const double dd = d;
  const double ln2 = std::log(2.0);
  auto sq = [](double x) { return x * x; };

  AssumptionReport r;
  auto& l = r.lambda;
  l[0] = (1728 * L + 576 * (dd - 1) * b1 * L) / b1;
  l[1] = (576 * L + 192 * L) / b1;
  l[2] = (1728 * L + (576 * dd + 1872) * b1 * L) / b1;
  l[3] = 576 * L / b1 + 192 * (dd - 1) * L + 384 * L / b1 + 3840 * ln2 * L;
  l[4] = 2448 * dd * L;
  l[5] = 816 * dd * L + 768 * ln2 * dd * dd * L + 48 * L / b1;
  l[6] = sq(1 / std::sqrt(L) +
            24 * std::sqrt(L) * (8 * b1 * (dd - 1) + 10 + 6 * b1 + 12 * eta * b1 / dd));
  l[7] = 36 * L * sq(8 / b1 + 8 * (dd - 2) + 6 + 12 / dd);
  l[8] = 36 * L * sq(4 * (dd - 1) + 56 * dd * ln2);
  l[9] = 36 * L * sq(6 + 4 * b1 * (dd - 1) + 2 * (dd - 1));
  l[10] = 36 / sq(std::log(1.5)) * L *
          sq(32 * dd / b1 + 8 * b3 / b1 + 32 * dd + 8 / b1 + 4 / (b1 * b2) + 80 * ln2);

  r.lambda_max = *std::max_element(l.begin(), l.end());
  r.d_h = d_h;
  r.margin_dh = d_h - r.lambda_max;
  r.dh_ok = r.margin_dh >= 0;

  r.n_min = std::max(2 * ln2 / (std::log(6.0) - std::log(5.0)),
                     3 * (dd + 1) * ln2 / 2);
  r.margin_n = n - r.n_min;
  r.n_ok = r.margin_n >= 0;

  r.eta_max = 1.0 / (2.0 * dd * dd * d_h);
  r.margin_eta = r.eta_max - eta;
  r.eta_ok = eta > 0 && r.margin_eta >= 0;
  r.eta_max_beta2 = ln2 / (b2 * d_h);
  r.eta_beta2_ok = eta <= r.eta_max_beta2;
  r.beta_order_ok = 4 * b1 <= b2;
  r.satisfied = r.dh_ok && r.n_ok && r.eta_ok && r.eta_beta2_ok;
  return r;
}

RateFit fit_decay_rate(const std::vector<double>& t,
                       const std::vector<double>& residual, double predicted,
                       double lo, double hi) {
  if (t.size() != residual.size())
    throw DimensionError("fit_decay_rate: series lengths differ");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int m = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double r = residual[i];
    if (!(r >= lo && r <= hi)) continue;
    const double y = std::log(r);
    sx += t[i];
    sy += y;
    sxx += t[i] * t[i];
    sxy += t[i] * y;
    ++m;
  }
  if (m < 3)
    throw UsageError(fmt::format(
        "residual never enters the fit window [{:g}, {:g}] ({} points)", lo,
        hi, m));
  const double denom = m * sxx - sx * sx;
  if (denom <= 0) throw UsageError("fit window has a single time point");
  const double slope = (m * sxy - sx * sy) / denom;
  RateFit fit;
  fit.fitted = -slope;
  fit.predicted = predicted;
  fit.ratio = predicted > 0 ? fit.fitted / predicted : 0.0;
  fit.points = m;
  return fit;
}

RateFit fit_convergence_rate(const DynamicsTrace& trace, double lo, double hi) {
  if (trace.records.size() < 50)
    throw UsageError(fmt::format("rate fit needs >= 50 records, got {}",
                                 trace.records.size()));
  std::vector<double> t, res;
  t.reserve(trace.records.size());
  res.reserve(trace.records.size());
  for (const auto& rec : trace.records) {
    t.push_back(static_cast<double>(rec.t));
    res.push_back(rec.diag_residual);
  }
  const double predicted =
      trace.eta * trace.consts.beta1 * trace.consts.gamma;
  return fit_decay_rate(t, res, predicted, lo, hi);
}

void write_trace_csv(const DynamicsTrace& trace, const std::string& path) {
  auto out = fmt::output_file(path);
  out.print(
      "t,loss,bb_diag_min,bb_diag_max,cc_diag_min,cc_diag_max,bnorm,"
      "cb_diag_min,cb_diag_max,cb_off_maxabs,cb_bias_maxabs,bb_off_maxabs,"
      "cc_off_maxabs,bbias_cross_maxabs,diag_residual,product_residual,"
      "bias_residual,delta_t,margin_A,margin_B,margin_C\n");
  for (const auto& r : trace.records) {
    const auto& s = r.state;
    out.print(
        "{},{:.6g},{:.6g},{:.6g},{:.6g},{:.6g},{:.6g},{:.6g},{:.6g},{:.6g},"
        "{:.6g},{:.6g},{:.6g},{:.6g},{:.6g},{:.6g},{:.6g},{:.6g},{:.6g},"
        "{:.6g},{:.6g}\n",
        r.t, r.loss, s.bb_diag.minCoeff(), s.bb_diag.maxCoeff(),
        s.cc_diag.minCoeff(), s.cc_diag.maxCoeff(), s.bnorm,
        s.cb_diag.minCoeff(), s.cb_diag.maxCoeff(), max_abs(s.cb_off),
        max_abs(s.cb_bias), max_abs(s.bb_off), max_abs(s.cc_off),
        max_abs(s.bbias_cross), r.diag_residual, r.product_residual,
        r.bias_residual, r.props.delta_t, r.props.margin_A, r.props.margin_B,
        r.props.margin_C);
  }
}

}  // namespace mamba_icl
