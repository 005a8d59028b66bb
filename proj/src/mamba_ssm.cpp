// Copyright 2026 The mamba-icl Authors. Apache 2.0 License.

#include "mamba_icl/mamba_ssm.hpp"

#include <cmath>

#include <fmt/format.h>
#include <unsupported/Eigen/MatrixFunctions>

namespace mamba_icl {

void MambaParams::validate() const {
  if (d < 1 || d_h < 1 || n < 1)
    throw ConfigError(fmt::format("bad dims d={} d_h={} N={}", d, d_h, n));
  auto check = [&](bool ok, const char* what) {
    if (!ok) throw DimensionError(fmt::format("MambaParams: {} has wrong shape", what));
  };
  check(w_b.rows() == d_h && w_b.cols() == d + 1, "W_B");
  check(w_c.rows() == d_h && w_c.cols() == d + 1, "W_C");
  check(b_b.size() == d_h, "b_B");
  check(b_c.size() == d_h, "b_C");
  check(w_delta.size() == d + 1, "w_delta");
  check(a_diag.size() == d_h, "A");
}

double softplus(double x) {
  if (x > 30.0) return x;
  return std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double default_delta_bias(int n) {
  if (n < 1) throw ConfigError("prompt length N must be >= 1");
  return std::log(std::expm1(std::log(2.0) / n));
}

MambaParams assumption_defaults(int d, int d_h, int n) {
  if (d < 1 || d_h < 1 || n < 1)
    throw ConfigError(fmt::format("bad dims d={} d_h={} N={}", d, d_h, n));
  MambaParams p;
  p.d = d;
  p.d_h = d_h;
  p.n = n;
  p.w_b = Mat::Zero(d_h, d + 1);
  p.w_c = Mat::Zero(d_h, d + 1);
  p.b_b = Vec::Zero(d_h);
  p.b_c = Vec::Zero(d_h);
  p.w_delta = Vec::Zero(d + 1);
  p.b_delta = default_delta_bias(n);
  p.a_diag = Vec::Constant(d_h, -1.0);
  return p;
}

MambaParams gaussian_init(int d, int d_h, int n, Rng& rng) {
  MambaParams p = assumption_defaults(d, d_h, n);
  NormalSampler normal(rng);
  p.w_b = normal.matrix(d_h, d + 1);
  p.w_c = normal.matrix(d_h, d + 1);
  return p;
}

MambaParams orthogonal_init(int d, int d_h, int n, Rng& rng) {
  if (d_h < 2 * d + 2)
    throw ConfigError(fmt::format(
        "orthogonal init needs d_h >= 2d+2 = {}, got {}", 2 * d + 2, d_h));
  MambaParams p = assumption_defaults(d, d_h, n);
  NormalSampler normal(rng);
  const Mat g = normal.matrix(d_h, 2 * d + 2);
  Eigen::HouseholderQR<Mat> qr(g);
  const Mat q = qr.householderQ() * Mat::Identity(d_h, 2 * d + 2);
  p.w_b = q.leftCols(d + 1);
  p.w_c = q.rightCols(d + 1);
  return p;
}

Discretized selection_discretize(const MambaParams& params, const Vec& u) {
  if (u.size() != params.d + 1)
    throw DimensionError(fmt::format("token has length {}, expected {}",
                                     u.size(), params.d + 1));
  Discretized out;
  out.delta = softplus(params.w_delta.dot(u) + params.b_delta);
  const Vec b_l = params.w_b * u + params.b_b;
  out.c_l = params.w_c * u + params.b_c;
  out.a_bar.resize(params.d_h);
  out.b_bar.resize(params.d_h);
  for (int j = 0; j < params.d_h; ++j) {
    const double a = params.a_diag[j];
    if (a == 0.0)
      throw DegenerateParameterError(
          fmt::format("A has a zero diagonal entry at {}", j));
    out.a_bar[j] = std::exp(out.delta * a);
    out.b_bar[j] = std::expm1(out.delta * a) / a * b_l[j];
  }
  return out;
}

Discretized selection_discretize_reference(const MambaParams& params,
                                           const Vec& u) {
  if (u.size() != params.d + 1)
    throw DimensionError("token length mismatch");
  for (int j = 0; j < params.d_h; ++j)
    if (params.a_diag[j] == 0.0)
      throw DegenerateParameterError("A has a zero diagonal entry");
  Discretized out;
  out.delta = softplus(params.w_delta.dot(u) + params.b_delta);
  const Mat da = out.delta * Mat(params.a_diag.asDiagonal());
  const Mat e = da.exp();
  const Mat eye = Mat::Identity(params.d_h, params.d_h);
  const Mat zoh = da.inverse() * (e - eye) * out.delta;
  out.a_bar = e.diagonal();
  out.b_bar = zoh * (params.w_b * u + params.b_b);
  out.c_l = params.w_c * u + params.b_c;
  return out;
}

Vec scan_step(Mat& h, const Discretized& disc, const Vec& u) {
  if (h.rows() != disc.a_bar.size() || h.cols() != u.size())
    throw DimensionError("scan_step: hidden state shape mismatch");
  h = disc.a_bar.asDiagonal() * h;
  h.noalias() += disc.b_bar * u.transpose();
  return h.transpose() * disc.c_l;
}

namespace {

void check_prompt(const MambaParams& params, const PromptInstance& prompt) {
  params.validate();
  if (prompt.d() != params.d)
    throw DimensionError(fmt::format("prompt d={} but params d={}",
                                     prompt.d(), params.d));
  if (prompt.tokens.rows() != params.d + 1 ||
      prompt.tokens.cols() != prompt.n() + 1)
    throw DimensionError("prompt tokens malformed");
}

}  // namespace

ForwardTrace forward_predict(const MambaParams& params,
                             const PromptInstance& prompt, bool keep_trace) {
  check_prompt(params, prompt);
  const int steps = static_cast<int>(prompt.tokens.cols());
  ForwardTrace trace;
  Mat h = Mat::Zero(params.d_h, params.d + 1);
  if (keep_trace) {
    trace.hidden.reserve(steps + 1);
    trace.hidden.push_back(h);
    trace.outputs.reserve(steps);
    trace.deltas.reserve(steps);
  }
  Vec o;
  for (int l = 0; l < steps; ++l) {
    const Vec u = prompt.tokens.col(l);
    const Discretized disc = selection_discretize(params, u);
    o = scan_step(h, disc, u);
    if (keep_trace) {
      trace.hidden.push_back(h);
      trace.outputs.push_back(o);
      trace.deltas.push_back(disc.delta);
    }
  }
  trace.prediction = o[params.d];
  return trace;
}

Mat label_channel_states(const MambaParams& params,
                         const PromptInstance& prompt) {
  check_prompt(params, prompt);
  const int steps = static_cast<int>(prompt.tokens.cols());
  Mat states(params.d_h, steps);
  Vec h = Vec::Zero(params.d_h);
  for (int l = 0; l < steps; ++l) {
    const Vec u = prompt.tokens.col(l);
    const Discretized disc = selection_discretize(params, u);
    h = disc.a_bar.cwiseProduct(h) + disc.b_bar * u[params.d];
    states.col(l) = h;
  }
  return states;
}

double predict(const MambaParams& params, const PromptInstance& prompt) {
  const Mat states = label_channel_states(params, prompt);
  const Vec c_q = params.w_c * prompt.tokens.col(prompt.n()) + params.b_c;
  return c_q.dot(states.col(prompt.n()));
}

double empirical_loss(const MambaParams& params,
                      const std::vector<PromptInstance>& prompts) {
  if (prompts.empty()) throw UsageError("empirical_loss: empty batch");
  double total = 0.0;
  for (const auto& p : prompts) {
    const double r = predict(params, p) - p.y_q;
    total += 0.5 * r * r;
  }
  return total / static_cast<double>(prompts.size());
}

}  // namespace mamba_icl
