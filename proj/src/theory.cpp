// Copyright 2026 The mamba-icl Authors. Apache 2.0 License.

#include "mamba_icl/theory.hpp"

#include <cmath>

#include <fmt/format.h>

namespace mamba_icl {

TheoryConstants constants(int d, int n, int d_h, double confidence) {
  if (d < 2) throw ConfigError(fmt::format("theory needs d >= 2, got {}", d));
  if (n < 1) throw ConfigError(fmt::format("N must be >= 1, got {}", n));
  if (d_h < 1) throw ConfigError(fmt::format("d_h must be >= 1, got {}", d_h));
  if (!(confidence > 0.0 && confidence < 1.0))
    throw ConfigError(fmt::format("confidence must lie in (0,1), got {}", confidence));

  TheoryConstants k;
  k.d = d;
  k.n = n;
  k.d_h = d_h;
  k.confidence = confidence;
  const double a = decay_factor(n);
  const double an = std::pow(a, n);
  const double a2n = std::pow(a, 2 * n);
  const double dd = d;
  k.alpha = a;
  const double head = a * a * (1 - an) * (1 - an);
  const double tail = a * a * (1 - a) * (1 - a2n) / (1 + a);
  k.beta1 = head + (dd + 1) * tail;
  k.beta2 = (dd * dd + 2 * dd) * head + (2 * dd * dd + 4 * dd) * tail;
  k.beta2_published = dd * dd * head + (2 * dd * dd + 6 * dd) * tail;
  k.beta3 = a * (1 - an);
  k.beta = 2 * (1 + a) / (a * (3 * (1 - a) * dd + 4 - 2 * a));
  k.gamma = d_h / 2.0;
  k.log_term = std::log(4.0 * dd * (2 * dd + 1) / confidence);
  k.delta_max = 3.0 * std::sqrt(d_h * k.log_term);
  return k;
}

TheoreticalLoss theoretical_loss(int d, int n) {
  const TheoryConstants k = constants(d, n);
  const double a = k.alpha;
  TheoreticalLoss out;
  out.loss = d * (d + 1.0) * a * a * (1 - a) * (1 - std::pow(a, 2 * n)) /
             (2 * (1 + a) * k.beta1);
  out.bound = 3.0 * d * (d + 1.0) / (2.0 * n);
  if (!(out.loss <= out.bound))
    throw std::logic_error(fmt::format(
        "theoretical loss {} exceeds bound {} at d={} N={}", out.loss,
        out.bound, d, n));
  return out;
}

double converged_predict(const PromptInstance& prompt) {
  // Valid for d = 1 as well, unlike constants().
  const double a = decay_factor(prompt.n());
  const double beta = 2 * (1 + a) / (a * (3 * (1 - a) * prompt.d() + 4 - 2 * a));
  const ContextSums sums = weighted_context_sums(prompt, a);
  return (1 - a) * beta * prompt.x_q.dot(sums.s);
}

Vec projected_state_update(const Vec& h_tilde, const Vec& x, double y,
                           const TheoryConstants& consts) {
  if (h_tilde.size() != x.size())
    throw DimensionError("projected_state_update: size mismatch");
  return consts.alpha * h_tilde + (1 - consts.alpha) * consts.beta * y * x;
}

double linear_attention_optimal_loss(int d, int n) {
  if (d < 1 || n < 1) throw ConfigError("d and N must be >= 1");
  return d * (d + 1.0) / (2.0 * (n + d + 1.0));
}

Vec s4_coefficients(const S4Params& s4, int length) {
  const auto m = s4.b.size();
  if (s4.c.size() != m || s4.a_diag.size() != m)
    throw DimensionError("S4 parameter sizes differ");
  Vec a_bar(m), b_bar(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    const double a = s4.a_diag[j];
    if (a == 0.0) throw DegenerateParameterError("A has a zero diagonal entry");
    a_bar[j] = std::exp(s4.delta * a);
    b_bar[j] = std::expm1(s4.delta * a) / a * s4.b[j];
  }
  Vec k(length);
  Vec p = b_bar;
  for (int i = 0; i < length; ++i) {
    k[i] = s4.c.dot(p);
    p = p.cwiseProduct(a_bar);
  }
  return k;
}

double s4_static_predict(const S4Params& s4, const PromptInstance& prompt) {
  const int steps = prompt.n() + 1;
  const Vec k = s4_coefficients(s4, steps);
  const int d = prompt.d();
  double out = 0.0;
  for (int j = 0; j < steps; ++j) out += k[steps - 1 - j] * prompt.tokens(d, j);
  return out;
}

OrthoDynamicsTrace ortho_dynamics(int d, int n, double eta, long steps,
                                  OrthoRecursion kind) {
  if (!(eta > 0.0)) throw ConfigError("learning rate must be positive");
  if (steps < 1) throw ConfigError("step count must be >= 1");
  const TheoryConstants k = constants(d, n);
  const double b1 = k.beta1;
  const double b3 = k.beta3;
  const double coupling = kind == OrthoRecursion::published ? 1.0 : 2.0;
  OrthoDynamicsTrace tr;
  tr.target = b3 / b1;
  tr.g.reserve(static_cast<std::size_t>(steps) + 1);
  tr.h.reserve(static_cast<std::size_t>(steps) + 1);
  double g = 1.0, h = 0.0;
  tr.g.push_back(g);
  tr.h.push_back(h);
  for (long t = 0; t < steps; ++t) {
    const double r = b3 - b1 * h;
    const double g_next = g + eta * (2 * h + eta * b3 * g - eta * b1 * g * h) * r;
    const double h_next = h + coupling * eta * g * r + eta * eta * h * r * r;
    g = g_next;
    h = h_next;
    tr.g.push_back(g);
    tr.h.push_back(h);
    if (!std::isfinite(h) || std::abs(h) > 10.0 * tr.target) {
      tr.diverged = true;
      tr.diverged_at = t + 1;
      break;
    }
    if (tr.converged_at < 0 && std::abs(b3 - b1 * h) < 1e-8)
      tr.converged_at = t + 1;
  }
  return tr;
}

MambaParams converged_params(int d, int d_h, int n, Rng& rng) {
  if (d_h < d + 2)
    throw ConfigError(fmt::format("converged params need d_h >= d+2, got {}", d_h));
  const TheoryConstants k = constants(d, n, d_h);
  MambaParams p = assumption_defaults(d, d_h, n);
  NormalSampler normal(rng);
  Eigen::HouseholderQR<Mat> qr(normal.matrix(d_h, d + 2));
  const Mat q = qr.householderQ() * Mat::Identity(d_h, d + 2);
  const double scale = std::sqrt(d_h / 2.0);
  const Mat c = scale * q.leftCols(d);
  p.C() = c;
  p.c() = q.col(d + 1);
  p.B() = k.beta * c * (c.transpose() * c).inverse();
  p.b() = scale * q.col(d);
  return p;
}

}  // namespace mamba_icl
