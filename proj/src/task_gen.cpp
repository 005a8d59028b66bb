// Copyright 2026 The mamba-icl Authors. Apache 2.0 License.

#include "mamba_icl/task_gen.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace mamba_icl {

namespace {

void require_dims(int d, int n) {
  if (d < 1) throw ConfigError(fmt::format("dimension d must be >= 1, got {}", d));
  if (n < 1) throw ConfigError(fmt::format("prompt length N must be >= 1, got {}", n));
}

// Welford running mean / variance.
class RunningStat {
 public:
  void add(double x) {
    ++count_;
    const double delta = x - mean_;
    mean_ += delta / static_cast<double>(count_);
    m2_ += delta * (x - mean_);
  }
  double mean() const { return mean_; }
  double std_error() const {
    if (count_ < 2) return 0.0;
    const double var = m2_ / static_cast<double>(count_ - 1);
    return std::sqrt(var / static_cast<double>(count_));
  }
  std::int64_t count() const { return count_; }

 private:
  std::int64_t count_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

OracleEntry make_entry(std::string quantity, double closed_form,
                       const RunningStat& stat, double k,
                       bool informational = false) {
  OracleEntry e;
  e.quantity = std::move(quantity);
  e.closed_form = closed_form;
  e.estimate = stat.mean();
  e.std_error = stat.std_error();
  e.samples = stat.count();
  e.pass = std::abs(e.estimate - e.closed_form) <= k * e.std_error;
  e.informational = informational;
  return e;
}

void check_samples(std::int64_t samples) {
  if (samples < 2)
    throw ConfigError(fmt::format("sample count must be >= 2, got {}", samples));
}

}  // namespace

PromptInstance make_prompt(const Vec& w, const Mat& xs, const Vec& x_q) {
  const int d = static_cast<int>(w.size());
  if (xs.rows() != d || x_q.size() != d)
    throw DimensionError("make_prompt: inputs must have dimension d");
  const int n = static_cast<int>(xs.cols());
  require_dims(d, n);
  PromptInstance p;
  p.w = w;
  p.xs = xs;
  p.ys = xs.transpose() * w;
  p.x_q = x_q;
  p.y_q = w.dot(x_q);
  p.tokens.resize(d + 1, n + 1);
  p.tokens.topLeftCorner(d, n) = xs;
  p.tokens.block(d, 0, 1, n) = p.ys.transpose();
  p.tokens.col(n).head(d) = x_q;
  p.tokens(d, n) = 0.0;
  return p;
}

PromptInstance sample_prompt(int d, int n, Rng& rng) {
  require_dims(d, n);
  NormalSampler normal(rng);
  Vec w = normal.vector(d);
  Mat xs = normal.matrix(d, n);
  Vec x_q = normal.vector(d);
  return make_prompt(w, xs, x_q);
}

std::vector<PromptInstance> sample_prompts(int d, int n, int count, Rng& rng) {
  if (count < 0) throw ConfigError("prompt count must be non-negative");
  std::vector<PromptInstance> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) out.push_back(sample_prompt(d, n, rng));
  return out;
}

double decay_factor(int n) {
  if (n < 1) throw ConfigError("prompt length N must be >= 1");
  return std::exp(-std::log(2.0) / n);
}

ContextSums weighted_context_sums(const PromptInstance& prompt, double alpha) {
  const int n = prompt.n();
  ContextSums sums;
  sums.s = Vec::Zero(prompt.d());
  // Token l (1-based) carries weight alpha^(N-l+1); walk backwards.
  double weight = alpha;
  for (int l = n - 1; l >= 0; --l) {
    const double y = prompt.ys[l];
    sums.s.noalias() += (weight * y) * prompt.xs.col(l);
    sums.v += weight * y * y;
    sums.y += weight * y;
    weight *= alpha;
  }
  return sums;
}

GeometricSums geometric_sums(double alpha, int n) {
  GeometricSums g;
  g.s1 = alpha * (1.0 - std::pow(alpha, n)) / (1.0 - alpha);
  g.s2 = alpha * alpha * (1.0 - std::pow(alpha, 2 * n)) /
         ((1.0 - alpha) * (1.0 + alpha));
  return g;
}

double weighted_fourth_moment(int d, int n) {
  const GeometricSums g = geometric_sums(decay_factor(n), n);
  const double dd = d;
  return (dd * dd + 2 * dd) * g.s1 * g.s1 + (2 * dd * dd + 4 * dd) * g.s2;
}

double weighted_fourth_moment_uncorrelated(int d, int n) {
  const GeometricSums g = geometric_sums(decay_factor(n), n);
  const double dd = d;
  return dd * dd * g.s1 * g.s1 + (2 * dd * dd + 6 * dd) * g.s2;
}

bool OracleReport::passed() const {
  return std::all_of(entries.begin(), entries.end(), [](const OracleEntry& e) {
    return e.informational || e.pass;
  });
}

double OracleReport::worst_z() const {
  double worst = 0.0;
  for (const auto& e : entries) {
    if (e.informational) continue;
    const double diff = std::abs(e.estimate - e.closed_form);
    const double z = e.std_error > 0 ? diff / e.std_error
                                     : (diff > 0 ? INFINITY : 0.0);
    worst = std::max(worst, z);
  }
  return worst;
}

OracleReport mc_moment_oracle(int d, std::int64_t samples, Rng& rng, double k) {
  require_dims(d, 1);
  check_samples(samples);
  NormalSampler normal(rng);
  RunningStat y2, y4;
  std::vector<RunningStat> mat(static_cast<std::size_t>(d) * d);
  for (std::int64_t m = 0; m < samples; ++m) {
    const Vec x = normal.vector(d);
    const Vec w = normal.vector(d);
    const double y = x.dot(w);
    y2.add(y * y);
    y4.add(y * y * y * y);
    // x x^T w w^T x x^T = y^2 x x^T
    for (int j = 0; j < d; ++j)
      for (int i = 0; i < d; ++i) mat[j * d + i].add(y * y * x[i] * x[j]);
  }
  OracleReport report;
  report.name = fmt::format("gaussian moments (d={})", d);
  report.k = k;
  report.entries.push_back(make_entry("E[y^2]", d, y2, k));
  report.entries.push_back(make_entry("E[y^4]", 3.0 * d * (d + 2), y4, k));
  for (int j = 0; j < d; ++j)
    for (int i = 0; i < d; ++i)
      report.entries.push_back(make_entry(
          fmt::format("E[x x^T w w^T x x^T]({},{})", i, j),
          i == j ? d + 2.0 : 0.0, mat[j * d + i], k));
  return report;
}

OracleReport mc_sequence_oracle(int d, int n, std::int64_t samples, Rng& rng,
                                double k) {
  require_dims(d, n);
  check_samples(samples);
  const double alpha = decay_factor(n);
  const GeometricSums g = geometric_sums(alpha, n);
  const std::size_t dd = static_cast<std::size_t>(d);

  std::vector<RunningStat> ss(dd * dd), sw(dd * dd);
  std::vector<RunningStat> sv(dd), vw(dd), sy(dd), yw(dd);
  RunningStat v2, vy, y2;

  for (std::int64_t m = 0; m < samples; ++m) {
    const PromptInstance p = sample_prompt(d, n, rng);
    const ContextSums c = weighted_context_sums(p, alpha);
    for (int j = 0; j < d; ++j) {
      for (int i = 0; i < d; ++i) {
        ss[j * dd + i].add(c.s[i] * c.s[j]);
        sw[j * dd + i].add(c.s[i] * p.w[j]);
      }
      sv[j].add(c.s[j] * c.v);
      vw[j].add(c.v * p.w[j]);
      sy[j].add(c.s[j] * c.y);
      yw[j].add(c.y * p.w[j]);
    }
    v2.add(c.v * c.v);
    vy.add(c.v * c.y);
    y2.add(c.y * c.y);
  }

  OracleReport report;
  report.name = fmt::format("weighted sequence moments (d={}, N={})", d, n);
  report.k = k;
  auto& out = report.entries;
  const double ss_diag = g.s1 * g.s1 + (d + 1.0) * g.s2;
  for (int j = 0; j < d; ++j)
    for (int i = 0; i < d; ++i)
      out.push_back(make_entry(
          fmt::format("E[sum a_i a_j y_i y_j x_i x_j^T]({},{})", i, j),
          i == j ? ss_diag : 0.0, ss[j * dd + i], k));
  for (int i = 0; i < d; ++i)
    out.push_back(make_entry(
        fmt::format("E[sum a_i a_j y_i y_j^2 x_i]({})", i), 0.0, sv[i], k));
  out.push_back(make_entry("E[sum a_i a_j y_i^2 y_j^2]",
                           weighted_fourth_moment(d, n), v2, k));
  out.push_back(make_entry("E[sum a_i a_j y_i^2 y_j^2] (w-uncorrelated form)",
                           weighted_fourth_moment_uncorrelated(d, n), v2, k,
                           /*informational=*/true));
  for (int j = 0; j < d; ++j)
    for (int i = 0; i < d; ++i)
      out.push_back(make_entry(
          fmt::format("E[sum a_i y_i x_i w^T]({},{})", i, j),
          i == j ? g.s1 : 0.0, sw[j * dd + i], k));
  for (int i = 0; i < d; ++i)
    out.push_back(make_entry(fmt::format("E[sum a_i y_i^2 w]({})", i), 0.0,
                             vw[i], k));
  for (int i = 0; i < d; ++i)
    out.push_back(make_entry(
        fmt::format("E[sum a_i a_j x_i y_i y_j]({})", i), 0.0, sy[i], k));
  out.push_back(make_entry("E[sum a_i a_j y_i^2 y_j]", 0.0, vy, k));
  out.push_back(make_entry("E[sum a_i a_j y_i y_j]", d * g.s2, y2, k));
  for (int i = 0; i < d; ++i)
    out.push_back(make_entry(fmt::format("E[sum a_i y_i w]({})", i), 0.0,
                             yw[i], k));
  return report;
}

}  // namespace mamba_icl
