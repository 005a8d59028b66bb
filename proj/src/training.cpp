// Copyright 2026 The mamba-icl Authors. Apache 2.0 License.

#include "mamba_icl/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include <fmt/format.h>
#include <fmt/os.h>

namespace mamba_icl {

double default_learning_rate(int d, int d_h) {
  if (d < 1 || d_h < 1) throw ConfigError("d and d_h must be >= 1");
  return 1.0 / (2.0 * d * d * d_h);
}

double TrainConfig::learning_rate() const {
  if (!eta) return default_learning_rate(d, d_h);
  if (!(*eta >= 0)) throw ConfigError(fmt::format("learning rate must be >= 0, got {}", *eta));
  return *eta;
}

MambaParams init_params(const TrainConfig& config, Rng& rng) {
  MambaParams p = config.init == InitKind::gaussian
                      ? gaussian_init(config.d, config.d_h, config.n, rng)
                      : orthogonal_init(config.d, config.d_h, config.n, rng);
  if (config.train_wdelta) {
    NormalSampler normal(rng);
    p.w_delta = config.wdelta_init_std * normal.vector(config.d + 1);
  }
  return p;
}

// ---------------------------------------------------------------- population

namespace {

void require_zero_biases(const MambaParams& p) {
  if (!p.b_b.isZero(0.0) || !p.b_c.isZero(0.0))
    throw UsageError(
        "population gradients assume b_B = b_C = 0; got nonzero biases");
}

}  // namespace

PopulationGrads population_gradients(const MambaParams& params,
                                     const TheoryConstants& consts) {
  params.validate();
  require_zero_biases(params);
  const Mat B = params.B();
  const Mat C = params.C();
  const Vec b = params.b();
  const Mat ctb = C.transpose() * B;
  const Vec ctbias = C.transpose() * b;
  PopulationGrads g;
  g.B = consts.beta1 * C * ctb - consts.beta3 * C;
  g.C = consts.beta1 * B * ctb.transpose() + consts.beta2 * b * ctbias.transpose() -
        consts.beta3 * B;
  g.b = consts.beta2 * C * ctbias;
  g.c = Vec::Zero(params.d_h);
  g.b_b = Vec::Zero(params.d_h);
  g.b_c = Vec::Zero(params.d_h);
  return g;
}

double population_loss(const MambaParams& params,
                       const TheoryConstants& consts) {
  params.validate();
  require_zero_biases(params);
  const Mat ctb = params.C().transpose() * params.B();
  const Vec ctbias = params.C().transpose() * params.b();
  return 0.5 * (consts.beta1 * ctb.squaredNorm() +
                consts.beta2 * ctbias.squaredNorm() -
                2.0 * consts.beta3 * ctb.trace() + params.d);
}

void population_step(MambaParams& params, const TheoryConstants& consts,
                     double eta) {
  const PopulationGrads g = population_gradients(params, consts);
  params.B() -= eta * g.B;
  params.C() -= eta * g.C;
  params.b() -= eta * g.b;
}

DynamicsRecord make_record(const MambaParams& params,
                           const TheoryConstants& consts, double eta, long t,
                           DeltaTracker& tracker) {
  DynamicsRecord r;
  r.t = t;
  r.state = inner_products(params, t);
  r.props = check_properties(r.state, consts, eta, tracker);
  r.loss = population_loss(params, consts);
  r.diag_residual = (Vec::Constant(params.d, consts.beta3) -
                     consts.beta1 * r.state.cb_diag).cwiseAbs().maxCoeff();
  const Mat ctb = params.C().transpose() * params.B();
  r.product_residual =
      (ctb - consts.fixed_point() * Mat::Identity(params.d, params.d))
          .cwiseAbs()
          .maxCoeff();
  r.bias_residual = r.state.cb_bias.cwiseAbs().maxCoeff();
  return r;
}

PopulationResult train_population(const TrainConfig& config) {
  Rng rng = make_stream(config.seed);
  return train_population(config, init_params(config, rng));
}

PopulationResult train_population(const TrainConfig& config,
                                  MambaParams start) {
  if (config.mode != TrainMode::population)
    throw ConfigError("train_population needs mode = population");
  if (config.record_every < 1) throw ConfigError("record_every must be >= 1");
  if (config.steps < 0) throw ConfigError("steps must be >= 0");
  const double eta = config.learning_rate();
  const TheoryConstants consts =
      constants(config.d, config.n, config.d_h, config.confidence);

  PopulationResult res;
  res.params = std::move(start);
  res.trace.consts = consts;
  res.trace.eta = eta;
  DeltaTracker tracker(consts);
  const double cap = 10.0 * config.d_h;
  const Mat target = consts.fixed_point() * Mat::Identity(config.d, config.d);

  long t = 0;
  for (;; ++t) {
    auto B = res.params.B();
    auto C = res.params.C();
    auto b = res.params.b();
    // Every pairwise inner product is bounded by the largest squared norm.
    const double biggest =
        std::max({B.colwise().squaredNorm().maxCoeff(),
                  C.colwise().squaredNorm().maxCoeff(), b.squaredNorm()});
    if (!std::isfinite(biggest) || biggest > cap)
      throw DivergenceError(fmt::format(
          "population training diverged at t={}: inner product {:g} exceeds "
          "10 d_h = {:g} (eta={:g})",
          t, biggest, cap, eta));
    const Mat ctb = C.transpose() * B;
    const Vec ctbias = C.transpose() * b;
    const double prod_res = (ctb - target).cwiseAbs().maxCoeff();
    const double bias_res = ctbias.cwiseAbs().maxCoeff();
    const bool done = prod_res < config.tol && bias_res < config.tol;
    const bool last = done || t >= config.steps;
    if (t % config.record_every == 0 || last)
      res.trace.records.push_back(make_record(res.params, consts, eta, t, tracker));
    if (last) {
      res.converged = done;
      break;
    }
    // Same update as population_step, reusing C^T B and C^T b.
    const Mat step_B = consts.beta1 * C * ctb - consts.beta3 * C;
    const Mat step_C = consts.beta1 * B * ctb.transpose() +
                       consts.beta2 * b * ctbias.transpose() - consts.beta3 * B;
    const Vec step_bias = consts.beta2 * C * ctbias;
    B -= eta * step_B;
    C -= eta * step_C;
    b -= eta * step_bias;
  }
  res.iterations = t;
  return res;
}

// ----------------------------------------------------------------- empirical

namespace {

struct TokenCache {
  double z = 0;     // pre-softplus argument
  double delta = 0;
  Vec a_bar;
  Vec e;            // expm1(delta a) / a
  Vec b_l;
};

}  // namespace

EmpiricalGrads empirical_gradients(const MambaParams& params,
                                   const std::vector<PromptInstance>& batch,
                                   bool with_delta) {
  if (batch.empty()) throw UsageError("empirical_gradients: empty batch");
  params.validate();
  const int d = params.d;
  const int dh = params.d_h;
  for (int j = 0; j < dh; ++j)
    if (params.a_diag[j] == 0.0)
      throw DegenerateParameterError("A has a zero diagonal entry");

  EmpiricalGrads g;
  g.w_b = Mat::Zero(dh, d + 1);
  g.w_c = Mat::Zero(dh, d + 1);
  g.b_b = Vec::Zero(dh);
  g.b_c = Vec::Zero(dh);
  g.w_delta = Vec::Zero(d + 1);
  g.has_delta = with_delta;

  const double scale = 1.0 / static_cast<double>(batch.size());
  std::vector<TokenCache> cache;
  Mat states;
  Vec dh_vec(dh), d_bl(dh);

  for (const auto& prompt : batch) {
    if (prompt.d() != d || prompt.tokens.rows() != d + 1)
      throw DimensionError("empirical_gradients: prompt dimension mismatch");
    const int steps = static_cast<int>(prompt.tokens.cols());
    cache.resize(steps);
    states.resize(dh, steps + 1);
    states.col(0).setZero();
    for (int l = 0; l < steps; ++l) {
      const auto u = prompt.tokens.col(l);
      TokenCache& tc = cache[l];
      tc.z = params.w_delta.dot(u) + params.b_delta;
      tc.delta = softplus(tc.z);
      tc.b_l = params.w_b * u + params.b_b;
      tc.a_bar = (tc.delta * params.a_diag).array().exp();
      tc.e = (tc.delta * params.a_diag).array().unaryExpr(
                 [](double x) { return std::expm1(x); }) /
             params.a_diag.array();
      states.col(l + 1) = tc.a_bar.cwiseProduct(states.col(l)) +
                          tc.e.cwiseProduct(tc.b_l) * u[d];
    }
    const auto u_q = prompt.tokens.col(steps - 1);
    const Vec c_q = params.w_c * u_q + params.b_c;
    const double y_hat = c_q.dot(states.col(steps));
    const double r = y_hat - prompt.y_q;
    g.loss += 0.5 * r * r * scale;
    const double gr = r * scale;

    // Read-out.
    g.w_c.noalias() += (gr * states.col(steps)) * u_q.transpose();
    g.b_c += gr * states.col(steps);
    dh_vec = gr * c_q;

    for (int l = steps - 1; l >= 0; --l) {
      const auto u = prompt.tokens.col(l);
      const TokenCache& tc = cache[l];
      const double y = u[d];
      double d_delta = 0.0;
      if (with_delta)
        d_delta = (dh_vec.array() * states.col(l).array() *
                   params.a_diag.array() * tc.a_bar.array()).sum();
      if (y != 0.0) {
        d_bl = (dh_vec.array() * tc.e.array()).matrix() * y;
        g.w_b.noalias() += d_bl * u.transpose();
        g.b_b += d_bl;
        if (with_delta)
          d_delta += y * (dh_vec.array() * tc.a_bar.array() * tc.b_l.array()).sum();
      }
      if (with_delta) {
        const double dz = d_delta * sigmoid(tc.z);
        g.w_delta += dz * u;
        g.b_delta += dz;
      }
      dh_vec = dh_vec.cwiseProduct(tc.a_bar);
    }
  }
  return g;
}

void apply_gradients(MambaParams& params, const EmpiricalGrads& grads,
                     double eta) {
  params.w_b -= eta * grads.w_b;
  params.w_c -= eta * grads.w_c;
  params.b_b -= eta * grads.b_b;
  params.b_c -= eta * grads.b_c;
  if (grads.has_delta) {
    params.w_delta -= eta * grads.w_delta;
    params.b_delta -= eta * grads.b_delta;
  }
}

EmpiricalResult train_empirical(const TrainConfig& config,
                                const std::vector<PromptInstance>& prompts) {
  Rng rng = make_stream(config.seed);
  return train_empirical(config, prompts, init_params(config, rng));
}

EmpiricalResult train_empirical(const TrainConfig& config,
                                const std::vector<PromptInstance>& prompts,
                                MambaParams start) {
  if (config.mode != TrainMode::empirical)
    throw ConfigError("train_empirical needs mode = empirical");
  if (prompts.empty()) throw UsageError("train_empirical: no training prompts");
  if (config.batch_size < 0) throw ConfigError("batch_size must be >= 0");
  const double eta = config.learning_rate();

  EmpiricalResult res;
  res.params = std::move(start);
  const std::size_t total = prompts.size();
  const std::size_t bs =
      config.batch_size == 0 ? total
                             : std::min<std::size_t>(config.batch_size, total);
  Rng shuffle_rng = make_stream(config.seed, 2);
  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), 0);
  std::vector<PromptInstance> mini;

  auto record = [&](long epoch) {
    const double loss = empirical_loss(res.params, prompts);
    if (!std::isfinite(loss))
      throw DivergenceError(fmt::format(
          "empirical training produced a non-finite loss at epoch {} (eta={:g})",
          epoch, eta));
    res.loss_curve.push_back(loss);
    if (config.train_wdelta) res.wdelta_norms.push_back(res.params.w_delta.norm());
  };

  auto step = [&](const std::vector<PromptInstance>& batch) {
    EmpiricalGrads g = empirical_gradients(res.params, batch, config.train_wdelta);
    if (!config.train_bdelta) g.b_delta = 0.0;
    apply_gradients(res.params, g, eta);
  };

  record(0);
  for (long epoch = 1; epoch <= config.steps; ++epoch) {
    if (bs == total) {
      step(prompts);
    } else {
      std::shuffle(order.begin(), order.end(), shuffle_rng);
      for (std::size_t start = 0; start + bs <= total; start += bs) {
        mini.clear();
        for (std::size_t k = start; k < start + bs; ++k)
          mini.push_back(prompts[order[k]]);
        step(mini);
      }
    }
    record(epoch);
  }
  return res;
}

// -------------------------------------------------------------- grad check

namespace {

// Addresses of every scalar in a block, so perturbation and gradient lookup
// share one indexing scheme.
struct Block {
  std::string name;
  std::vector<double*> params;
  std::vector<const double*> grads;
};

void add_matrix(Block& blk, Mat& p, const Mat& g) {
  for (Eigen::Index j = 0; j < p.cols(); ++j)
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      blk.params.push_back(&p(i, j));
      blk.grads.push_back(&g(i, j));
    }
}

void add_vector(Block& blk, Vec& p, const Vec& g) {
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    blk.params.push_back(&p[i]);
    blk.grads.push_back(&g[i]);
  }
}

}  // namespace

GradReport gradient_check(const MambaParams& params,
                          const std::vector<PromptInstance>& batch, double eps,
                          bool with_delta, double threshold, int max_coords,
                          std::uint64_t seed) {
  if (!(eps >= 1e-7 && eps <= 1e-3))
    throw ConfigError(fmt::format("eps must lie in [1e-7, 1e-3], got {:g}", eps));
  const EmpiricalGrads g = empirical_gradients(params, batch, with_delta);
  MambaParams work = params;

  std::vector<Block> blocks(4);
  blocks[0].name = "W_B";
  add_matrix(blocks[0], work.w_b, g.w_b);
  blocks[1].name = "W_C";
  add_matrix(blocks[1], work.w_c, g.w_c);
  blocks[2].name = "b_B";
  add_vector(blocks[2], work.b_b, g.b_b);
  blocks[3].name = "b_C";
  add_vector(blocks[3], work.b_c, g.b_c);
  if (with_delta) {
    Block wd{"w_delta", {}, {}};
    add_vector(wd, work.w_delta, g.w_delta);
    blocks.push_back(std::move(wd));
    blocks.push_back(Block{"b_delta", {&work.b_delta}, {&g.b_delta}});
  }

  GradReport report;
  report.eps = eps;
  report.threshold = threshold;
  report.pass = true;
  Rng rng = make_stream(seed, 3);
  for (auto& blk : blocks) {
    std::vector<std::size_t> idx(blk.params.size());
    std::iota(idx.begin(), idx.end(), 0);
    if (static_cast<int>(idx.size()) > max_coords) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(static_cast<std::size_t>(max_coords));
    }
    BlockError be;
    be.name = blk.name;
    for (std::size_t k : idx) {
      double* p = blk.params[k];
      const double saved = *p;
      *p = saved + eps;
      const double up = empirical_loss(work, batch);
      *p = saved - eps;
      const double down = empirical_loss(work, batch);
      *p = saved;
      const double fd = (up - down) / (2 * eps);
      const double an = *blk.grads[k];
      const double rel =
          std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-8});
      be.max_rel_error = std::max(be.max_rel_error, rel);
      ++be.checked;
    }
    if (be.max_rel_error >= threshold) report.pass = false;
    report.blocks.push_back(be);
  }
  return report;
}

// -------------------------------------------------------------- checkpoints

namespace {

void write_matrix(fmt::ostream& out, const std::string& key, const Mat& m) {
  out.print("{} {} {}\n", key, m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      out.print("{}{:.17g}", j ? " " : "", m(i, j));
    out.print("\n");
  }
}

}  // namespace

void save_checkpoint(const std::string& path, const MambaParams& params,
                     std::uint64_t seed) {
  params.validate();
  auto out = fmt::output_file(path);
  out.print("mamba_icl_checkpoint 1\n");
  out.print("d {}\nd_h {}\nn {}\nseed {}\n", params.d, params.d_h, params.n, seed);
  write_matrix(out, "w_b", params.w_b);
  write_matrix(out, "w_c", params.w_c);
  write_matrix(out, "b_b", params.b_b);
  write_matrix(out, "b_c", params.b_c);
  write_matrix(out, "w_delta", params.w_delta);
  write_matrix(out, "b_delta", Mat::Constant(1, 1, params.b_delta));
  write_matrix(out, "a_diag", params.a_diag);
}

MambaParams load_checkpoint(const std::string& path, std::uint64_t* seed) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open checkpoint {}", path));
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != "mamba_icl_checkpoint" || version != 1)
    throw ConfigError(fmt::format("{} is not a checkpoint", path));
  std::map<std::string, long long> scalars;
  std::map<std::string, Mat> mats;
  std::string key;
  while (in >> key) {
    if (key == "d" || key == "d_h" || key == "n" || key == "seed") {
      unsigned long long v = 0;
      in >> v;
      scalars[key] = static_cast<long long>(v);
      if (key == "seed" && seed) *seed = v;
      continue;
    }
    Eigen::Index rows = 0, cols = 0;
    if (!(in >> rows >> cols) || rows < 0 || cols < 0)
      throw ConfigError(fmt::format("bad header for '{}' in {}", key, path));
    Mat m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j)
        if (!(in >> m(i, j)))
          throw ConfigError(fmt::format("truncated block '{}' in {}", key, path));
    mats[key] = std::move(m);
  }
  for (const char* k : {"d", "d_h", "n"})
    if (!scalars.count(k))
      throw ConfigError(fmt::format("checkpoint {} lacks '{}'", path, k));
  for (const char* k : {"w_b", "w_c", "b_b", "b_c", "w_delta", "b_delta", "a_diag"})
    if (!mats.count(k))
      throw ConfigError(fmt::format("checkpoint {} lacks '{}'", path, k));
  MambaParams p;
  p.d = static_cast<int>(scalars["d"]);
  p.d_h = static_cast<int>(scalars["d_h"]);
  p.n = static_cast<int>(scalars["n"]);
  p.w_b = mats["w_b"];
  p.w_c = mats["w_c"];
  p.b_b = mats["b_b"].reshaped();
  p.b_c = mats["b_c"].reshaped();
  p.w_delta = mats["w_delta"].reshaped();
  p.b_delta = mats["b_delta"](0, 0);
  p.a_diag = mats["a_diag"].reshaped();
  p.validate();
  return p;
}

}  // namespace mamba_icl
