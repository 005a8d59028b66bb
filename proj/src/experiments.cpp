// Copyright 2026 The mamba-icl Authors. Apache 2.0 License.

#include "mamba_icl/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>
#include <fmt/os.h>
#include <openssl/evp.h>

#include "json.hpp"
#include "mamba_icl/theory.hpp"

namespace mamba_icl {

using nlohmann::json;

// ------------------------------------------------------------------ config

namespace {

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    T out;
    if constexpr (std::is_same_v<T, double>) {
      out = std::stod(value, &used);
    } else if constexpr (std::is_same_v<T, std::uint64_t>) {
      if (!value.empty() && value[0] == '-') throw std::invalid_argument("neg");
      out = std::stoull(value, &used);
    } else {
      const long long v = std::stoll(value, &used);
      out = static_cast<T>(v);
      if (static_cast<long long>(out) != v) throw std::out_of_range("range");
    }
    if (used != value.size()) throw std::invalid_argument("trailing");
    return out;
  } catch (const std::exception&) {
    throw ConfigError(fmt::format("bad value '{}' for key '{}'", value, key));
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  throw ConfigError(fmt::format("bad boolean '{}' for key '{}'", value, key));
}

std::string mode_name(TrainMode m) {
  return m == TrainMode::population ? "population" : "empirical";
}

using Setter = std::function<void(ExperimentConfig&, const std::string&)>;
using Getter = std::function<std::string(const ExperimentConfig&)>;

struct Field {
  Setter set;
  Getter get;
};

template <typename T>
Field number_field(T ExperimentConfig::*member, const char* key) {
  return Field{
      [member, key](ExperimentConfig& c, const std::string& v) {
        c.*member = parse_number<T>(key, v);
      },
      [member](const ExperimentConfig& c) { return fmt::format("{}", c.*member); }};
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> f;
    f["seed"] = number_field(&ExperimentConfig::seed, "seed");
    f["out"] = Field{[](ExperimentConfig& c, const std::string& v) { c.out = v; },
                     [](const ExperimentConfig& c) { return c.out; }};
    f["d"] = number_field(&ExperimentConfig::d, "d");
    f["n"] = number_field(&ExperimentConfig::n, "n");
    f["dh"] = number_field(&ExperimentConfig::dh, "dh");
    f["eta"] = number_field(&ExperimentConfig::eta, "eta");
    f["trials"] = number_field(&ExperimentConfig::trials, "trials");
    f["mode"] = Field{
        [](ExperimentConfig& c, const std::string& v) {
          if (v == "population") c.mode = TrainMode::population;
          else if (v == "empirical") c.mode = TrainMode::empirical;
          else throw ConfigError(fmt::format("mode must be population|empirical, got '{}'", v));
        },
        [](const ExperimentConfig& c) { return mode_name(c.mode); }};
    f["init"] = Field{
        [](ExperimentConfig& c, const std::string& v) {
          if (v != "auto" && v != "gaussian" && v != "orthogonal")
            throw ConfigError(fmt::format("init must be auto|gaussian|orthogonal, got '{}'", v));
          c.init = v;
        },
        [](const ExperimentConfig& c) { return c.init; }};
    f["train_wdelta"] = Field{
        [](ExperimentConfig& c, const std::string& v) {
          c.train_wdelta = parse_bool("train_wdelta", v);
        },
        [](const ExperimentConfig& c) { return std::string(c.train_wdelta ? "true" : "false"); }};
    f["train_prompts"] = number_field(&ExperimentConfig::train_prompts, "train_prompts");
    f["test_prompts"] = number_field(&ExperimentConfig::test_prompts, "test_prompts");
    f["batch_size"] = number_field(&ExperimentConfig::batch_size, "batch_size");
    f["epochs"] = number_field(&ExperimentConfig::epochs, "epochs");
    f["max_steps"] = number_field(&ExperimentConfig::max_steps, "max_steps");
    f["record_every"] = number_field(&ExperimentConfig::record_every, "record_every");
    f["tol"] = number_field(&ExperimentConfig::tol, "tol");
    f["confidence"] = number_field(&ExperimentConfig::confidence, "confidence");
    f["empirical_eta"] = number_field(&ExperimentConfig::empirical_eta, "empirical_eta");
    f["sweep_n_min"] = number_field(&ExperimentConfig::sweep_n_min, "sweep_n_min");
    f["sweep_n_max"] = number_field(&ExperimentConfig::sweep_n_max, "sweep_n_max");
    f["sweep_n_step"] = number_field(&ExperimentConfig::sweep_n_step, "sweep_n_step");
    f["t2_dh"] = number_field(&ExperimentConfig::t2_dh, "t2_dh");
    f["t3_eta"] = number_field(&ExperimentConfig::t3_eta, "t3_eta");
    f["t3_epochs"] = number_field(&ExperimentConfig::t3_epochs, "t3_epochs");
    f["t4_n"] = number_field(&ExperimentConfig::t4_n, "t4_n");
    f["oracle_samples"] = number_field(&ExperimentConfig::oracle_samples, "oracle_samples");
    f["oracle_k"] = number_field(&ExperimentConfig::oracle_k, "oracle_k");
    f["beta1_fault"] = number_field(&ExperimentConfig::beta1_fault, "beta1_fault");
    return f;
  }();
  return table;
}

std::string csv_num(double x) { return fmt::format("{:.6g}", x); }

}  // namespace

std::map<std::string, std::string> ExperimentConfig::snapshot() const {
  std::map<std::string, std::string> out;
  for (const auto& [key, field] : fields()) out[key] = field.get(*this);
  return out;
}

void apply_setting(ExperimentConfig& config, const std::string& key,
                   const std::string& value) {
  std::string k = key;
  std::replace(k.begin(), k.end(), '-', '_');
  const auto it = fields().find(k);
  if (it == fields().end())
    throw ConfigError(fmt::format("unknown config key '{}'", key));
  it->second.set(config, value);
}

ExperimentConfig load_config(const std::string& path) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(path, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(fmt::format("cannot read config {}: {}", path, e.what()));
  }
  ExperimentConfig config;
  for (const auto& [key, node] : tree) {
    if (node.empty()) {
      apply_setting(config, key, node.data());
    } else {
      for (const auto& [inner, leaf] : node) apply_setting(config, inner, leaf.data());
    }
  }
  return config;
}

// --------------------------------------------------------------- training

TrainConfig train_config_for(const ExperimentConfig& config, int d, int n,
                             int d_h, std::uint64_t seed) {
  TrainConfig tc;
  tc.d = d;
  tc.n = n;
  tc.d_h = d_h;
  tc.mode = config.mode;
  tc.seed = seed;
  tc.confidence = config.confidence;
  tc.tol = config.tol;
  tc.record_every = config.record_every;
  tc.train_wdelta = config.train_wdelta;
  tc.batch_size = config.batch_size;
  const bool population = config.mode == TrainMode::population;
  if (config.init == "auto")
    tc.init = population ? InitKind::gaussian : InitKind::orthogonal;
  else
    tc.init = config.init == "gaussian" ? InitKind::gaussian : InitKind::orthogonal;
  if (config.eta > 0)
    tc.eta = config.eta;
  else if (!population)
    tc.eta = config.empirical_eta;
  tc.steps = population ? config.max_steps : config.epochs;
  return tc;
}

LossEstimate test_loss(const MambaParams& params, int count, Rng& rng) {
  if (count < 2) throw ConfigError("test loss needs at least 2 prompts");
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < count; ++i) {
    const PromptInstance p = sample_prompt(params.d, params.n, rng);
    const double r = predict(params, p) - p.y_q;
    const double l = 0.5 * r * r;
    sum += l;
    sum_sq += l * l;
  }
  LossEstimate e;
  e.mean = sum / count;
  const double var = std::max(0.0, (sum_sq - count * e.mean * e.mean) / (count - 1));
  e.se = std::sqrt(var / count);
  return e;
}

MambaParams train_model(const ExperimentConfig& config, int d, int n, int d_h,
                        std::uint64_t seed) {
  const TrainConfig tc = train_config_for(config, d, n, d_h, seed);
  if (tc.mode == TrainMode::population) return train_population(tc).params;
  Rng data = make_stream(seed, 11);
  const auto prompts = sample_prompts(d, n, config.train_prompts, data);
  return train_empirical(tc, prompts).params;
}

CosineTrace cosine_trace(const MambaParams& params, int count, Rng& rng) {
  if (count < 2) throw ConfigError("cosine trace needs at least 2 prompts");
  const int n = params.n;
  std::vector<double> sum(n, 0.0), sum_sq(n, 0.0);
  const Mat ct = params.C().transpose();
  for (int k = 0; k < count; ++k) {
    const PromptInstance p = sample_prompt(params.d, n, rng);
    const Mat states = label_channel_states(params, p);
    const double wn = p.w.norm();
    for (int l = 0; l < n; ++l) {
      const Vec proj = ct * states.col(l);
      const double denom = proj.norm() * wn;
      const double c = denom > 0 ? proj.dot(p.w) / denom : 0.0;
      sum[l] += c;
      sum_sq[l] += c * c;
    }
  }
  CosineTrace out;
  for (int l = 0; l < n; ++l) {
    const double m = sum[l] / count;
    const double var = std::max(0.0, (sum_sq[l] - count * m * m) / (count - 1));
    out.mean.push_back(m);
    out.se.push_back(std::sqrt(var / count));
  }
  return out;
}

namespace {

LossRow loss_row(const ExperimentConfig& config, int d, int n, int d_h) {
  LossRow row;
  row.n = n;
  row.bound = 3.0 * d * (d + 1.0) / (2.0 * n);
  row.theoretical = d >= 2 ? theoretical_loss(d, n).loss : NAN;
  std::vector<double> means;
  double se_sq = 0.0;
  for (int trial = 0; trial < config.trials; ++trial) {
    const std::uint64_t seed = config.seed + static_cast<std::uint64_t>(trial);
    MambaParams params;
    try {
      params = train_model(config, d, n, d_h, seed);
    } catch (const DivergenceError&) {
      ++row.diverged;
      continue;
    }
    Rng test_rng = make_stream(seed, 20);
    const LossEstimate e = test_loss(params, config.test_prompts, test_rng);
    means.push_back(e.mean);
    se_sq += e.se * e.se;
  }
  const double k = static_cast<double>(means.size());
  if (means.empty()) {
    row.mean_loss = row.std_loss = row.se = NAN;
    return row;
  }
  for (double m : means) row.mean_loss += m / k;
  if (means.size() > 1) {
    double ss = 0.0;
    for (double m : means) ss += (m - row.mean_loss) * (m - row.mean_loss);
    row.std_loss = std::sqrt(ss / (k - 1));
  }
  row.se = std::sqrt(se_sq) / k;
  return row;
}

std::string out_path(const ExperimentConfig& config, const std::string& name) {
  std::filesystem::create_directories(config.out);
  return (std::filesystem::path(config.out) / name).string();
}

}  // namespace

FigureResults compute_figures(const ExperimentConfig& config) {
  if (config.sweep_n_min < 1 || config.sweep_n_step < 1 ||
      config.sweep_n_max < config.sweep_n_min)
    throw ConfigError("bad loss-vs-N sweep range");
  if (config.trials < 1) throw ConfigError("trials must be >= 1");
  FigureResults res;
  const TrainConfig tc = train_config_for(config, config.d, config.n, config.dh, config.seed);
  Rng init_rng = make_stream(config.seed);
  const MambaParams before = init_params(tc, init_rng);
  const MambaParams after = train_model(config, config.d, config.n, config.dh, config.seed);
  res.heatmap_before = before.C().transpose() * before.w_b;
  res.heatmap_after = after.C().transpose() * after.w_b;
  Rng cos_rng = make_stream(config.seed, 21);
  res.cosine = cosine_trace(after, config.test_prompts, cos_rng);
  for (int n = config.sweep_n_min; n <= config.sweep_n_max; n += config.sweep_n_step)
    res.loss_vs_n.push_back(loss_row(config, config.d, n, config.dh));
  return res;
}

std::vector<std::string> write_figures(const ExperimentConfig& config,
                                       const FigureResults& results) {
  std::vector<std::string> files;
  {
    const std::string path = out_path(config, "heatmap.csv");
    auto out = fmt::output_file(path);
    const auto cols = results.heatmap_after.cols();
    out.print("stage,row");
    for (Eigen::Index j = 0; j < cols; ++j) out.print(",col{}", j + 1);
    out.print("\n");
    auto dump = [&](const char* stage, const Mat& m) {
      for (Eigen::Index i = 0; i < m.rows(); ++i) {
        out.print("{},{}", stage, i + 1);
        for (Eigen::Index j = 0; j < m.cols(); ++j) out.print(",{}", csv_num(m(i, j)));
        out.print("\n");
      }
    };
    dump("before", results.heatmap_before);
    dump("after", results.heatmap_after);
    files.push_back(path);
  }
  {
    const std::string path = out_path(config, "cosine_trace.csv");
    auto out = fmt::output_file(path);
    out.print("l,mean_cosine,se\n");
    for (std::size_t l = 0; l < results.cosine.mean.size(); ++l)
      out.print("{},{},{}\n", l + 1, csv_num(results.cosine.mean[l]),
                csv_num(results.cosine.se[l]));
    files.push_back(path);
  }
  {
    const std::string path = out_path(config, "loss_vs_n.csv");
    auto out = fmt::output_file(path);
    out.print("N,mean_loss,std_loss,bound,theoretical_loss\n");
    for (const auto& r : results.loss_vs_n)
      out.print("{},{},{},{},{}\n", r.n, csv_num(r.mean_loss), csv_num(r.std_loss),
                csv_num(r.bound), csv_num(r.theoretical));
    files.push_back(path);
  }
  return files;
}

TableResults compute_tables(const ExperimentConfig& config) {
  TableResults res;
  for (int n = 10; n <= 80; n += 10)
    res.t1.push_back({static_cast<double>(n), theoretical_loss(10, n).loss,
                      linear_attention_optimal_loss(10, n)});
  for (int n = 4; n <= 20; n += 2) res.t2.push_back(loss_row(config, 20, n, config.t2_dh));

  {
    ExperimentConfig ec = config;
    ec.mode = TrainMode::empirical;
    ec.train_wdelta = true;
    ec.eta = config.t3_eta;
    ec.epochs = config.t3_epochs;
    const TrainConfig tc = train_config_for(ec, config.d, config.n, config.dh, config.seed);
    Rng data = make_stream(config.seed, 11);
    const auto prompts = sample_prompts(config.d, config.n, config.train_prompts, data);
    const EmpiricalResult er = train_empirical(tc, prompts);
    for (std::size_t e = 0; e < er.wdelta_norms.size(); ++e)
      res.t3.push_back({static_cast<double>(e), er.wdelta_norms[e],
                        er.wdelta_norms[e] * er.wdelta_norms[e]});
  }

  for (int dh = 6; dh <= 20; dh += 2) {
    LossRow row = loss_row(config, config.d, config.t4_n, dh);
    row.n = dh;
    res.t4.push_back(row);
  }
  return res;
}

std::vector<std::string> write_tables(const ExperimentConfig& config,
                                      const TableResults& results) {
  std::vector<std::string> files;
  {
    const std::string path = out_path(config, "table1_mamba_vs_linear_attention.csv");
    auto out = fmt::output_file(path);
    out.print("N,mamba_theoretical_loss,linear_attention_optimal_loss\n");
    for (const auto& r : results.t1)
      out.print("{},{},{}\n", static_cast<int>(r[0]), csv_num(r[1]), csv_num(r[2]));
    files.push_back(path);
  }
  {
    const std::string path = out_path(config, "table2_n_below_d.csv");
    auto out = fmt::output_file(path);
    out.print("N,experimental_loss,experimental_std,theoretical_loss\n");
    for (const auto& r : results.t2)
      out.print("{},{},{},{}\n", r.n, csv_num(r.mean_loss), csv_num(r.std_loss),
                csv_num(r.theoretical));
    files.push_back(path);
  }
  {
    const std::string path = out_path(config, "table3_wdelta_convergence.csv");
    auto out = fmt::output_file(path);
    out.print("epoch,wdelta_norm,wdelta_norm_sq\n");
    for (const auto& r : results.t3)
      out.print("{},{},{}\n", static_cast<long>(r[0]), csv_num(r[1]), csv_num(r[2]));
    files.push_back(path);
  }
  {
    const std::string path = out_path(config, "table4_hidden_dim.csv");
    auto out = fmt::output_file(path);
    out.print("d_h,mean_loss,std_loss,theoretical_loss\n");
    for (const auto& r : results.t4)
      out.print("{},{},{},{}\n", r.n, csv_num(r.mean_loss), csv_num(r.std_loss),
                csv_num(r.theoretical));
    files.push_back(path);
  }
  return files;
}

// ------------------------------------------------------------ verification

bool VerificationReport::passed() const {
  return std::all_of(checks.begin(), checks.end(),
                     [](const CheckResult& c) { return !c.gating || c.pass; });
}

namespace {

json oracle_json(const OracleReport& r) {
  json entries = json::array();
  for (const auto& e : r.entries)
    entries.push_back({{"quantity", e.quantity},
                       {"closed_form", e.closed_form},
                       {"estimate", e.estimate},
                       {"std_error", e.std_error},
                       {"samples", e.samples},
                       {"pass", e.pass},
                       {"informational", e.informational}});
  return {{"name", r.name}, {"k", r.k}, {"worst_z", r.worst_z()},
          {"entries", entries}};
}

CheckResult make_check(std::string name, bool pass, const json& detail,
                       bool gating = true) {
  return CheckResult{std::move(name), pass, gating, detail.dump()};
}

}  // namespace

VerificationReport run_verification_suite(const ExperimentConfig& config) {
  VerificationReport report;
  const std::vector<std::pair<int, int>> grid = {{2, 4}, {4, 10}, {10, 20}};
  std::uint64_t stream = 100;

  for (const auto& [d, n] : grid) {
    Rng rng = make_stream(config.seed, stream++);
    const OracleReport r = mc_moment_oracle(d, config.oracle_samples, rng, config.oracle_k);
    report.checks.push_back(make_check(fmt::format("moment_oracle_d{}", d), r.passed(), oracle_json(r)));
  }
  for (const auto& [d, n] : grid) {
    Rng rng = make_stream(config.seed, stream++);
    const OracleReport r = mc_sequence_oracle(d, n, config.oracle_samples, rng, config.oracle_k);
    report.checks.push_back(make_check(fmt::format("sequence_oracle_d{}_n{}", d, n),
                                       r.passed(), oracle_json(r)));
  }

  {
    Rng rng = make_stream(config.seed, stream++);
    MambaParams p = gaussian_init(2, 6, 5, rng);
    NormalSampler normal(rng);
    p.b_b = 0.3 * normal.vector(6);
    p.b_c = 0.3 * normal.vector(6);
    p.w_delta = 0.3 * normal.vector(3);
    p.b_delta = -1.0;
    const auto batch = sample_prompts(2, 5, 20, rng);
    const GradReport g = gradient_check(p, batch, 1e-5, true, 1e-4, 2000, config.seed);
    json blocks = json::array();
    for (const auto& b : g.blocks)
      blocks.push_back({{"block", b.name}, {"max_rel_error", b.max_rel_error}, {"checked", b.checked}});
    report.checks.push_back(make_check("gradient_check", g.pass,
                                       {{"eps", g.eps}, {"threshold", g.threshold}, {"blocks", blocks}}));
  }

  {
    Rng rng = make_stream(config.seed, stream++);
    const MambaParams p = converged_params(4, 80, 50, rng);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
      const PromptInstance prompt = sample_prompt(4, 50, rng);
      const double a = forward_predict(p, prompt).prediction;
      const double b = converged_predict(prompt);
      worst = std::max(worst, std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12}));
    }
    report.checks.push_back(make_check("converged_predictor_equivalence", worst <= 1e-10,
                                       {{"prompts", 100}, {"max_rel_diff", worst}, {"tolerance", 1e-10}}));
  }

  {
    double worst_beta = 0.0, worst_alpha = 0.0;
    for (int d : {2, 4, 10, 20})
      for (int n = 4; n <= 100; ++n) {
        const TheoryConstants k = constants(d, n);
        const double b1 = k.beta1 * config.beta1_fault;
        worst_beta = std::max(worst_beta, std::abs(k.beta - k.beta3 / b1));
        worst_alpha = std::max(worst_alpha, std::abs(std::pow(k.alpha, n) - 0.5));
      }
    report.checks.push_back(make_check(
        "beta_identity_grid", worst_beta <= 1e-12 && worst_alpha <= 1e-12,
        {{"max_abs_beta_diff", worst_beta}, {"max_abs_alpha_pow_diff", worst_alpha},
         {"tolerance", 1e-12}, {"beta1_fault", config.beta1_fault}}));
  }

  {
    const double eta = config.eta > 0 ? config.eta : default_learning_rate(config.d, config.dh);
    const AssumptionReport a = check_assumptions(config.d, config.n, config.dh, eta, config.confidence);
    json lambdas = json::array();
    for (double l : a.lambda) lambdas.push_back(l);
    report.checks.push_back(make_check(
        "assumption_report", a.satisfied,
        {{"d", config.d}, {"n", config.n}, {"d_h", config.dh}, {"eta", eta},
         {"confidence", config.confidence}, {"lambda", lambdas}, {"lambda_max", a.lambda_max},
         {"dh_ok", a.dh_ok}, {"n_min", a.n_min}, {"n_ok", a.n_ok}, {"eta_max", a.eta_max},
         {"eta_ok", a.eta_ok}, {"eta_max_beta2", a.eta_max_beta2},
         {"eta_beta2_ok", a.eta_beta2_ok}, {"beta_order_ok", a.beta_order_ok}},
        /*gating=*/false));
  }

  {
    const OrthoDynamicsTrace tr = ortho_dynamics(4, 50, 0.01, 100000);
    const double err = std::abs(tr.h.back() - tr.target);
    report.checks.push_back(make_check(
        "ortho_dynamics_limit", !tr.diverged && err < 1e-8,
        {{"h_final", tr.h.back()}, {"target", tr.target}, {"abs_error", err},
         {"converged_at", tr.converged_at}, {"diverged", tr.diverged}}));
  }
  return report;
}

std::string write_verification(const ExperimentConfig& config,
                               const VerificationReport& report) {
  json checks = json::array();
  for (const auto& c : report.checks)
    checks.push_back({{"name", c.name}, {"pass", c.pass}, {"gating", c.gating},
                      {"detail", json::parse(c.detail)}});
  const json doc = {{"passed", report.passed()}, {"seed", config.seed}, {"checks", checks}};
  const std::string path = out_path(config, "verification_report.json");
  std::ofstream(path) << doc.dump(2) << "\n";
  return path;
}

// ---------------------------------------------------------------- manifest

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(fmt::format("cannot read {}", path));
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 14];
  while (in) {
    in.read(buf, sizeof buf);
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string write_manifest(const ExperimentConfig& config,
                           const std::string& command,
                           const std::vector<std::string>& files,
                           const std::string& started,
                           const std::string& finished) {
  json outputs = json::array();
  for (const auto& f : files)
    outputs.push_back({{"path", std::filesystem::path(f).filename().string()},
                       {"sha256", sha256_file(f)},
                       {"bytes", std::filesystem::file_size(f)}});
  const json doc = {{"command", command},
                    {"artifact_version", kArtifactVersion},
                    {"seed", config.seed},
                    {"config", config.snapshot()},
                    {"started", started},
                    {"finished", finished},
                    {"outputs", outputs}};
  const std::string path = out_path(config, "manifest.json");
  std::ofstream(path) << doc.dump(2) << "\n";
  return path;
}

}  // namespace mamba_icl
