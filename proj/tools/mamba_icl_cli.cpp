// Copyright 2026 The mamba-icl Authors. Apache 2.0 License.
//
// mamba_icl_cli <subcommand> [--config PATH] [--seed U64] [--out DIR] ...

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <fmt/os.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "mamba_icl/dynamics.hpp"
#include "mamba_icl/experiments.hpp"
#include "mamba_icl/task_gen.hpp"
#include "mamba_icl/training.hpp"

using namespace mamba_icl;
using nlohmann::json;

namespace {

struct CommonOptions {
  std::string config_path;
  std::map<std::string, std::string> values;
  bool train_wdelta = false;
  std::vector<std::string> sets;
  double eps = 1e-5;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config", opts.config_path, "key = value config file");
  for (const char* key : {"seed", "out", "d", "n", "dh", "eta", "trials", "mode"})
    cmd->add_option(fmt::format("--{}", key), opts.values[key]);
  cmd->add_flag("--train-wdelta", opts.train_wdelta, "train w_delta and b_delta");
  cmd->add_option("--set", opts.sets, "override any config key: key=value");
}

ExperimentConfig resolve(const CommonOptions& opts) {
  ExperimentConfig config =
      opts.config_path.empty() ? ExperimentConfig{} : load_config(opts.config_path);
  for (const auto& [key, value] : opts.values)
    if (!value.empty()) apply_setting(config, key, value);
  if (opts.train_wdelta) config.train_wdelta = true;
  for (const auto& kv : opts.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw ConfigError(fmt::format("--set expects key=value, got '{}'", kv));
    apply_setting(config, kv.substr(0, eq), kv.substr(eq + 1));
  }
  return config;
}

std::string out_file(const ExperimentConfig& config, const std::string& name) {
  std::filesystem::create_directories(config.out);
  return (std::filesystem::path(config.out) / name).string();
}

void finish(const ExperimentConfig& config, const std::string& command,
            const std::vector<std::string>& files, const std::string& started) {
  const std::string manifest =
      write_manifest(config, command, files, started, utc_timestamp());
  for (const auto& f : files) fmt::print("wrote {}\n", f);
  fmt::print("wrote {}\n", manifest);
}

int cmd_figures(const ExperimentConfig& config) {
  const std::string started = utc_timestamp();
  const FigureResults res = compute_figures(config);
  finish(config, "figures", write_figures(config, res), started);
  for (const auto& r : res.loss_vs_n)
    if (r.diverged) fmt::print("N={}: {} trial(s) diverged\n", r.n, r.diverged);
  return kExitOk;
}

int cmd_tables(const ExperimentConfig& config) {
  const std::string started = utc_timestamp();
  const TableResults res = compute_tables(config);
  finish(config, "tables", write_tables(config, res), started);
  return kExitOk;
}

int cmd_verify(const ExperimentConfig& config) {
  const std::string started = utc_timestamp();
  const VerificationReport rep = run_verification_suite(config);
  for (const auto& c : rep.checks)
    fmt::print("{:<36} {}{}\n", c.name, c.pass ? "PASS" : "FAIL",
               c.gating ? "" : " (informational)");
  finish(config, "verify", {write_verification(config, rep)}, started);
  return rep.passed() ? kExitOk : kExitVerification;
}

int cmd_train(const ExperimentConfig& config) {
  const std::string started = utc_timestamp();
  const TrainConfig tc = train_config_for(config, config.d, config.n, config.dh, config.seed);
  std::vector<std::string> files;
  MambaParams params;
  if (tc.mode == TrainMode::population) {
    const PopulationResult res = train_population(tc);
    params = res.params;
    const std::string trace = out_file(config, "trace.csv");
    write_trace_csv(res.trace, trace);
    files.push_back(trace);
    fmt::print("population run: {} after {} iterations\n",
               res.converged ? "converged" : "not converged", res.iterations);
  } else {
    Rng data = make_stream(config.seed, 11);
    const auto prompts = sample_prompts(config.d, config.n, config.train_prompts, data);
    const EmpiricalResult res = train_empirical(tc, prompts);
    params = res.params;
    const std::string curve = out_file(config, "loss_curve.csv");
    auto out = fmt::output_file(curve);
    out.print("epoch,train_loss{}\n", tc.train_wdelta ? ",wdelta_norm" : "");
    for (std::size_t e = 0; e < res.loss_curve.size(); ++e) {
      out.print("{},{:.6g}", e, res.loss_curve[e]);
      if (tc.train_wdelta) out.print(",{:.6g}", res.wdelta_norms[e]);
      out.print("\n");
    }
    out.close();
    files.push_back(curve);
  }
  const std::string ckpt = out_file(config, "checkpoint.txt");
  save_checkpoint(ckpt, params, config.seed);
  files.push_back(ckpt);
  Rng test_rng = make_stream(config.seed, 20);
  const LossEstimate e = test_loss(params, config.test_prompts, test_rng);
  fmt::print("test loss {:.6g} +- {:.2g} on {} prompts (bound {:.6g})\n", e.mean, e.se,
             config.test_prompts, 3.0 * config.d * (config.d + 1) / (2.0 * config.n));
  finish(config, "train", files, started);
  return kExitOk;
}

int cmd_check_grad(const ExperimentConfig& config, double eps) {
  const std::string started = utc_timestamp();
  Rng rng = make_stream(config.seed, 30);
  TrainConfig tc = train_config_for(config, config.d, config.n, config.dh, config.seed);
  MambaParams p = init_params(tc, rng);
  NormalSampler normal(rng);
  p.b_b = 0.3 * normal.vector(config.dh);
  p.b_c = 0.3 * normal.vector(config.dh);
  if (config.train_wdelta) p.w_delta = 0.3 * normal.vector(config.d + 1);
  const auto batch = sample_prompts(config.d, config.n, 20, rng);
  const GradReport rep = gradient_check(p, batch, eps, config.train_wdelta, 1e-4, 2000, config.seed);
  json blocks = json::array();
  for (const auto& b : rep.blocks) {
    fmt::print("{:<8} max rel error {:.3e} over {} coordinates\n", b.name, b.max_rel_error, b.checked);
    blocks.push_back({{"block", b.name}, {"max_rel_error", b.max_rel_error}, {"checked", b.checked}});
  }
  const std::string path = out_file(config, "grad_report.json");
  std::ofstream(path) << json{{"eps", rep.eps}, {"threshold", rep.threshold},
                              {"pass", rep.pass}, {"blocks", blocks}}.dump(2)
                      << "\n";
  finish(config, "check-grad", {path}, started);
  return rep.pass ? kExitOk : kExitVerification;
}

int cmd_check_assumptions(const ExperimentConfig& config) {
  const std::string started = utc_timestamp();
  const double eta = config.eta > 0 ? config.eta : default_learning_rate(config.d, config.dh);
  const AssumptionReport a = check_assumptions(config.d, config.n, config.dh, eta, config.confidence);
  json lambdas = json::array();
  for (std::size_t i = 0; i < a.lambda.size(); ++i) {
    fmt::print("lambda{:<2} = {:.6g}{}\n", i + 1, a.lambda[i],
               a.lambda[i] <= config.dh ? "" : "  (exceeds d_h)");
    lambdas.push_back(a.lambda[i]);
  }
  fmt::print("d_h {} vs max lambda {:.6g}: {}\n", config.dh, a.lambda_max, a.dh_ok ? "ok" : "FAIL");
  fmt::print("N {} vs minimum {:.6g}: {}\n", config.n, a.n_min, a.n_ok ? "ok" : "FAIL");
  fmt::print("eta {:.6g} vs 1/(2 d^2 d_h) = {:.6g}: {}\n", eta, a.eta_max, a.eta_ok ? "ok" : "FAIL");
  fmt::print("eta vs ln2/(beta2 d_h) = {:.6g}: {}\n", a.eta_max_beta2, a.eta_beta2_ok ? "ok" : "FAIL");
  const std::string path = out_file(config, "assumptions.json");
  std::ofstream(path) << json{{"d", config.d}, {"n", config.n}, {"d_h", config.dh},
                              {"eta", eta}, {"confidence", config.confidence},
                              {"lambda", lambdas}, {"lambda_max", a.lambda_max},
                              {"dh_ok", a.dh_ok}, {"n_min", a.n_min}, {"n_ok", a.n_ok},
                              {"eta_max", a.eta_max}, {"eta_ok", a.eta_ok},
                              {"eta_max_beta2", a.eta_max_beta2},
                              {"eta_beta2_ok", a.eta_beta2_ok},
                              {"beta_order_ok", a.beta_order_ok},
                              {"satisfied", a.satisfied}}.dump(2)
                      << "\n";
  finish(config, "check-assumptions", {path}, started);
  return kExitOk;
}

int cmd_oracle(const ExperimentConfig& config) {
  const std::string started = utc_timestamp();
  Rng r1 = make_stream(config.seed, 40);
  Rng r2 = make_stream(config.seed, 41);
  const OracleReport reports[] = {
      mc_moment_oracle(config.d, config.oracle_samples, r1, config.oracle_k),
      mc_sequence_oracle(config.d, config.n, config.oracle_samples, r2, config.oracle_k)};
  json doc = json::array();
  bool ok = true;
  for (const auto& rep : reports) {
    fmt::print("{}: {} (worst z {:.2f})\n", rep.name, rep.passed() ? "PASS" : "FAIL", rep.worst_z());
    ok = ok && rep.passed();
    json entries = json::array();
    for (const auto& e : rep.entries)
      entries.push_back({{"quantity", e.quantity}, {"closed_form", e.closed_form},
                         {"estimate", e.estimate}, {"std_error", e.std_error},
                         {"samples", e.samples}, {"pass", e.pass},
                         {"informational", e.informational}});
    doc.push_back({{"name", rep.name}, {"k", rep.k}, {"passed", rep.passed()}, {"entries", entries}});
  }
  const std::string path = out_file(config, "oracle_report.json");
  std::ofstream(path) << doc.dump(2) << "\n";
  finish(config, "oracle", {path}, started);
  return ok ? kExitOk : kExitVerification;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"In-context regression experiments for a selective state-space layer"};
  app.require_subcommand(1);
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"figures", "heatmap, cosine trace and loss-vs-N sweep"},
      {"tables", "baseline, N <= d, w_delta and hidden-width tables"},
      {"verify", "all oracles and identity checks; nonzero exit on failure"},
      {"train", "one training run; writes a checkpoint"},
      {"check-grad", "finite-difference check of the empirical gradients"},
      {"check-assumptions", "dimension / step-size assumption report"},
      {"oracle", "Monte-Carlo checks of the moment identities"}};
  std::map<std::string, CommonOptions> opts;
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, help] : commands) {
    subs[name] = app.add_subcommand(name, help);
    add_common(subs[name], opts[name]);
  }
  subs["check-grad"]->add_option("--eps", opts["check-grad"].eps, "finite-difference step");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    for (const auto& [name, sub] : subs) {
      if (!sub->parsed()) continue;
      const ExperimentConfig config = resolve(opts[name]);
      if (name == "figures") return cmd_figures(config);
      if (name == "tables") return cmd_tables(config);
      if (name == "verify") return cmd_verify(config);
      if (name == "train") return cmd_train(config);
      if (name == "check-grad") return cmd_check_grad(config, opts[name].eps);
      if (name == "check-assumptions") return cmd_check_assumptions(config);
      if (name == "oracle") return cmd_oracle(config);
    }
  } catch (const ConfigError& e) {
    fmt::print(stderr, "configuration error: {}\n", e.what());
    return kExitConfig;
  } catch (const DimensionError& e) {
    fmt::print(stderr, "configuration error: {}\n", e.what());
    return kExitConfig;
  } catch (const DivergenceError& e) {
    fmt::print(stderr, "training diverged: {}\n", e.what());
    return kExitDivergence;
  }
  return kExitConfig;
}
