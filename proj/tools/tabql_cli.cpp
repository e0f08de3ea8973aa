// Command-line front end: run, sweep, verify, oracle, plot, bridge-check.
// Exit codes: 0 success, 1 validation error, 2 runtime failure.

#include <CLI11.hpp>

#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "tabql/bridge_client.hpp"
#include "tabql/config.hpp"
#include "tabql/experiment.hpp"
#include "tabql/oracle.hpp"
#include "tabql/plot.hpp"
#include "tabql/verify.hpp"

namespace {

using namespace tabql;

std::vector<std::size_t> parse_values(const std::string& text) {
  std::vector<std::size_t> out;
  for (auto field : split(text, ',')) {
    const auto v = parse_double(field);
    if (!v || *v < 0 || *v != static_cast<double>(static_cast<std::size_t>(*v))) {
      throw ConfigError("--values: not a non-negative integer: " + std::string(field));
    }
    out.push_back(static_cast<std::size_t>(*v));
  }
  if (out.empty()) throw ConfigError("--values: empty list");
  return out;
}

void print_summary(const ExperimentResult& result) {
  for (const auto& run : result.runs) {
    std::cout << "seed " << run.seed << ": " << run.curve.size() << " episodes";
    if (!run.curve.empty()) std::cout << ", final-50 mean " << final_mean(run.curve, 50);
    if (run.switch_step) std::cout << ", switched at step " << *run.switch_step;
    std::cout << '\n';
  }
}

int cmd_run(const std::string& config_path, const std::vector<std::string>& overrides) {
  const Settings settings = Settings::load(config_path, overrides);
  const ExperimentConfig cfg = settings.to_experiment();
  const ExperimentResult result = run_experiment(cfg);
  write_experiment(result, settings, cfg.output_path);
  print_summary(result);
  std::cout << "wrote " << cfg.output_path << '\n';
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& param, const std::string& values,
              const std::vector<std::string>& overrides) {
  const SweepParam p = [&] {
    try {
      return parse_sweep_param(param);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }();
  const std::vector<std::size_t> vals = parse_values(values);
  const Settings base = Settings::load(config_path, overrides);
  const std::string key = p == SweepParam::kT0 ? "t0" : "context_k";
  const std::filesystem::path out(base.get("output"));
  for (std::size_t v : vals) {
    Settings s = base;
    s.set(key, std::to_string(v));
    if (p == SweepParam::kT0) s.set("gate.mode", "fixed");
    const std::string path =
        (out.parent_path() / (out.stem().string() + "_" + param + std::to_string(v) + out.extension().string()))
            .string();
    s.set("output", path);
    const ExperimentConfig cfg = s.to_experiment();
    const ExperimentResult result = run_experiment(cfg);
    write_experiment(result, s, path);
    double mean = 0.0;
    for (const auto& run : result.runs) mean += final_mean(run.curve, 50);
    mean /= static_cast<double>(result.runs.size());
    std::cout << param << '=' << v << "  final-50 mean over seeds " << mean << "  -> " << path << '\n';
  }
  return 0;
}

int cmd_verify(std::uint64_t seed) {
  const auto results = theory_suite(seed);
  bool all = true;
  for (const auto& r : results) {
    std::cout << (r.passed ? "PASS  " : "FAIL  ") << std::left << std::setw(56) << r.name << r.detail << '\n';
    all = all && r.passed;
  }
  return all ? 0 : 2;
}

int cmd_oracle(const std::string& env_name, double gamma, bool slippery) {
  EnvOptions opts;
  opts.id = parse_env_id(env_name);
  opts.slippery = slippery;
  if (opts.id == EnvId::kTabular) opts.model = std::make_shared<MdpSpec>(two_state_mdp(gamma));
  if (!is_discrete(opts.id)) throw ConfigError("oracle: env must be discrete");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("oracle: gamma must lie in (0, 1)");
  const MdpSpec mdp = enumerate_model(opts, gamma);
  const QTable q = value_iteration(mdp, gamma, 1e-10, RewardScale::kRaw);
  std::cout << "state";
  for (std::size_t a = 0; a < q.n_actions(); ++a) std::cout << ",q" << a;
  std::cout << '\n';
  for (std::size_t s = 0; s < q.n_states(); ++s) {
    std::cout << s;
    for (std::size_t a = 0; a < q.n_actions(); ++a) std::cout << ',' << format_double(q(s, a));
    std::cout << '\n';
  }
  return 0;
}

int cmd_bridge_check(const std::string& endpoint) {
  BridgeClient client(endpoint);
  client.ping();
  const std::vector<double> rows = {0.0, 0.0, 1.0, 0.0, 0.0, 1.0};
  const std::vector<double> labels = {1.5, -2.0, 3.25};
  client.set_context(rows, 2, labels);
  const std::vector<double> got = client.query(rows, 2);
  client.quit();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (got.size() != labels.size() || got[i] != labels[i]) {
      std::cerr << "bridge-check: echo mismatch on row " << i << '\n';
      return 2;
    }
  }
  std::cout << "bridge ok: PONG and echo of " << labels.size() << " rows\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TabQL lab: in-context Q-learning with tabular regressors"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  auto* run = app.add_subcommand("run", "Run one experiment from a config file");
  run->add_option("--config", config_path, "key=value config file")->required();
  run->add_option("--override", overrides, "key=value override (repeatable)");

  std::string param;
  std::string values;
  auto* sweep = app.add_subcommand("sweep", "Run one experiment per parameter value");
  sweep->add_option("--param", param, "t0 or k")->required();
  sweep->add_option("--values", values, "comma-separated values")->required();
  sweep->add_option("--config", config_path, "key=value config file")->required();
  sweep->add_option("--override", overrides, "key=value override (repeatable)");

  std::uint64_t verify_seed = 0;
  auto* verify = app.add_subcommand("verify", "Run the theory property suite");
  verify->add_option("--seed", verify_seed, "seed for the random instances");

  std::string env_name;
  double gamma = 0.99;
  bool slippery = false;
  auto* oracle = app.add_subcommand("oracle", "Print Q* of a discrete environment");
  oracle->add_option("--env", env_name, "environment id")->required();
  oracle->add_option("--gamma", gamma, "discount factor")->required();
  oracle->add_flag("--slippery", slippery, "stochastic FrozenLake dynamics");

  std::vector<std::string> plot_in;
  std::string plot_out;
  auto* plot = app.add_subcommand("plot", "Render curve CSVs as an SVG with mean +/- std bands");
  plot->add_option("--in", plot_in, "curve CSV (repeatable, one series each)")->required();
  plot->add_option("--out", plot_out, "output SVG path")->required();

  std::string endpoint;
  auto* bridge = app.add_subcommand("bridge-check", "PING a bridge and verify an echo-context round trip");
  bridge->add_option("--endpoint", endpoint, "tcp:HOST:PORT or stdio:COMMAND")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*run) return cmd_run(config_path, overrides);
    if (*sweep) return cmd_sweep(config_path, param, values, overrides);
    if (*verify) return cmd_verify(verify_seed);
    if (*oracle) return cmd_oracle(env_name, gamma, slippery);
    if (*plot) {
      emit_plot(plot_in, plot_out);
      std::cout << "wrote " << plot_out << '\n';
      return 0;
    }
    if (*bridge) return cmd_bridge_check(endpoint);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
