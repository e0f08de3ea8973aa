#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tabql/config.hpp"
#include "tabql/csv.hpp"
#include "tabql/engine.hpp"

namespace tabql {

struct SeedRun {
  std::uint64_t seed = 0;
  std::vector<CurveRow> curve;
  std::optional<std::size_t> switch_step;
  std::optional<ErrorLedger> ledger;
};

struct ExperimentResult {
  std::vector<SeedRun> runs;  // in config seed order

  std::vector<CurveRow> curve() const;
};

/// One seed of the configured algorithm. Independent of every other seed.
SeedRun run_seed(const ExperimentConfig& config, std::uint64_t seed);

/// All seeds, spread over worker threads; results are assembled in seed order.
ExperimentResult run_experiment(const ExperimentConfig& config);

/// Writes the curve CSV, the ledger CSV (when any run has one) next to it as
/// <output>.ledger.csv, and the resolved settings as <output>.config.
void write_experiment(const ExperimentResult& result, const Settings& settings,
                      const std::string& output_path);

/// Tabular Q-learning (constant alpha, or 1/visit count when alpha is 0)
/// under the configured epsilon schedule; rewards in environment units.
SeedRun run_tabular_q(const ExperimentConfig& config, std::uint64_t seed, QTable* final_q = nullptr);

/// Uniform-random behaviour data for FQI.
std::vector<Transition> collect_random_dataset(const EngineConfig& config, std::size_t steps,
                                               std::uint64_t seed);

struct FqiResult {
  QTable q;
  std::vector<double> eval_returns;
  std::vector<std::size_t> eval_lengths;
};

/// Fitted Q-iteration on a fixed dataset. The configured regressor is the
/// fitter (exact_table fits per-pair means of the targets); the greedy policy
/// is then rolled out for eval_episodes episodes.
FqiResult baseline_fqi(const ExperimentConfig& config, const std::vector<Transition>& dataset,
                       std::uint64_t seed);

enum class SweepParam { kT0, kContextK };
SweepParam parse_sweep_param(std::string_view name);

struct SweepPoint {
  std::size_t value = 0;
  ExperimentConfig config;
  ExperimentResult result;
};

/// One experiment per value with everything else held fixed; T0 sweeps force fixed-T0 mode.
std::vector<SweepPoint> sweep(const ExperimentConfig& config, SweepParam param,
                              const std::vector<std::size_t>& values);

/// Mean return over the final `n` episodes of one seed's curve.
double final_mean(const std::vector<CurveRow>& curve, std::size_t n);

struct GeneralizationConfig {
  std::size_t n_train_conditions = 60;
  std::vector<std::size_t> context_counts = {5, 40};
  std::size_t n_test_conditions = 20;
  std::size_t repetitions = 5;
  /// Tabular Q-learning steps spent on each condition's teacher.
  std::size_t teacher_steps = 4000;
  /// Teacher episodes rolled out per condition to populate the shared pool.
  std::size_t rollout_episodes = 4;
  double rollout_epsilon = 0.1;
  std::size_t knn_k = 8;
  std::uint64_t seed = 0;
};

struct GeneralizationRow {
  std::size_t context_conditions = 0;
  std::size_t repetition = 0;
  double unseen_mean = 0.0;  // normalized return on held-out conditions
  double seen_mean = 0.0;    // normalized return on conditions present in the context
};

/// Taxi cross-condition study: per-condition teachers, a shared initial-tagged
/// context built from a subset of conditions, greedy in-context evaluation on
/// held-out conditions. Returns one row per (context count, repetition).
std::vector<GeneralizationRow> cross_seed_generalization(const GeneralizationConfig& config);

}  // namespace tabql
