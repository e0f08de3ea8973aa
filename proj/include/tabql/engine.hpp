#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tabql/mdp.hpp"
#include "tabql/oracle.hpp"
#include "tabql/qnet.hpp"
#include "tabql/regressor.hpp"
#include "tabql/replay.hpp"
#include "tabql/rng.hpp"

namespace tabql {

struct GateConfig {
  /// Soft floor: the gate is only consulted once t >= T0.
  std::size_t T0 = 20000;
  std::size_t window_W = 30;
  std::size_t G_min = 20;
  double quantile_q = 0.5;
  double theta_floor = 0.0;
  double delta_margin = 1.0;
  /// Switch unconditionally at T0 and ignore the return statistics.
  bool fixed_T0 = false;

  void validate() const;
};

enum class RefitMode {
  /// Fractional-turnover rule: (t - t_last) / K >= rho_stale and e_t - e_last >= e_min.
  kStaleness,
  /// Rebuild after every e_min completed episodes.
  kEveryEpisode,
};

struct RefitConfig {
  double rho_stale = 0.25;
  std::size_t e_min = 1;
  RefitMode mode = RefitMode::kStaleness;

  void validate() const;
};

enum class Phase { kWarmup, kIcl };
std::string_view to_string(Phase phase);

struct RunState {
  Phase phase = Phase::kWarmup;
  std::size_t t = 0;
  std::size_t episodes = 0;
  std::deque<double> window;
  std::size_t t_last = 0;
  std::size_t e_last = 0;
  Context context;
  std::optional<std::size_t> switch_step;
};

/// Linear interpolation between order statistics at position q * (n - 1).
double quantile(std::span<const double> values, double q);

/// Fires iff the window is full, G_t >= G_min and theta_t > theta_floor + delta,
/// where theta_t is the q-quantile and G_t counts returns strictly above it.
bool switch_gate(std::span<const double> window, const GateConfig& cfg);
bool switch_gate(const RunState& state, const GateConfig& cfg);

bool refit_gate(std::size_t t, std::size_t t_last, std::size_t episodes, std::size_t e_last,
                std::size_t K, const RefitConfig& cfg);
bool refit_gate(const RunState& state, std::size_t K, const RefitConfig& cfg);

struct EngineConfig {
  EnvOptions env;
  double gamma = 0.99;
  std::size_t total_steps = 40000;
  std::uint64_t seed = 0;
  GateConfig gate;
  RefitConfig refit;
  std::size_t context_K = 1000;
  std::size_t buffer_W = 50000;
  SamplingStrategy sampling = SamplingStrategy::kRecent;
  FeatureOptions features;
  RegressorKind regressor;
  SgdConfig sgd;
  std::vector<std::size_t> hidden = {64, 64};
  /// Staleness tolerance of the quality filter; infinity disables that clause.
  double filter_tau = 0.1;
  /// Apply the episode-return clause of the quality filter (theta from the gate window).
  bool filter_returns = true;
  bool use_filter = true;
  /// false: the run never leaves warm-up (plain DQN on the same stream).
  bool enable_switch = true;
  /// Record the error ledger against the exact optimum (discrete envs only).
  bool ledger = false;
  std::size_t ledger_m_min = 1;
  /// Multiplier applied to rewards before they reach the learner; 0 selects 1 / max|r|.
  double reward_scale = 0.0;
  /// Fixed start for every episode (cross-condition experiments).
  std::optional<InitialCondition> initial_condition;
  /// Exact table used by the exact_table regressor.
  std::shared_ptr<const QTable> regressor_table;
  bool keep_buffer = false;

  void validate() const;
  double effective_reward_scale() const;
};

struct EpisodeRecord {
  std::size_t episode = 0;
  std::size_t end_step = 0;
  double episode_return = 0.0;
  Phase phase = Phase::kWarmup;
};

struct RunResult {
  std::vector<EpisodeRecord> episodes;
  std::optional<std::size_t> switch_step;
  std::vector<std::size_t> refit_steps;
  std::optional<ErrorLedger> ledger;
  QNetParams qnet;
  Context final_context;
  std::vector<Transition> buffer;
};

/// Algorithm driver. step() advances by one environment interaction; the
/// phase-specific bodies are exposed for tests.
class Engine {
 public:
  explicit Engine(EngineConfig config);
  ~Engine();

  const RunState& state() const { return state_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  const QNetParams& qnet() const { return online_; }
  const QNetParams& target_qnet() const { return target_; }
  std::size_t updates() const { return updates_; }
  const EngineConfig& config() const { return config_; }
  const RunResult& result() const { return result_; }

  void step();
  void warmup_step();
  void icl_step();
  /// Appends a finished episode's return to the window and evaluates the switch gate.
  void record_episode(double episode_return);
  /// Forces the handoff now (fixed-T0 mode and tests).
  void switch_to_icl();

  RunResult run();

 private:
  std::vector<double> dqn_values(const EnvState& s) const;
  void learn();
  void finish_transition(std::size_t action, const StepResult& res, std::vector<double> labels);
  Context fresh_context();
  void refit();
  void ledger_init();
  void ledger_step(const Context& acting);
  QTable regressor_table(const Context& context) const;
  void maybe_switch_fixed();

  EngineConfig config_;
  Environment env_;
  EnvInfo info_;
  double reward_scale_;
  Rng agent_rng_;
  Rng explore_rng_;
  Rng context_rng_;
  ReplayBuffer buffer_;
  QNetParams online_;
  QNetParams target_;
  std::size_t updates_ = 0;
  std::unique_ptr<Regressor> regressor_;
  RunState state_;
  EnvState current_;
  double episode_return_ = 0.0;
  RunResult result_;

  // Ledger bookkeeping (discrete envs only).
  std::optional<MdpSpec> ledger_mdp_;
  std::optional<QTable> q_star_;
  std::optional<QTable> q_hat_;

 public:
  /// ||T Q* - Q*|| of the computed optimum (zero up to value-iteration tolerance).
  double oracle_residual() const;
};

RunResult run(const EngineConfig& config);

}  // namespace tabql
