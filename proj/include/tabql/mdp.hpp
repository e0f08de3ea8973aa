#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tabql/rng.hpp"

namespace tabql {

enum class EnvId { kCliffWalking, kFrozenLake4, kFrozenLake8, kTaxi, kCartPole, kTabular };

std::string_view to_string(EnvId id);
/// Throws std::invalid_argument on an unknown name.
EnvId parse_env_id(std::string_view name);
bool is_discrete(EnvId id);

struct Outcome {
  std::size_t next_state;
  double probability;
};

enum class RewardScale { kNormalized, kRaw };

/// Finite discounted MDP. Rows are indexed by s * n_actions + a.
struct MdpSpec {
  std::size_t n_states = 0;
  std::size_t n_actions = 0;
  std::vector<std::vector<Outcome>> transition;
  /// Expected reward mapped affinely to [0, 1]; terminal self-loops stay 0.
  std::vector<double> reward;
  /// Expected reward in the environment's own units.
  std::vector<double> raw_reward;
  std::vector<bool> terminal;
  double gamma = 0.99;

  std::size_t row(std::size_t s, std::size_t a) const { return s * n_actions + a; }
  const std::vector<double>& rewards(RewardScale scale) const {
    return scale == RewardScale::kRaw ? raw_reward : reward;
  }
  /// Throws std::invalid_argument if any structural invariant is broken.
  void validate() const;
};

using ContinuousState = std::array<double, 4>;

struct EnvState {
  EnvId env_id = EnvId::kFrozenLake4;
  std::optional<std::size_t> discrete_index;
  std::optional<ContinuousState> continuous;
  std::size_t episode_step = 0;
  std::int64_t initial_tag = 0;
  bool done = false;
  /// True only when the episode ended in an absorbing state (not on truncation).
  bool terminal = false;

  std::size_t index() const;
};

struct InitialCondition {
  std::optional<std::size_t> index;
  std::optional<ContinuousState> continuous;
};

struct EnvOptions {
  EnvId id = EnvId::kFrozenLake4;
  bool slippery = false;
  /// 0 selects the environment's standard cap.
  std::size_t horizon = 0;
  /// Required for kTabular: model to simulate and its start state.
  std::shared_ptr<const MdpSpec> model;
  std::size_t tabular_start = 0;
};

/// Static facts about an environment configuration.
struct EnvInfo {
  std::size_t n_states = 0;  // 0 for continuous
  std::size_t n_actions = 0;
  std::size_t horizon = 0;
  std::size_t state_feature_dim = 0;
  std::size_t net_input_dim = 0;
  double reward_min = 0.0;
  double reward_max = 1.0;
  double return_min = 0.0;
  double return_max = 1.0;
};

EnvInfo env_info(const EnvOptions& options);

struct StepResult {
  EnvState next;
  double reward = 0.0;
  bool done = false;
};

/// Stateless simulator apart from its private PRNG stream; episodes are carried
/// in EnvState values so that any (state, action) can be stepped directly.
class Environment {
 public:
  Environment(EnvOptions options, std::uint64_t seed);

  const EnvOptions& options() const { return options_; }
  const EnvInfo& info() const { return info_; }

  EnvState reset(const std::optional<InitialCondition>& initial = std::nullopt);
  StepResult step(const EnvState& state, std::size_t action);

  /// Builds a mid-episode state for a discrete index (used for model checks).
  EnvState make_state(std::size_t index, std::size_t episode_step = 0) const;

 private:
  std::size_t reset_index(const std::optional<InitialCondition>& initial);
  StepResult step_discrete(const EnvState& state, std::size_t action);
  StepResult step_cartpole(const EnvState& state, std::size_t action);

  EnvOptions options_;
  EnvInfo info_;
  Rng rng_;
};

/// Convenience: a fresh environment reset with the given seed.
EnvState reset(const EnvOptions& options, std::uint64_t seed,
               const std::optional<InitialCondition>& initial = std::nullopt);

/// Small stochastic 2-state, 2-action MDP with rewards in [0, 1], used for
/// the error-ledger runs.
MdpSpec two_state_mdp(double gamma);

/// Random dense MDP: each row's next-state distribution is a normalized
/// uniform draw and rewards are uniform in [0, 1].
MdpSpec random_mdp(std::size_t n_states, std::size_t n_actions, double gamma, Rng& rng);

/// Exhaustive (state, action) model of a discrete environment.
MdpSpec enumerate_model(const EnvOptions& options, double gamma);

struct FeatureOptions {
  bool include_timestep = true;
  bool include_initial_tag = false;
};

/// One tabular row: decoded state components, action id, optional timestep and tag.
struct FeatureRow {
  std::vector<double> features;
  std::optional<double> label;
};

std::vector<double> decode_state(EnvId id, std::size_t index);
/// Inverse of decode_state. Throws std::invalid_argument on non-integral or out-of-range input.
std::size_t encode_state(EnvId id, std::span<const double> components);
std::size_t encode_taxi(std::size_t row, std::size_t col, std::size_t passenger,
                        std::size_t destination);

FeatureRow encode_features(const EnvState& state, std::size_t action,
                           const FeatureOptions& options);
std::size_t feature_length(const EnvInfo& info, const FeatureOptions& options);

/// Network input for the warm-up teacher: one-hot index for discrete states,
/// raw components for CartPole.
std::vector<double> net_input(const EnvState& state, const EnvInfo& info);

/// Affine map of a raw episode return onto [0, 1] using env_info bounds.
double normalized_return(const EnvInfo& info, double raw_return);

}  // namespace tabql
