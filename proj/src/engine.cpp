#include "tabql/engine.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tabql {

void GateConfig::validate() const {
  if (window_W == 0) throw std::invalid_argument("gate.window must be at least 1");
  if (G_min > window_W) throw std::invalid_argument("gate.g_min must not exceed gate.window");
  if (!(quantile_q > 0.0 && quantile_q < 1.0)) throw std::invalid_argument("gate.q must lie in (0, 1)");
}

void RefitConfig::validate() const {
  if (!(rho_stale > 0.0 && rho_stale <= 1.0)) throw std::invalid_argument("refit.rho_stale must lie in (0, 1]");
  if (e_min < 1) throw std::invalid_argument("refit.e_min must be at least 1");
}

std::string_view to_string(Phase phase) { return phase == Phase::kWarmup ? "warmup" : "icl"; }

double quantile(std::span<const double> values, double q) {
  if (values.empty()) throw std::invalid_argument("quantile of an empty window");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double h = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

bool switch_gate(std::span<const double> window, const GateConfig& cfg) {
  if (window.size() < cfg.window_W) return false;
  const auto recent = window.last(cfg.window_W);
  const double theta = quantile(recent, cfg.quantile_q);
  const auto above = static_cast<std::size_t>(
      std::count_if(recent.begin(), recent.end(), [theta](double r) { return r > theta; }));
  return above >= cfg.G_min && theta > cfg.theta_floor + cfg.delta_margin;
}

bool switch_gate(const RunState& state, const GateConfig& cfg) {
  const std::vector<double> w(state.window.begin(), state.window.end());
  return switch_gate(w, cfg);
}

bool refit_gate(std::size_t t, std::size_t t_last, std::size_t episodes, std::size_t e_last,
                std::size_t K, const RefitConfig& cfg) {
  if (episodes < e_last + cfg.e_min) return false;
  if (cfg.mode == RefitMode::kEveryEpisode) return true;
  if (K == 0) throw std::invalid_argument("refit_gate: K must be positive");
  return static_cast<double>(t - t_last) / static_cast<double>(K) >= cfg.rho_stale;
}

bool refit_gate(const RunState& state, std::size_t K, const RefitConfig& cfg) {
  return refit_gate(state.t, state.t_last, state.episodes, state.e_last, K, cfg);
}

void EngineConfig::validate() const {
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in (0, 1)");
  if (context_K == 0) throw std::invalid_argument("context_k must be at least 1");
  if (buffer_W == 0) throw std::invalid_argument("buffer_w must be at least 1");
  if (!(filter_tau >= 0.0)) throw std::invalid_argument("filter_tau must be nonnegative");
  if (!(reward_scale >= 0.0)) throw std::invalid_argument("reward_scale must be nonnegative");
  if (hidden.empty()) throw std::invalid_argument("hidden must list at least one layer");
  gate.validate();
  refit.validate();
  regressor.validate();
  sgd.validate();
  if (ledger && !is_discrete(env.id)) throw std::invalid_argument("ledger requires a discrete env");
  if (regressor.kind == RegressorType::kExactTable && !regressor_table) {
    throw std::invalid_argument("exact_table regressor needs a table");
  }
}

double EngineConfig::effective_reward_scale() const {
  if (reward_scale > 0.0) return reward_scale;
  const EnvInfo info = env_info(env);
  const double m = std::max(std::abs(info.reward_min), std::abs(info.reward_max));
  return m > 0.0 ? 1.0 / m : 1.0;
}

Engine::Engine(EngineConfig config)
    : config_((config.validate(), std::move(config))),
      env_(config_.env, config_.seed),
      info_(env_.info()),
      reward_scale_(config_.effective_reward_scale()),
      agent_rng_(config_.seed, Stream::kAgent),
      explore_rng_(config_.seed, Stream::kExploration),
      context_rng_(config_.seed, Stream::kContext),
      buffer_(config_.buffer_W) {
  online_ = init_qnet(info_.net_input_dim, config_.hidden, info_.n_actions, agent_rng_);
  target_ = online_;
  regressor_ = make_regressor(config_.regressor, config_.env.id, config_.regressor_table.get());
  current_ = env_.reset(config_.initial_condition);
  if (config_.ledger) {
    MdpSpec mdp = enumerate_model(config_.env, config_.gamma);
    for (double& r : mdp.raw_reward) r *= reward_scale_;
    q_star_ = value_iteration(mdp, config_.gamma, 1e-12, RewardScale::kRaw);
    ledger_mdp_ = std::move(mdp);
  }
}

Engine::~Engine() = default;

std::vector<double> Engine::dqn_values(const EnvState& s) const {
  const Eigen::VectorXd q = forward(online_, net_input(s, info_));
  return {q.data(), q.data() + q.size()};
}

void Engine::learn() {
  if (buffer_.size() < config_.sgd.batch_size) return;
  const auto idx = buffer_.sample_indices(config_.sgd.batch_size, agent_rng_);
  std::vector<const Transition*> picked;
  picked.reserve(idx.size());
  for (std::size_t i : idx) picked.push_back(&buffer_[i]);
  const TdBatch batch = make_batch(picked, info_);
  online_ = td_update(online_, target_, batch, config_.gamma, config_.sgd);
  if (++updates_ % config_.sgd.target_sync_period == 0) target_ = online_;
}

void Engine::finish_transition(std::size_t action, const StepResult& res,
                               std::vector<double> labels) {
  Transition tr;
  tr.state = current_;
  tr.action_taken = action;
  tr.reward = res.reward * reward_scale_;
  tr.next_state = res.next;
  tr.q_labels = std::move(labels);
  tr.timestep = state_.t;
  tr.episode_id = state_.episodes;
  buffer_.push(std::move(tr));
  learn();
  ++state_.t;
  episode_return_ += res.reward;
  if (res.done) {
    buffer_.close_episode(state_.episodes, episode_return_);
    const double ret = episode_return_;
    episode_return_ = 0.0;
    current_ = env_.reset(config_.initial_condition);
    record_episode(ret);
  } else {
    current_ = res.next;
  }
}

void Engine::record_episode(double episode_return) {
  result_.episodes.push_back({state_.episodes, state_.t, episode_return, state_.phase});
  ++state_.episodes;
  state_.window.push_back(episode_return);
  while (state_.window.size() > config_.gate.window_W) state_.window.pop_front();
  if (state_.phase == Phase::kWarmup && config_.enable_switch && !config_.gate.fixed_T0 &&
      state_.t >= config_.gate.T0 && switch_gate(state_, config_.gate)) {
    switch_to_icl();
  }
}

void Engine::warmup_step() {
  if (state_.phase != Phase::kWarmup) throw std::logic_error("warmup_step outside warm-up");
  const auto q = dqn_values(current_);
  const std::size_t a = epsilon_greedy(q, state_.t, config_.sgd.epsilon, explore_rng_);
  const StepResult res = env_.step(current_, a);
  finish_transition(a, res, q);
  maybe_switch_fixed();
}

void Engine::maybe_switch_fixed() {
  if (state_.phase == Phase::kWarmup && config_.enable_switch && config_.gate.fixed_T0 &&
      state_.t >= config_.gate.T0) {
    switch_to_icl();
  }
}

Context Engine::fresh_context() {
  Context ctx = build_context(buffer_, config_.context_K, config_.sampling, config_.features,
                              &context_rng_);
  if (!config_.use_filter) return ctx;
  FilterParams params;
  params.tau = config_.filter_tau;
  if (config_.filter_returns) params.theta = config_.gate.theta_floor;
  params.value_range = (info_.reward_max - info_.reward_min) * reward_scale_ / (1.0 - config_.gamma);
  Context filtered = quality_filter(ctx, [this](const EnvState& s) { return dqn_values(s); }, params);
  return filtered.empty() ? ctx : filtered;
}

void Engine::switch_to_icl() {
  if (state_.phase != Phase::kWarmup) return;
  if (buffer_.empty()) throw std::logic_error("cannot switch with an empty buffer");
  state_.phase = Phase::kIcl;
  state_.switch_step = state_.t;
  result_.switch_step = state_.t;
  state_.context = fresh_context();
  state_.t_last = state_.t;
  state_.e_last = state_.episodes;
  if (ledger_mdp_) ledger_init();
}

void Engine::refit() {
  state_.context = fresh_context();
  state_.t_last = state_.t;
  state_.e_last = state_.episodes;
  result_.refit_steps.push_back(state_.t);
}

void Engine::icl_step() {
  if (state_.phase != Phase::kIcl) throw std::logic_error("icl_step before the switch");
  const auto q = predict_actions(*regressor_, state_.context, current_, info_.n_actions);
  const std::size_t a = epsilon_greedy(q, state_.t, config_.sgd.epsilon, explore_rng_);
  const StepResult res = env_.step(current_, a);
  std::optional<Context> before;
  if (ledger_mdp_) before = state_.context;
  finish_transition(a, res, dqn_values(current_));
  if (refit_gate(state_, config_.context_K, config_.refit)) refit();
  if (ledger_mdp_) ledger_step(*before);
}

QTable Engine::regressor_table(const Context& context) const {
  return predict_table(*regressor_, context, config_.env.id, info_.n_states, info_.n_actions);
}

void Engine::ledger_init() {
  ErrorLedger ledger;
  QTable dqn(info_.n_states, info_.n_actions);
  for (std::size_t s = 0; s < info_.n_states; ++s) {
    const auto q = dqn_values(env_.make_state(s));
    for (std::size_t a = 0; a < info_.n_actions; ++a) dqn(s, a) = q[a];
  }
  ledger.eps_label = sup_distance(dqn, *q_star_);
  q_hat_ = regressor_table(state_.context);
  ledger.initial_error = sup_distance(*q_hat_, *q_star_);
  result_.ledger = std::move(ledger);
}

void Engine::ledger_step(const Context& acting) {
  ErrorLedger& ledger = *result_.ledger;
  const double gamma = config_.gamma;
  const EmpiricalBellman hat = empirical_bellman_detail(*q_hat_, acting, *regressor_, *ledger_mdp_,
                                                        gamma, config_.ledger_m_min, RewardScale::kRaw);
  const QTable exact = bellman_apply(*q_hat_, *ledger_mdp_, gamma, RewardScale::kRaw);
  QTable next = regressor_table(state_.context);

  ledger.step.push_back(state_.t);
  ledger.eps_stat.push_back(sup_distance(hat.values, exact));
  ledger.eps_icl.push_back(sup_distance(next, hat.values));
  ledger.m_min.push_back(*std::min_element(hat.revisits.begin(), hat.revisits.end()));
  double total = 0.0;
  for (std::size_t m : hat.revisits) total += static_cast<double>(m);
  ledger.m_mean.push_back(total / static_cast<double>(hat.revisits.size()));
  ledger.sup_error.push_back(sup_distance(next, *q_star_));
  ledger.theorem1_bound.push_back(
      theorem1_rhs(ledger.size(), ledger.initial_error, ledger.eps_icl, ledger.eps_stat, gamma));
  q_hat_ = std::move(next);
}

void Engine::step() {
  if (state_.phase == Phase::kWarmup) {
    warmup_step();
  } else {
    icl_step();
  }
}

RunResult Engine::run() {
  while (state_.t < config_.total_steps) step();
  result_.qnet = online_;
  result_.final_context = state_.context;
  if (config_.keep_buffer) result_.buffer.assign(buffer_.entries().begin(), buffer_.entries().end());
  return result_;
}

double Engine::oracle_residual() const {
  if (!q_star_) return 0.0;
  return sup_distance(bellman_apply(*q_star_, *ledger_mdp_, config_.gamma, RewardScale::kRaw), *q_star_);
}

RunResult run(const EngineConfig& config) {
  Engine engine(config);
  return engine.run();
}

}  // namespace tabql
