#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "tabql/mdp.hpp"
#include "tabql/replay.hpp"
#include "tabql/rng.hpp"

namespace tabql {

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
};

/// Fully connected Q-network: ReLU hidden layers, linear output per action.
struct QNetParams {
  std::vector<DenseLayer> layers;

  std::size_t input_dim() const { return static_cast<std::size_t>(layers.front().weight.cols()); }
  std::size_t output_dim() const { return static_cast<std::size_t>(layers.back().weight.rows()); }
  std::size_t parameter_count() const;
  bool all_finite() const;
  bool operator==(const QNetParams& other) const;

  double& flat(std::size_t i);
  double flat(std::size_t i) const;
};

/// Symmetric uniform init with bound 1/sqrt(fan_in).
QNetParams init_qnet(std::size_t input_dim, std::span<const std::size_t> hidden,
                     std::size_t n_actions, Rng& rng);
QNetParams zero_qnet(std::size_t input_dim, std::span<const std::size_t> hidden,
                     std::size_t n_actions);

struct EpsilonSchedule {
  double eps_start = 1.0;
  double eps_end = 0.01;
  std::size_t decay_steps = 10000;

  /// Linear from eps_start to eps_end over decay_steps, then flat.
  double at(std::size_t step) const;
};

struct SgdConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  std::size_t target_sync_period = 500;
  /// Global gradient-norm clip; 0 disables clipping.
  double max_grad_norm = 10.0;
  EpsilonSchedule epsilon;

  void validate() const;
};

/// Column-per-sample minibatch in network-input space.
struct TdBatch {
  Eigen::MatrixXd states;       // input_dim x B
  Eigen::MatrixXd next_states;  // input_dim x B
  std::vector<std::size_t> actions;
  Eigen::VectorXd rewards;
  std::vector<bool> terminal;

  std::size_t size() const { return actions.size(); }
};

TdBatch make_batch(std::span<const Transition* const> transitions, const EnvInfo& info);

Eigen::VectorXd forward(const QNetParams& params, std::span<const double> input);
Eigen::MatrixXd forward_batch(const QNetParams& params, const Eigen::MatrixXd& inputs);

/// Mean over the batch of (Q(s,a) - y)^2 with y = r + gamma * max_a' Q_target(s',a'),
/// no bootstrap at terminals.
double td_loss(const QNetParams& params, const QNetParams& target, const TdBatch& batch,
               double gamma);

/// Analytic gradient of td_loss with the target held fixed.
QNetParams td_gradient(const QNetParams& params, const QNetParams& target, const TdBatch& batch,
                       double gamma, double* loss = nullptr);

/// One (optionally norm-clipped) SGD step. Throws on an empty batch.
QNetParams td_update(const QNetParams& params, const QNetParams& target, const TdBatch& batch,
                     double gamma, const SgdConfig& cfg);

struct GradCheckOptions {
  double step = 1e-5;
  std::size_t n_samples = 64;
  /// Negative control: flips the sign of the analytic gradient before comparing.
  bool corrupt_gradient = false;
};

/// Max relative error between analytic and central-difference gradients over a
/// random parameter subset.
double grad_check(const QNetParams& params, const QNetParams& target, const TdBatch& batch,
                  double gamma, Rng& rng, const GradCheckOptions& options = {});

/// Argmax with lowest-index tie-break.
std::size_t argmax(std::span<const double> values);

std::size_t epsilon_greedy(std::span<const double> q_values, std::size_t step,
                           const EpsilonSchedule& schedule, Rng& rng);

/// Flat binary checkpoint: "TQNP", u32 version, u32 layer count, per layer
/// u64 rows and cols, then row-major weights and biases as little-endian f64.
void save_params(const QNetParams& params, std::ostream& out);
QNetParams load_params(std::istream& in);

}  // namespace tabql
