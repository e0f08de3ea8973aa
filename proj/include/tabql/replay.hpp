#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "tabql/mdp.hpp"
#include "tabql/rng.hpp"

namespace tabql {

/// One experience record. q_labels holds the teacher's values for every action
/// of `state` at push time; q_labels[action_taken] is the single-label view.
struct Transition {
  EnvState state;
  std::size_t action_taken = 0;
  double reward = 0.0;
  EnvState next_state;
  std::vector<double> q_labels;
  std::size_t timestep = 0;
  std::size_t episode_id = 0;
  std::optional<double> episode_return;
};

/// Bounded FIFO of transitions.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  /// Throws std::invalid_argument if the label width changes or timesteps do
  /// not strictly increase.
  void push(Transition t);

  /// Fills episode_return on the trailing entries that belong to `episode_id`.
  void close_episode(std::size_t episode_id, double episode_return);

  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return entries_.empty(); }
  const Transition& operator[](std::size_t i) const { return entries_[i]; }
  const std::deque<Transition>& entries() const { return entries_; }

  /// `n` indices drawn uniformly with replacement.
  std::vector<std::size_t> sample_indices(std::size_t n, Rng& rng) const;

 private:
  std::deque<Transition> entries_;
  std::size_t capacity_;
};

enum class SamplingStrategy { kRecent, kUniform };

/// Immutable window of transitions expanded into one labelled row per action.
/// Rows follow descending recency of their source transitions; standardization
/// statistics and a (timestep, action) summation order are computed once.
class Context {
 public:
  Context() = default;
  Context(std::vector<Transition> sources, std::size_t size_k, const FeatureOptions& features);
  /// Context over pre-labelled rows with no source transitions; rows are summed
  /// in the given order. Used by batch fitters.
  static Context from_rows(std::vector<FeatureRow> rows, const FeatureOptions& features);

  const std::vector<FeatureRow>& rows() const { return rows_; }
  const std::vector<Transition>& source_transitions() const { return sources_; }
  std::size_t size_k() const { return size_k_; }
  std::size_t n_actions() const { return n_actions_; }
  std::size_t n_features() const { return n_features_; }
  const FeatureOptions& feature_options() const { return features_; }
  bool empty() const { return rows_.empty(); }
  /// Process-unique id of this snapshot; copies share it.
  std::uint64_t serial() const { return serial_; }

  const std::vector<double>& feature_mean() const { return mean_; }
  const std::vector<double>& feature_scale() const { return scale_; }
  /// Row indices sorted by (source timestep, action).
  const std::vector<std::size_t>& summation_order() const { return order_; }
  /// Row-major standardized feature matrix.
  std::span<const double> standardized_row(std::size_t i) const {
    return {standardized_.data() + i * n_features_, n_features_};
  }
  std::vector<double> standardize(std::span<const double> features) const;
  /// Position of the action id within a feature row.
  std::size_t action_column() const;
  /// Action id of row i.
  std::size_t row_action(std::size_t i) const { return row_action_[i]; }

 private:
  void finalize_statistics();

  std::vector<Transition> sources_;
  std::vector<FeatureRow> rows_;
  std::vector<std::size_t> row_action_;
  std::size_t size_k_ = 0;
  std::size_t n_actions_ = 0;
  std::size_t n_features_ = 0;
  FeatureOptions features_;
  std::vector<double> mean_;
  std::vector<double> scale_;
  std::vector<double> standardized_;
  std::vector<std::size_t> order_;
  std::uint64_t serial_ = 0;
};

/// Throws std::invalid_argument on an empty buffer or k == 0.
Context build_context(const ReplayBuffer& buffer, std::size_t k, SamplingStrategy strategy,
                      const FeatureOptions& features, Rng* rng = nullptr);

using QLabelFn = std::function<std::vector<double>(const EnvState&)>;

struct FilterParams {
  double tau = std::numeric_limits<double>::infinity();
  double theta = -std::numeric_limits<double>::infinity();
  /// Spread of attainable Q-values; the staleness test compares against tau * value_range.
  double value_range = 1.0;
};

/// Keeps transitions whose episode cleared `theta` and whose stored labels
/// are within tau * value_range of the current teacher. May return an empty context.
Context quality_filter(const Context& context, const QLabelFn& current_labels,
                       const FilterParams& params);

struct NextStateDistribution {
  std::vector<std::pair<EnvState, double>> outcomes;
  /// Number of context transitions matching the query (s, a) exactly.
  std::size_t exact_matches = 0;
};

/// Empirical successor distribution for (state, action): uniform over exact
/// matches, else over the m_min nearest transitions in standardized features.
NextStateDistribution empirical_next_dist(const Context& context, const EnvState& state,
                                          std::size_t action, std::size_t m_min);

}  // namespace tabql
