#include "tabql/replay.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace tabql {

namespace {

bool same_state(const EnvState& a, const EnvState& b) {
  if (a.discrete_index || b.discrete_index) return a.discrete_index == b.discrete_index;
  return a.continuous == b.continuous;
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    d += diff * diff;
  }
  return d;
}

std::atomic<std::uint64_t> g_context_serial{0};

}  // namespace

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("ReplayBuffer: capacity must be positive");
}

void ReplayBuffer::push(Transition t) {
  if (!entries_.empty()) {
    if (t.q_labels.size() != entries_.back().q_labels.size()) {
      throw std::invalid_argument("ReplayBuffer: q_labels width changed");
    }
    if (t.timestep <= entries_.back().timestep) {
      throw std::invalid_argument("ReplayBuffer: timesteps must strictly increase");
    }
  }
  if (t.q_labels.empty()) throw std::invalid_argument("ReplayBuffer: empty q_labels");
  entries_.push_back(std::move(t));
  if (entries_.size() > capacity_) entries_.pop_front();
}

void ReplayBuffer::close_episode(std::size_t episode_id, double episode_return) {
  for (auto it = entries_.rbegin(); it != entries_.rend() && it->episode_id == episode_id; ++it) {
    it->episode_return = episode_return;
  }
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t n, Rng& rng) const {
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = rng.uniform_index(entries_.size());
  return idx;
}

Context::Context(std::vector<Transition> sources, std::size_t size_k,
                 const FeatureOptions& features)
    : sources_(std::move(sources)), size_k_(size_k), features_(features),
      serial_(++g_context_serial) {
  std::stable_sort(sources_.begin(), sources_.end(),
                   [](const Transition& a, const Transition& b) { return a.timestep > b.timestep; });
  if (sources_.empty()) return;
  n_actions_ = sources_.front().q_labels.size();
  for (std::size_t i = 0; i < sources_.size(); ++i) {
    for (std::size_t a = 0; a < n_actions_; ++a) {
      FeatureRow row = encode_features(sources_[i].state, a, features_);
      row.label = sources_[i].q_labels.at(a);
      rows_.push_back(std::move(row));
      row_action_.push_back(a);
    }
  }
  finalize_statistics();
  // Sources are in descending timestep, so ascending (timestep, action) is
  // the reversed transition order with actions kept ascending.
  order_.reserve(rows_.size());
  for (std::size_t i = sources_.size(); i-- > 0;) {
    for (std::size_t a = 0; a < n_actions_; ++a) order_.push_back(i * n_actions_ + a);
  }
}


void Context::finalize_statistics() {
  n_features_ = rows_.front().features.size();
  const double n = static_cast<double>(rows_.size());
  mean_.assign(n_features_, 0.0);
  scale_.assign(n_features_, 0.0);
  for (const auto& r : rows_) {
    for (std::size_t j = 0; j < n_features_; ++j) mean_[j] += r.features[j];
  }
  for (double& m : mean_) m /= n;
  for (const auto& r : rows_) {
    for (std::size_t j = 0; j < n_features_; ++j) {
      const double d = r.features[j] - mean_[j];
      scale_[j] += d * d;
    }
  }
  for (double& s : scale_) {
    s = std::sqrt(s / n);
    if (!(s > 1e-12)) s = 1.0;
  }
  standardized_.reserve(rows_.size() * n_features_);
  for (const auto& r : rows_) {
    for (std::size_t j = 0; j < n_features_; ++j) {
      standardized_.push_back((r.features[j] - mean_[j]) / scale_[j]);
    }
  }
}

Context Context::from_rows(std::vector<FeatureRow> rows, const FeatureOptions& features) {
  Context c;
  c.features_ = features;
  c.serial_ = ++g_context_serial;
  c.rows_ = std::move(rows);
  if (c.rows_.empty()) return c;
  const std::size_t width = c.rows_.front().features.size();
  const std::size_t action_col =
      width - 1 - (features.include_timestep ? 1 : 0) - (features.include_initial_tag ? 1 : 0);
  for (const auto& r : c.rows_) {
    if (r.features.size() != width) throw std::invalid_argument("Context::from_rows: ragged rows");
    if (!r.label) throw std::invalid_argument("Context::from_rows: unlabeled row");
    const auto a = static_cast<std::size_t>(r.features[action_col]);
    c.row_action_.push_back(a);
    c.n_actions_ = std::max(c.n_actions_, a + 1);
  }
  c.size_k_ = c.rows_.size();
  c.finalize_statistics();
  c.order_.resize(c.rows_.size());
  std::iota(c.order_.begin(), c.order_.end(), 0);
  return c;
}

std::vector<double> Context::standardize(std::span<const double> features) const {
  if (features.size() != n_features_) {
    throw std::invalid_argument("Context: query feature length mismatch");
  }
  std::vector<double> z(n_features_);
  for (std::size_t j = 0; j < n_features_; ++j) z[j] = (features[j] - mean_[j]) / scale_[j];
  return z;
}

Context build_context(const ReplayBuffer& buffer, std::size_t k, SamplingStrategy strategy,
                      const FeatureOptions& features, Rng* rng) {
  if (buffer.empty()) throw std::invalid_argument("build_context: empty buffer");
  if (k == 0) throw std::invalid_argument("build_context: K must be at least 1");
  const std::size_t take = std::min(k, buffer.size());
  std::vector<Transition> chosen;
  chosen.reserve(take);
  if (strategy == SamplingStrategy::kRecent) {
    // Timesteps increase along the FIFO, so the tail is the most recent.
    for (std::size_t i = buffer.size() - take; i < buffer.size(); ++i) chosen.push_back(buffer[i]);
  } else {
    if (rng == nullptr) throw std::invalid_argument("build_context: uniform strategy needs an rng");
    std::vector<std::size_t> idx(buffer.size());
    std::iota(idx.begin(), idx.end(), 0);
    // Partial Fisher-Yates: first `take` slots are a uniform sample without replacement.
    for (std::size_t i = 0; i < take; ++i) {
      const std::size_t j = i + rng->uniform_index(idx.size() - i);
      std::swap(idx[i], idx[j]);
    }
    for (std::size_t i = 0; i < take; ++i) chosen.push_back(buffer[idx[i]]);
  }
  return Context(std::move(chosen), k, features);
}

std::size_t Context::action_column() const {
  return n_features_ - 1 - (features_.include_timestep ? 1 : 0) -
         (features_.include_initial_tag ? 1 : 0);
}

Context quality_filter(const Context& context, const QLabelFn& current_labels,
                       const FilterParams& params) {
  if (params.tau < 0.0) throw std::invalid_argument("quality_filter: tau must be nonnegative");
  const double tolerance = params.tau * params.value_range;
  std::vector<Transition> kept;
  for (const Transition& t : context.source_transitions()) {
    if (t.episode_return && *t.episode_return <= params.theta) continue;
    if (std::isfinite(tolerance)) {
      const std::vector<double> now = current_labels(t.state);
      double worst = 0.0;
      for (std::size_t a = 0; a < t.q_labels.size(); ++a) {
        worst = std::max(worst, std::abs(t.q_labels[a] - now.at(a)));
      }
      if (worst > tolerance) continue;
    }
    kept.push_back(t);
  }
  return Context(std::move(kept), context.size_k(), context.feature_options());
}

NextStateDistribution empirical_next_dist(const Context& context, const EnvState& state,
                                          std::size_t action, std::size_t m_min) {
  if (context.empty()) throw std::invalid_argument("empirical_next_dist: empty context");
  if (m_min == 0) throw std::invalid_argument("empirical_next_dist: m_min must be at least 1");
  const auto& sources = context.source_transitions();
  std::vector<std::size_t> members;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    if (sources[i].action_taken == action && same_state(sources[i].state, state)) {
      members.push_back(i);
    }
  }
  NextStateDistribution dist;
  dist.exact_matches = members.size();
  if (members.empty()) {
    const FeatureRow q = encode_features(state, action, context.feature_options());
    const std::vector<double> z = context.standardize(q.features);
    std::vector<std::pair<double, std::size_t>> by_distance;
    by_distance.reserve(sources.size());
    for (std::size_t i = 0; i < sources.size(); ++i) {
      const std::size_t row = i * context.n_actions() + sources[i].action_taken;
      by_distance.emplace_back(squared_distance(z, context.standardized_row(row)), i);
    }
    const std::size_t take = std::min(m_min, by_distance.size());
    std::partial_sort(by_distance.begin(), by_distance.begin() + static_cast<long>(take),
                      by_distance.end());
    for (std::size_t i = 0; i < take; ++i) members.push_back(by_distance[i].second);
  }
  const double w = 1.0 / static_cast<double>(members.size());
  for (std::size_t i : members) {
    const EnvState& next = sources[i].next_state;
    auto it = std::find_if(dist.outcomes.begin(), dist.outcomes.end(),
                           [&](const auto& o) { return same_state(o.first, next); });
    if (it == dist.outcomes.end()) {
      dist.outcomes.emplace_back(next, w);
    } else {
      it->second += w;
    }
  }
  return dist;
}

}  // namespace tabql
