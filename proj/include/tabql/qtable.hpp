#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace tabql {

/// Dense state x action value table.
class QTable {
 public:
  QTable() = default;
  QTable(std::size_t n_states, std::size_t n_actions, double fill = 0.0)
      : n_states_(n_states), n_actions_(n_actions), values_(n_states * n_actions, fill) {}

  std::size_t n_states() const { return n_states_; }
  std::size_t n_actions() const { return n_actions_; }

  double& operator()(std::size_t s, std::size_t a) { return values_[s * n_actions_ + a]; }
  double operator()(std::size_t s, std::size_t a) const { return values_[s * n_actions_ + a]; }

  std::span<const double> row(std::size_t s) const {
    return {values_.data() + s * n_actions_, n_actions_};
  }
  std::span<double> row(std::size_t s) { return {values_.data() + s * n_actions_, n_actions_}; }

  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }

  bool same_shape(const QTable& other) const {
    return n_states_ == other.n_states_ && n_actions_ == other.n_actions_;
  }

 private:
  std::size_t n_states_ = 0;
  std::size_t n_actions_ = 0;
  std::vector<double> values_;
};

/// Largest absolute entry of a - b. Throws on shape mismatch.
inline double sup_distance(const QTable& a, const QTable& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("sup_distance: dimension mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.values().size(); ++i) {
    const double d = a.values()[i] - b.values()[i];
    m = std::max(m, d < 0 ? -d : d);
  }
  return m;
}

inline double sup_norm(const QTable& a) {
  double m = 0.0;
  for (double v : a.values()) m = std::max(m, v < 0 ? -v : v);
  return m;
}

}  // namespace tabql
