#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tabql/mdp.hpp"
#include "tabql/qtable.hpp"
#include "tabql/replay.hpp"

namespace tabql {

class BridgeClient;

enum class RegressorType { kKnn, kKernel, kBridge, kExactTable };

std::string_view to_string(RegressorType type);
RegressorType parse_regressor_type(std::string_view name);

struct RegressorKind {
  RegressorType kind = RegressorType::kKnn;
  std::size_t knn_k = 8;
  /// Gaussian bandwidth on standardized features.
  double kernel_bandwidth = 1.0;
  std::string bridge_endpoint;

  void validate() const;
};

/// Frozen in-context regressor: predictions depend only on (context, queries).
class Regressor {
 public:
  virtual ~Regressor() = default;
  /// One prediction per query row. Throws std::invalid_argument on an empty
  /// context or a feature-length mismatch.
  virtual std::vector<double> predict(const Context& context,
                                      std::span<const FeatureRow> queries) const = 0;
};

/// Inverse-distance weighted mean of the k nearest labels. Zero-distance rows,
/// when present, are averaged and everything else ignored.
class KnnRegressor final : public Regressor {
 public:
  explicit KnnRegressor(std::size_t k);
  std::vector<double> predict(const Context& context,
                              std::span<const FeatureRow> queries) const override;

 private:
  std::size_t k_;
};

/// Gaussian-weighted mean of all labels.
class KernelRegressor final : public Regressor {
 public:
  explicit KernelRegressor(double bandwidth);
  std::vector<double> predict(const Context& context,
                              std::span<const FeatureRow> queries) const override;

 private:
  double bandwidth_;
};

/// Test oracle: ignores the context and looks the decoded (state, action) up in a table.
class ExactTableRegressor final : public Regressor {
 public:
  ExactTableRegressor(QTable table, EnvId env);
  std::vector<double> predict(const Context& context,
                              std::span<const FeatureRow> queries) const override;
  const QTable& table() const { return table_; }

 private:
  QTable table_;
  EnvId env_;
};

/// Forwards context and queries to an external process over the line protocol.
class BridgeRegressor final : public Regressor {
 public:
  explicit BridgeRegressor(const std::string& endpoint);
  ~BridgeRegressor() override;
  std::vector<double> predict(const Context& context,
                              std::span<const FeatureRow> queries) const override;

 private:
  std::unique_ptr<BridgeClient> client_;
  mutable std::uint64_t sent_context_ = 0;
};

/// `table` is required for kExactTable.
std::unique_ptr<Regressor> make_regressor(const RegressorKind& kind, EnvId env,
                                          const QTable* table = nullptr);

/// Q-value predictions for every action of `state`.
std::vector<double> predict_actions(const Regressor& regressor, const Context& context,
                                    const EnvState& state, std::size_t n_actions);

/// argmax over predict_actions with lowest-index tie-break.
std::size_t greedy_action(const Regressor& regressor, const Context& context,
                          const EnvState& state, std::size_t n_actions);

}  // namespace tabql
