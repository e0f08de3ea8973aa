#include "tabql/regressor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "tabql/bridge_client.hpp"
#include "tabql/qnet.hpp"

namespace tabql {

namespace {

void check_inputs(const Context& context, std::span<const FeatureRow> queries) {
  if (context.empty()) throw std::invalid_argument("predict: empty context");
  for (const auto& q : queries) {
    if (q.features.size() != context.n_features()) {
      throw std::invalid_argument("predict: query feature length mismatch");
    }
  }
}

// Squared standardized distance from a query to every row that shares its
// action, keyed by summation position. The action id is categorical, so rows
// of other actions only take part when the context has none for this action.
std::vector<std::pair<double, std::size_t>> distances(const Context& context,
                                                      std::span<const double> raw,
                                                      std::span<const double> z) {
  const auto& order = context.summation_order();
  const double action = raw[context.action_column()];
  bool any_match = false;
  for (std::size_t p = 0; p < order.size() && !any_match; ++p) {
    any_match = static_cast<double>(context.row_action(order[p])) == action;
  }
  std::vector<std::pair<double, std::size_t>> d;
  d.reserve(order.size());
  for (std::size_t p = 0; p < order.size(); ++p) {
    if (any_match && static_cast<double>(context.row_action(order[p])) != action) continue;
    const auto row = context.standardized_row(order[p]);
    double acc = 0.0;
    for (std::size_t j = 0; j < z.size(); ++j) {
      const double diff = z[j] - row[j];
      acc += diff * diff;
    }
    d.emplace_back(acc, p);
  }
  return d;
}

double label_at(const Context& context, std::size_t position) {
  return *context.rows()[context.summation_order()[position]].label;
}

}  // namespace

std::string_view to_string(RegressorType type) {
  switch (type) {
    case RegressorType::kKnn: return "knn";
    case RegressorType::kKernel: return "kernel";
    case RegressorType::kBridge: return "bridge";
    case RegressorType::kExactTable: return "exact_table";
  }
  return "unknown";
}

RegressorType parse_regressor_type(std::string_view name) {
  for (RegressorType t : {RegressorType::kKnn, RegressorType::kKernel, RegressorType::kBridge,
                          RegressorType::kExactTable}) {
    if (to_string(t) == name) return t;
  }
  throw std::invalid_argument("unknown regressor kind: " + std::string(name));
}

void RegressorKind::validate() const {
  if (knn_k == 0) throw std::invalid_argument("regressor.knn_k must be at least 1");
  if (!(kernel_bandwidth > 0.0)) throw std::invalid_argument("regressor.bandwidth must be positive");
  if (kind == RegressorType::kBridge && bridge_endpoint.empty()) {
    throw std::invalid_argument("regressor.endpoint required for the bridge regressor");
  }
}

KnnRegressor::KnnRegressor(std::size_t k) : k_(k) {
  if (k == 0) throw std::invalid_argument("KnnRegressor: k must be at least 1");
}

std::vector<double> KnnRegressor::predict(const Context& context,
                                          std::span<const FeatureRow> queries) const {
  check_inputs(context, queries);
  std::vector<double> out;
  out.reserve(queries.size());
  for (const auto& q : queries) {
    const auto z = context.standardize(q.features);
    auto d = distances(context, q.features, z);

    double zero_sum = 0.0;
    std::size_t zero_count = 0;
    for (const auto& [dist, p] : d) {
      if (dist == 0.0) {
        zero_sum += label_at(context, p);
        ++zero_count;
      }
    }
    if (zero_count > 0) {
      out.push_back(zero_sum / static_cast<double>(zero_count));
      continue;
    }

    const std::size_t k = std::min(k_, d.size());
    std::nth_element(d.begin(), d.begin() + static_cast<long>(k - 1), d.end());
    std::sort(d.begin(), d.begin() + static_cast<long>(k),
              [](const auto& a, const auto& b) { return a.second < b.second; });
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      const double w = 1.0 / std::sqrt(d[i].first);
      num += w * label_at(context, d[i].second);
      den += w;
    }
    out.push_back(num / den);
  }
  return out;
}

KernelRegressor::KernelRegressor(double bandwidth) : bandwidth_(bandwidth) {
  if (!(bandwidth > 0.0)) throw std::invalid_argument("KernelRegressor: bandwidth must be positive");
}

std::vector<double> KernelRegressor::predict(const Context& context,
                                             std::span<const FeatureRow> queries) const {
  check_inputs(context, queries);
  std::vector<double> out;
  out.reserve(queries.size());
  const double inv_two_h2 = 1.0 / (2.0 * bandwidth_ * bandwidth_);
  for (const auto& q : queries) {
    const auto z = context.standardize(q.features);
    const auto d = distances(context, q.features, z);
    double closest = d.front().first;
    for (const auto& e : d) closest = std::min(closest, e.first);
    // Shifting by the closest distance keeps at least one weight at exactly 1.
    double num = 0.0;
    double den = 0.0;
    for (const auto& [dist, p] : d) {
      const double w = std::exp(-(dist - closest) * inv_two_h2);
      num += w * label_at(context, p);
      den += w;
    }
    out.push_back(num / den);
  }
  return out;
}

ExactTableRegressor::ExactTableRegressor(QTable table, EnvId env)
    : table_(std::move(table)), env_(env) {
  if (!is_discrete(env)) throw std::invalid_argument("ExactTableRegressor: discrete env required");
}

std::vector<double> ExactTableRegressor::predict(const Context& context,
                                                 std::span<const FeatureRow> queries) const {
  check_inputs(context, queries);
  const std::size_t dim = decode_state(env_, 0).size();
  std::vector<double> out;
  out.reserve(queries.size());
  for (const auto& q : queries) {
    const std::span<const double> f(q.features);
    const std::size_t s = encode_state(env_, f.first(dim));
    const auto a = static_cast<std::size_t>(f[dim]);
    if (s >= table_.n_states() || a >= table_.n_actions()) {
      throw std::invalid_argument("ExactTableRegressor: query outside the table");
    }
    out.push_back(table_(s, a));
  }
  return out;
}

BridgeRegressor::BridgeRegressor(const std::string& endpoint)
    : client_(std::make_unique<BridgeClient>(endpoint)) {}

BridgeRegressor::~BridgeRegressor() = default;

std::vector<double> BridgeRegressor::predict(const Context& context,
                                             std::span<const FeatureRow> queries) const {
  check_inputs(context, queries);
  const std::size_t n_feat = context.n_features();
  if (sent_context_ != context.serial()) {
    std::vector<double> rows;
    std::vector<double> labels;
    rows.reserve(context.rows().size() * n_feat);
    for (const auto& r : context.rows()) {
      rows.insert(rows.end(), r.features.begin(), r.features.end());
      labels.push_back(*r.label);
    }
    client_->set_context(rows, n_feat, labels);
    sent_context_ = context.serial();
  }
  std::vector<double> flat;
  flat.reserve(queries.size() * n_feat);
  for (const auto& q : queries) flat.insert(flat.end(), q.features.begin(), q.features.end());
  return client_->query(flat, n_feat);
}

std::unique_ptr<Regressor> make_regressor(const RegressorKind& kind, EnvId env,
                                          const QTable* table) {
  kind.validate();
  switch (kind.kind) {
    case RegressorType::kKnn: return std::make_unique<KnnRegressor>(kind.knn_k);
    case RegressorType::kKernel: return std::make_unique<KernelRegressor>(kind.kernel_bandwidth);
    case RegressorType::kBridge: return std::make_unique<BridgeRegressor>(kind.bridge_endpoint);
    case RegressorType::kExactTable:
      if (table == nullptr) throw std::invalid_argument("exact_table regressor needs a Q-table");
      return std::make_unique<ExactTableRegressor>(*table, env);
  }
  throw std::invalid_argument("make_regressor: unknown kind");
}

std::vector<double> predict_actions(const Regressor& regressor, const Context& context,
                                    const EnvState& state, std::size_t n_actions) {
  std::vector<FeatureRow> queries;
  queries.reserve(n_actions);
  for (std::size_t a = 0; a < n_actions; ++a) {
    queries.push_back(encode_features(state, a, context.feature_options()));
  }
  return regressor.predict(context, queries);
}

std::size_t greedy_action(const Regressor& regressor, const Context& context,
                          const EnvState& state, std::size_t n_actions) {
  const auto q = predict_actions(regressor, context, state, n_actions);
  return argmax(q);
}

}  // namespace tabql
