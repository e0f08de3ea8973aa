#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tabql/mdp.hpp"
#include "tabql/qtable.hpp"
#include "tabql/regressor.hpp"
#include "tabql/replay.hpp"

namespace tabql {

/// (TQ)(s,a) = r(s,a) + gamma * sum_s' P(s'|s,a) max_a' Q(s',a').
QTable bellman_apply(const QTable& q, const MdpSpec& mdp, double gamma,
                     RewardScale scale = RewardScale::kNormalized);

/// Iterates T until successive iterates differ by at most tol * (1 - gamma) / gamma,
/// which gives ||Q - Q*|| <= tol and ||TQ - Q|| <= tol. Requires gamma in (0, 1).
QTable value_iteration(const MdpSpec& mdp, double gamma, double tol,
                       RewardScale scale = RewardScale::kNormalized);

/// Q(s,a) <- (1 - alpha) Q(s,a) + alpha (r + gamma max_a' Q(s_next, a')).
QTable tabular_q_update(QTable q, std::size_t s, std::size_t a, double r, std::size_t s_next,
                        double alpha, double gamma);

std::vector<std::size_t> greedy_policy(const QTable& q);

/// Exact V^pi by iterative policy evaluation to machine precision.
std::vector<double> evaluate_policy(const MdpSpec& mdp, std::span<const std::size_t> policy,
                                    double gamma, RewardScale scale = RewardScale::kNormalized);

std::vector<double> state_values(const QTable& q);

/// Regressor predictions for every (s, a) of a discrete environment, queried
/// with episode_step 0 and the state itself as initial tag.
QTable predict_table(const Regressor& regressor, const Context& context, EnvId env,
                     std::size_t n_states, std::size_t n_actions);

struct EmpiricalBellman {
  QTable values;
  /// Per (s, a): exact context matches, or m_min when the nearest-neighbour fallback was used.
  std::vector<std::size_t> revisits;
};

/// (T_C Q)(s,a) = sum_s' P_C(s'|s,a) [r(s,a) + gamma f(C, s', argmax_a' Q(s',a'))].
EmpiricalBellman empirical_bellman_detail(const QTable& q, const Context& context,
                                          const Regressor& regressor, const MdpSpec& mdp,
                                          double gamma, std::size_t m_min,
                                          RewardScale scale = RewardScale::kNormalized);
QTable empirical_bellman_apply(const QTable& q, const Context& context, const Regressor& regressor,
                               const MdpSpec& mdp, double gamma, std::size_t m_min,
                               RewardScale scale = RewardScale::kNormalized);

struct ErrorTerms {
  QTable contraction;  // T Q_t - Q*, with Q* = T Q*
  QTable statistical;  // T_C Q_t - T Q_t
  QTable icl;          // Q_next - T_C Q_t

  /// Largest entry of |sum of terms - (q_next - q_star)|.
  double identity_residual(const QTable& q_next, const QTable& q_star) const;
};

ErrorTerms error_decompose(const QTable& q_t, const QTable& q_next, const QTable& q_star,
                           const Context& context, const Regressor& regressor, const MdpSpec& mdp,
                           double gamma, std::size_t m_min = 1,
                           RewardScale scale = RewardScale::kNormalized);

enum class BoundWeighting {
  /// gamma^(t-1-tau), the weights produced by unrolling the one-step recursion.
  kUnrolled,
  /// gamma^tau: the oldest error carries weight 1.
  kStatement,
};

/// gamma^t * initial_err + sum_{tau<t} w(tau) (eps_icl(tau) + eps_stat(tau)).
double theorem1_rhs(std::size_t t, double initial_err, std::span<const double> eps_icl,
                    std::span<const double> eps_stat, double gamma,
                    BoundWeighting weighting = BoundWeighting::kUnrolled);

/// gamma / (1 - gamma) * sqrt(2 log(|S||A| / delta) / m) + eps_label.
double eps_stat_bound(double gamma, std::size_t n_states, std::size_t n_actions, double delta,
                      double m, double eps_label);

struct SampleComplexity {
  double context_cost = 0.0;  // c * 18 gamma^2 / ((1-gamma)^4 eps^2) * log(|S||A| / delta)
  double horizon = 0.0;       // ceil(log(3 / ((1-gamma) eps)) / log(1 / gamma))
  double total() const { return context_cost + horizon; }
};

SampleComplexity theorem2_terms(double gamma, double epsilon, std::size_t n_states,
                                std::size_t n_actions, double delta, double c_visit);
double theorem2_samples(double gamma, double epsilon, std::size_t n_states,
                        std::size_t n_actions, double delta, double c_visit);

/// Whether eps_icl and eps_label both satisfy eps <= (1 - gamma) * epsilon / 3.
bool theorem2_preconditions(double gamma, double epsilon, double eps_icl, double eps_label);

/// 2 gamma (eps_icl + eps_label) / (1-gamma)^2
///   + 2 gamma^2 / (1-gamma)^3 * sqrt(2 log(|S||A| / delta) / m_min).
double asymptotic_suboptimality(double eps_icl, double eps_label, double gamma,
                                std::size_t n_states, std::size_t n_actions, double delta,
                                double m_min);

/// 2 gamma / (1 - gamma) * q_error.
double performance_difference_bound(double q_error, double gamma);

/// Per-step error bookkeeping for an in-context run against the exact optimum.
struct ErrorLedger {
  double eps_label = 0.0;
  double initial_error = 0.0;
  std::vector<std::size_t> step;        // global step of each entry
  std::vector<double> eps_icl;          // ||Q_{tau+1} - T_C Q_tau||
  std::vector<double> eps_stat;         // ||T_C Q_tau - T Q_tau||
  std::vector<std::size_t> m_min;       // smallest per-query revisit count
  std::vector<double> m_mean;
  std::vector<double> sup_error;        // ||Q_{tau+1} - Q*||
  std::vector<double> theorem1_bound;   // theorem1_rhs(tau + 1, ...)

  std::size_t size() const { return step.size(); }
  /// Fraction of entries with sup_error <= theorem1_bound + slack.
  double bound_hold_rate(double slack = 0.0) const;
};

}  // namespace tabql
