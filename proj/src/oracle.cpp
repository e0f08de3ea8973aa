#include "tabql/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "tabql/qnet.hpp"

namespace tabql {

namespace {

void check_gamma_open(double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::domain_error("gamma must lie in (0, 1)");
}

void check_shape(const QTable& q, const MdpSpec& mdp) {
  if (q.n_states() != mdp.n_states || q.n_actions() != mdp.n_actions) {
    throw std::invalid_argument("QTable dimensions do not match the MDP");
  }
}

double finite_or_throw(double value, const char* what) {
  if (!std::isfinite(value)) throw std::overflow_error(std::string(what) + ": result not finite");
  return value;
}

double log_pairs_over_delta(std::size_t n_states, std::size_t n_actions, double delta) {
  if (n_states == 0 || n_actions == 0) throw std::domain_error("|S||A| must be positive");
  if (!(delta > 0.0 && delta < 1.0)) throw std::domain_error("delta must lie in (0, 1)");
  return std::log(static_cast<double>(n_states) * static_cast<double>(n_actions) / delta);
}

}  // namespace

QTable bellman_apply(const QTable& q, const MdpSpec& mdp, double gamma, RewardScale scale) {
  check_shape(q, mdp);
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::domain_error("gamma must lie in [0, 1)");
  const auto& r = mdp.rewards(scale);
  std::vector<double> v(mdp.n_states);
  for (std::size_t s = 0; s < mdp.n_states; ++s) {
    const auto row = q.row(s);
    v[s] = *std::max_element(row.begin(), row.end());
  }
  QTable out(mdp.n_states, mdp.n_actions);
  for (std::size_t s = 0; s < mdp.n_states; ++s) {
    for (std::size_t a = 0; a < mdp.n_actions; ++a) {
      double expected = 0.0;
      for (const Outcome& o : mdp.transition[mdp.row(s, a)]) expected += o.probability * v[o.next_state];
      out(s, a) = r[mdp.row(s, a)] + gamma * expected;
    }
  }
  return out;
}

QTable value_iteration(const MdpSpec& mdp, double gamma, double tol, RewardScale scale) {
  check_gamma_open(gamma);
  if (!(tol > 0.0)) throw std::domain_error("value_iteration: tol must be positive");
  const double stop = tol * (1.0 - gamma) / gamma;
  QTable q(mdp.n_states, mdp.n_actions);
  constexpr std::size_t kMaxIterations = 1'000'000;
  for (std::size_t it = 0; it < kMaxIterations; ++it) {
    QTable next = bellman_apply(q, mdp, gamma, scale);
    const double diff = sup_distance(next, q);
    q = std::move(next);
    if (diff <= stop) return q;
  }
  throw std::runtime_error("value_iteration: iteration cap reached");
}

QTable tabular_q_update(QTable q, std::size_t s, std::size_t a, double r, std::size_t s_next,
                        double alpha, double gamma) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::domain_error("alpha must lie in [0, 1]");
  const auto next = q.row(s_next);
  const double target = r + gamma * *std::max_element(next.begin(), next.end());
  q(s, a) = (1.0 - alpha) * q(s, a) + alpha * target;
  return q;
}

std::vector<std::size_t> greedy_policy(const QTable& q) {
  std::vector<std::size_t> pi(q.n_states());
  for (std::size_t s = 0; s < q.n_states(); ++s) pi[s] = argmax(q.row(s));
  return pi;
}

std::vector<double> state_values(const QTable& q) {
  std::vector<double> v(q.n_states());
  for (std::size_t s = 0; s < q.n_states(); ++s) {
    const auto row = q.row(s);
    v[s] = *std::max_element(row.begin(), row.end());
  }
  return v;
}

std::vector<double> evaluate_policy(const MdpSpec& mdp, std::span<const std::size_t> policy,
                                    double gamma, RewardScale scale) {
  check_gamma_open(gamma);
  if (policy.size() != mdp.n_states) throw std::invalid_argument("evaluate_policy: policy size");
  const auto& r = mdp.rewards(scale);
  std::vector<double> v(mdp.n_states, 0.0);
  for (std::size_t it = 0; it < 1'000'000; ++it) {
    std::vector<double> next(mdp.n_states);
    double diff = 0.0;
    for (std::size_t s = 0; s < mdp.n_states; ++s) {
      const std::size_t row = mdp.row(s, policy[s]);
      double expected = 0.0;
      for (const Outcome& o : mdp.transition[row]) expected += o.probability * v[o.next_state];
      next[s] = r[row] + gamma * expected;
      diff = std::max(diff, std::abs(next[s] - v[s]));
    }
    v = std::move(next);
    if (diff <= 1e-14 * std::max(1.0, *std::max_element(v.begin(), v.end()))) return v;
  }
  throw std::runtime_error("evaluate_policy: iteration cap reached");
}

QTable predict_table(const Regressor& regressor, const Context& context, EnvId env,
                     std::size_t n_states, std::size_t n_actions) {
  std::vector<FeatureRow> queries;
  queries.reserve(n_states * n_actions);
  for (std::size_t s = 0; s < n_states; ++s) {
    EnvState st;
    st.env_id = env;
    st.discrete_index = s;
    st.initial_tag = static_cast<std::int64_t>(s);
    for (std::size_t a = 0; a < n_actions; ++a) {
      queries.push_back(encode_features(st, a, context.feature_options()));
    }
  }
  const auto pred = regressor.predict(context, queries);
  QTable q(n_states, n_actions);
  q.values() = pred;
  return q;
}

EmpiricalBellman empirical_bellman_detail(const QTable& q, const Context& context,
                                          const Regressor& regressor, const MdpSpec& mdp,
                                          double gamma, std::size_t m_min, RewardScale scale) {
  check_shape(q, mdp);
  if (context.source_transitions().empty()) {
    throw std::invalid_argument("empirical_bellman_apply: context has no transitions");
  }
  const auto& r = mdp.rewards(scale);
  const EnvId env = context.source_transitions().front().state.env_id;

  struct Pending {
    std::size_t row;
    double weight;
  };
  std::vector<FeatureRow> queries;
  std::vector<Pending> pending;
  EmpiricalBellman out{QTable(mdp.n_states, mdp.n_actions), {}};
  out.revisits.resize(mdp.n_states * mdp.n_actions);
  for (std::size_t s = 0; s < mdp.n_states; ++s) {
    EnvState st;
    st.env_id = env;
    st.discrete_index = s;
    st.initial_tag = static_cast<std::int64_t>(s);
    for (std::size_t a = 0; a < mdp.n_actions; ++a) {
      const std::size_t row = mdp.row(s, a);
      const NextStateDistribution dist = empirical_next_dist(context, st, a, m_min);
      out.revisits[row] = dist.exact_matches > 0 ? dist.exact_matches : m_min;
      out.values(s, a) = r[row];
      if (gamma == 0.0) continue;
      for (const auto& [next, w] : dist.outcomes) {
        const std::size_t best = argmax(q.row(next.index()));
        queries.push_back(encode_features(next, best, context.feature_options()));
        pending.push_back({row, w});
      }
    }
  }
  if (!queries.empty()) {
    const auto f = regressor.predict(context, queries);
    for (std::size_t i = 0; i < pending.size(); ++i) {
      out.values.values()[pending[i].row] += gamma * pending[i].weight * f[i];
    }
  }
  return out;
}

QTable empirical_bellman_apply(const QTable& q, const Context& context, const Regressor& regressor,
                               const MdpSpec& mdp, double gamma, std::size_t m_min,
                               RewardScale scale) {
  return empirical_bellman_detail(q, context, regressor, mdp, gamma, m_min, scale).values;
}

double ErrorTerms::identity_residual(const QTable& q_next, const QTable& q_star) const {
  double worst = 0.0;
  for (std::size_t i = 0; i < q_next.values().size(); ++i) {
    const double sum = contraction.values()[i] + statistical.values()[i] + icl.values()[i];
    worst = std::max(worst, std::abs(sum - (q_next.values()[i] - q_star.values()[i])));
  }
  return worst;
}

ErrorTerms error_decompose(const QTable& q_t, const QTable& q_next, const QTable& q_star,
                           const Context& context, const Regressor& regressor, const MdpSpec& mdp,
                           double gamma, std::size_t m_min, RewardScale scale) {
  if (!q_t.same_shape(q_next) || !q_t.same_shape(q_star)) {
    throw std::invalid_argument("error_decompose: dimension mismatch");
  }
  const QTable t_q = bellman_apply(q_t, mdp, gamma, scale);
  const QTable t_hat = empirical_bellman_apply(q_t, context, regressor, mdp, gamma, m_min, scale);
  ErrorTerms terms{t_q, t_hat, q_next};
  for (std::size_t i = 0; i < t_q.values().size(); ++i) {
    terms.contraction.values()[i] = t_q.values()[i] - q_star.values()[i];
    terms.statistical.values()[i] = t_hat.values()[i] - t_q.values()[i];
    terms.icl.values()[i] = q_next.values()[i] - t_hat.values()[i];
  }
  return terms;
}

double theorem1_rhs(std::size_t t, double initial_err, std::span<const double> eps_icl,
                    std::span<const double> eps_stat, double gamma, BoundWeighting weighting) {
  if (eps_icl.size() < t || eps_stat.size() < t) {
    throw std::invalid_argument("theorem1_rhs: series shorter than t");
  }
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::domain_error("gamma must lie in [0, 1)");
  double total = std::pow(gamma, static_cast<double>(t)) * initial_err;
  for (std::size_t tau = 0; tau < t; ++tau) {
    const double exponent = weighting == BoundWeighting::kUnrolled
                                ? static_cast<double>(t - 1 - tau)
                                : static_cast<double>(tau);
    total += std::pow(gamma, exponent) * (eps_icl[tau] + eps_stat[tau]);
  }
  return total;
}

double eps_stat_bound(double gamma, std::size_t n_states, std::size_t n_actions, double delta,
                      double m, double eps_label) {
  check_gamma_open(gamma);
  if (!(m >= 1.0)) throw std::domain_error("eps_stat_bound: m must be at least 1");
  if (!(eps_label >= 0.0)) throw std::domain_error("eps_stat_bound: eps_label must be nonnegative");
  const double l = log_pairs_over_delta(n_states, n_actions, delta);
  const double conc = std::isinf(m) ? 0.0 : gamma / (1.0 - gamma) * std::sqrt(2.0 * l / m);
  return finite_or_throw(conc + eps_label, "eps_stat_bound");
}

SampleComplexity theorem2_terms(double gamma, double epsilon, std::size_t n_states,
                                std::size_t n_actions, double delta, double c_visit) {
  check_gamma_open(gamma);
  if (!(epsilon > 0.0)) throw std::domain_error("theorem2: epsilon must be positive");
  if (!(c_visit > 0.0)) throw std::domain_error("theorem2: c_visit must be positive");
  const double l = log_pairs_over_delta(n_states, n_actions, delta);
  const double one_minus = 1.0 - gamma;
  SampleComplexity out;
  out.context_cost = finite_or_throw(
      c_visit * 18.0 * gamma * gamma / (std::pow(one_minus, 4) * epsilon * epsilon) * l,
      "theorem2_samples");
  const double ratio = std::log(3.0 / (one_minus * epsilon)) / std::log(1.0 / gamma);
  out.horizon = finite_or_throw(std::max(0.0, std::ceil(ratio)), "theorem2_samples");
  return out;
}

double theorem2_samples(double gamma, double epsilon, std::size_t n_states,
                        std::size_t n_actions, double delta, double c_visit) {
  return theorem2_terms(gamma, epsilon, n_states, n_actions, delta, c_visit).total();
}

bool theorem2_preconditions(double gamma, double epsilon, double eps_icl, double eps_label) {
  const double limit = (1.0 - gamma) * epsilon / 3.0;
  return eps_icl <= limit && eps_label <= limit;
}

double asymptotic_suboptimality(double eps_icl, double eps_label, double gamma,
                                std::size_t n_states, std::size_t n_actions, double delta,
                                double m_min) {
  check_gamma_open(gamma);
  if (!(eps_icl >= 0.0 && eps_label >= 0.0)) throw std::domain_error("errors must be nonnegative");
  if (!(m_min >= 1.0)) throw std::domain_error("m_min must be at least 1");
  const double l = log_pairs_over_delta(n_states, n_actions, delta);
  const double one_minus = 1.0 - gamma;
  const double bias = 2.0 * gamma * (eps_icl + eps_label) / (one_minus * one_minus);
  const double residual = std::isinf(m_min)
                              ? 0.0
                              : 2.0 * gamma * gamma / std::pow(one_minus, 3) * std::sqrt(2.0 * l / m_min);
  return finite_or_throw(bias + residual, "asymptotic_suboptimality");
}

double performance_difference_bound(double q_error, double gamma) {
  check_gamma_open(gamma);
  return 2.0 * gamma / (1.0 - gamma) * q_error;
}

double ErrorLedger::bound_hold_rate(double slack) const {
  if (sup_error.empty()) return 1.0;
  std::size_t ok = 0;
  for (std::size_t i = 0; i < sup_error.size(); ++i) {
    if (sup_error[i] <= theorem1_bound[i] + slack) ++ok;
  }
  return static_cast<double>(ok) / static_cast<double>(sup_error.size());
}

}  // namespace tabql
