#include <gtest/gtest.h>

#include <cmath>
#include <deque>
#include <limits>

#include "tabql/oracle.hpp"
#include "tabql/rng.hpp"

using namespace tabql;

namespace {

MdpSpec single_state(double reward, double gamma) {
  MdpSpec m;
  m.n_states = 1;
  m.n_actions = 1;
  m.transition = {{{0, 1.0}}};
  m.reward = {reward};
  m.raw_reward = {reward};
  m.terminal = {false};
  m.gamma = gamma;
  return m;
}

// Deterministic chain 0 -> 1 -> 1 with both actions; rewards differ by action.
MdpSpec two_state_chain() {
  MdpSpec m;
  m.n_states = 2;
  m.n_actions = 2;
  m.transition = {{{1, 1.0}}, {{0, 1.0}}, {{1, 1.0}}, {{0, 1.0}}};
  m.reward = {0.2, 0.5, 1.0, 0.0};
  m.raw_reward = m.reward;
  m.terminal = {false, false};
  m.gamma = 0.8;
  return m;
}

// Brute-force double loop over (s, a) and outcomes.
QTable brute_bellman(const QTable& q, const MdpSpec& m, double gamma) {
  QTable out(m.n_states, m.n_actions);
  for (std::size_t s = 0; s < m.n_states; ++s) {
    for (std::size_t a = 0; a < m.n_actions; ++a) {
      double v = m.reward[s * m.n_actions + a];
      for (const Outcome& o : m.transition[s * m.n_actions + a]) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t b = 0; b < m.n_actions; ++b) best = std::max(best, q(o.next_state, b));
        v += gamma * o.probability * best;
      }
      out(s, a) = v;
    }
  }
  return out;
}

QTable random_table(std::size_t s, std::size_t a, Rng& rng, double scale) {
  QTable q(s, a);
  for (double& v : q.values()) v = scale * (2.0 * rng.uniform01() - 1.0);
  return q;
}

EnvState tab_state(std::size_t s) {
  EnvState st;
  st.env_id = EnvId::kTabular;
  st.discrete_index = s;
  st.initial_tag = static_cast<std::int64_t>(s);
  return st;
}

Transition tab_transition(std::size_t s, std::size_t a, std::size_t next, std::size_t t) {
  Transition tr;
  tr.state = tab_state(s);
  tr.action_taken = a;
  tr.next_state = tab_state(next);
  tr.q_labels = {0.0, 0.0};
  tr.timestep = t;
  return tr;
}

}  // namespace

TEST(Bellman, GammaZeroGivesRewards) {
  Rng rng(1);
  const MdpSpec m = random_mdp(5, 3, 0.5, rng);
  const QTable t = bellman_apply(random_table(5, 3, rng, 10.0), m, 0.0);
  for (std::size_t i = 0; i < t.values().size(); ++i) EXPECT_EQ(t.values()[i], m.reward[i]);
}

TEST(Bellman, SingleStateGeometricSeries) {
  const MdpSpec m = single_state(1.0, 0.5);
  EXPECT_DOUBLE_EQ(bellman_apply(QTable(1, 1), m, 0.5)(0, 0), 1.0);
  EXPECT_NEAR(value_iteration(m, 0.5, 1e-12)(0, 0), 2.0, 1e-12);
}

TEST(Bellman, MatchesBruteForce) {
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const MdpSpec m = random_mdp(5, 3, 0.9, rng);
    const QTable q = random_table(5, 3, rng, 5.0);
    EXPECT_LE(sup_distance(bellman_apply(q, m, 0.9), brute_bellman(q, m, 0.9)), 1e-12);
  }
}

TEST(Bellman, DimensionMismatchThrows) {
  Rng rng(2);
  const MdpSpec m = random_mdp(3, 2, 0.9, rng);
  EXPECT_THROW(bellman_apply(QTable(2, 2), m, 0.9), std::invalid_argument);
}

TEST(Bellman, ContractionOnRandomPairs) {
  Rng rng(11);
  for (int k = 0; k < 20; ++k) {
    const double gamma = 0.5 + 0.49 * rng.uniform01();
    const MdpSpec m = random_mdp(4, 3, gamma, rng);
    for (int p = 0; p < 10; ++p) {
      const QTable a = random_table(4, 3, rng, 20.0), b = random_table(4, 3, rng, 20.0);
      EXPECT_LE(sup_distance(bellman_apply(a, m, gamma), bellman_apply(b, m, gamma)),
                gamma * sup_distance(a, b) + 1e-12);
    }
  }
}

TEST(ValueIteration, ResidualWithinTolerance) {
  Rng rng(3);
  const MdpSpec m = random_mdp(6, 2, 0.95, rng);
  const QTable q = value_iteration(m, 0.95, 1e-8);
  EXPECT_LE(sup_distance(bellman_apply(q, m, 0.95), q), 1e-8);
}

TEST(ValueIteration, FrozenLakeShortestPath) {
  EnvOptions opt;
  opt.id = EnvId::kFrozenLake4;
  const double gamma = 0.99;
  const MdpSpec m = enumerate_model(opt, gamma);
  const QTable q = value_iteration(m, gamma, 1e-12);

  // Breadth-first search over the layout for the number of moves to the goal.
  const std::string layout = "SFFFFHFHFFFHHFFG";
  std::vector<int> dist(16, -1);
  std::deque<int> frontier = {0};
  dist[0] = 0;
  while (!frontier.empty()) {
    const int c = frontier.front();
    frontier.pop_front();
    if (layout[static_cast<std::size_t>(c)] == 'H' || c == 15) continue;
    const int r = c / 4, col = c % 4;
    const int nbr[4][2] = {{r - 1, col}, {r + 1, col}, {r, col - 1}, {r, col + 1}};
    for (const auto& n : nbr) {
      if (n[0] < 0 || n[0] > 3 || n[1] < 0 || n[1] > 3) continue;
      const int idx = n[0] * 4 + n[1];
      if (dist[static_cast<std::size_t>(idx)] < 0) {
        dist[static_cast<std::size_t>(idx)] = dist[static_cast<std::size_t>(c)] + 1;
        frontier.push_back(idx);
      }
    }
  }
  ASSERT_EQ(dist[15], 6);
  EXPECT_NEAR(state_values(q)[0], std::pow(gamma, dist[15] - 1), 1e-9);
}

TEST(ValueIteration, TerminalOnlyGivesReward) {
  MdpSpec m = single_state(0.0, 0.9);
  m.n_actions = 2;
  m.transition = {{}, {}};
  m.reward = {0.3, 0.7};
  m.raw_reward = m.reward;
  m.terminal = {true};
  const QTable q = value_iteration(m, 0.9, 1e-12);
  EXPECT_DOUBLE_EQ(q(0, 0), 0.3);
  EXPECT_DOUBLE_EQ(q(0, 1), 0.7);
}

TEST(ValueIteration, GammaOneRejected) {
  EnvOptions opt;
  opt.id = EnvId::kCliffWalking;
  const MdpSpec m = enumerate_model(opt, 0.99);
  EXPECT_THROW(value_iteration(m, 1.0, 1e-6), std::domain_error);
}

TEST(TabularQ, UpdateExamples) {
  QTable q(2, 2);
  q(0, 1) = 2.0;
  q(1, 0) = 2.0;
  q(1, 1) = -1.0;
  const QTable updated = tabular_q_update(q, 0, 1, 1.0, 1, 0.5, 0.9);
  EXPECT_NEAR(updated(0, 1), 2.4, 1e-12);
  EXPECT_EQ(updated(0, 0), q(0, 0));
  EXPECT_EQ(updated(1, 0), q(1, 0));
  EXPECT_EQ(updated(1, 1), q(1, 1));

  EXPECT_TRUE(tabular_q_update(q, 0, 1, 1.0, 1, 0.0, 0.9).values() == q.values());
  EXPECT_DOUBLE_EQ(tabular_q_update(QTable(2, 2), 1, 0, 1.0, 0, 1.0, 0.9)(1, 0), 1.0);
}

TEST(TabularQ, VisitCountStepSizeConverges) {
  Rng rng(5);
  const double gamma = 0.5;
  const MdpSpec m = random_mdp(3, 2, gamma, rng);
  const QTable q_star = value_iteration(m, gamma, 1e-12);
  QTable q(3, 2);
  std::vector<std::size_t> visits(6, 0);
  for (int sweep = 0; sweep < 20000; ++sweep) {
    for (std::size_t s = 0; s < 3; ++s) {
      for (std::size_t a = 0; a < 2; ++a) {
        const auto& outs = m.transition[m.row(s, a)];
        double u = rng.uniform01();
        std::size_t next = outs.back().next_state;
        for (const Outcome& o : outs) {
          if (u < o.probability) {
            next = o.next_state;
            break;
          }
          u -= o.probability;
        }
        const double alpha = 1.0 / double(++visits[m.row(s, a)]);
        q = tabular_q_update(std::move(q), s, a, m.reward[m.row(s, a)], next, alpha, gamma);
      }
    }
  }
  EXPECT_LT(sup_distance(q, q_star), 0.05);
}

TEST(EmpiricalBellman, GammaZeroIsReward) {
  const MdpSpec m = two_state_chain();
  const Context c({tab_transition(0, 0, 1, 0)}, 1, FeatureOptions{false, true});
  const ExactTableRegressor f(QTable(2, 2, 9.0), EnvId::kTabular);
  const QTable t = empirical_bellman_apply(QTable(2, 2), c, f, m, 0.0, 1);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(t.values()[i], m.reward[i]);
}

TEST(EmpiricalBellman, FixedPointAtOracle) {
  const MdpSpec m = two_state_chain();
  const double gamma = m.gamma;
  const QTable q_star = value_iteration(m, gamma, 1e-13);
  std::vector<Transition> full;
  std::size_t t = 0;
  for (std::size_t s = 0; s < 2; ++s)
    for (std::size_t a = 0; a < 2; ++a)
      full.push_back(tab_transition(s, a, m.transition[m.row(s, a)][0].next_state, t++));
  const Context c(full, full.size(), FeatureOptions{false, true});
  const ExactTableRegressor f(q_star, EnvId::kTabular);
  const QTable t_hat = empirical_bellman_apply(q_star, c, f, m, gamma, 1);
  EXPECT_LE(sup_distance(t_hat, bellman_apply(q_star, m, gamma)), 1e-12);
  EXPECT_LE(sup_distance(t_hat, q_star), 1e-11);
}

TEST(EmpiricalBellman, HandExpansionOnTwoStates) {
  const MdpSpec m = two_state_chain();
  const double g = 0.8;
  // (0,0) seen twice with different successors; the others once each.
  const std::vector<Transition> rows = {tab_transition(0, 0, 1, 0), tab_transition(0, 0, 0, 1),
                                        tab_transition(0, 1, 0, 2), tab_transition(1, 0, 1, 3),
                                        tab_transition(1, 1, 1, 4)};
  const Context c(rows, rows.size(), FeatureOptions{false, true});
  QTable q(2, 2);
  q(0, 0) = 1.0;
  q(0, 1) = 3.0;  // greedy action in state 0 is 1
  q(1, 0) = 2.0;
  q(1, 1) = 2.0;  // tie broken toward action 0
  QTable fq(2, 2);
  fq(0, 0) = 10.0;
  fq(0, 1) = 20.0;
  fq(1, 0) = 30.0;
  fq(1, 1) = 40.0;
  const ExactTableRegressor f(fq, EnvId::kTabular);
  const EmpiricalBellman eb = empirical_bellman_detail(q, c, f, m, g, 1);
  EXPECT_NEAR(eb.values(0, 0), 0.2 + g * (0.5 * 30.0 + 0.5 * 20.0), 1e-12);
  EXPECT_NEAR(eb.values(0, 1), 0.5 + g * 20.0, 1e-12);
  EXPECT_NEAR(eb.values(1, 0), 1.0 + g * 30.0, 1e-12);
  EXPECT_NEAR(eb.values(1, 1), 0.0 + g * 30.0, 1e-12);
  EXPECT_EQ(eb.revisits[0], 2u);
  EXPECT_EQ(eb.revisits[1], 1u);
}

TEST(ErrorDecompose, ZeroAtOptimumAndIdentityHolds) {
  const MdpSpec m = two_state_chain();
  const QTable q_star = value_iteration(m, m.gamma, 1e-13);
  std::vector<Transition> full;
  std::size_t t = 0;
  for (std::size_t s = 0; s < 2; ++s)
    for (std::size_t a = 0; a < 2; ++a)
      full.push_back(tab_transition(s, a, m.transition[m.row(s, a)][0].next_state, t++));
  const Context c(full, full.size(), FeatureOptions{false, true});
  const ExactTableRegressor f(q_star, EnvId::kTabular);
  const ErrorTerms zero = error_decompose(q_star, q_star, q_star, c, f, m, m.gamma);
  EXPECT_LE(sup_norm(zero.contraction), 1e-11);
  EXPECT_LE(sup_norm(zero.statistical), 1e-11);
  EXPECT_LE(sup_norm(zero.icl), 1e-11);

  Rng rng(9);
  for (int k = 0; k < 50; ++k) {
    const QTable qt = random_table(2, 2, rng, 5.0), qn = random_table(2, 2, rng, 5.0);
    const ExactTableRegressor g(random_table(2, 2, rng, 5.0), EnvId::kTabular);
    const ErrorTerms e = error_decompose(qt, qn, q_star, c, g, m, m.gamma);
    EXPECT_LE(e.identity_residual(qn, q_star), 1e-12);
  }
  EXPECT_THROW(error_decompose(QTable(3, 2), q_star, q_star, c, f, m, m.gamma),
               std::invalid_argument);
}

TEST(Theorem1, Examples) {
  const std::vector<double> icl = {0.1, 0.2, 0.3}, stat = {0.05, 0.05, 0.05};
  EXPECT_DOUBLE_EQ(theorem1_rhs(0, 4.0, icl, stat, 0.9), 4.0);
  EXPECT_DOUBLE_EQ(theorem1_rhs(1, 4.0, icl, stat, 0.0), 0.15);
  // Unrolled weights: the newest error carries weight 1.
  const double g = 0.5;
  EXPECT_NEAR(theorem1_rhs(3, 1.0, icl, stat, g),
              g * g * g + g * g * 0.15 + g * 0.25 + 0.35, 1e-15);
  EXPECT_NEAR(theorem1_rhs(3, 1.0, icl, stat, g, BoundWeighting::kStatement),
              g * g * g + 0.15 + g * 0.25 + g * g * 0.35, 1e-15);
  EXPECT_THROW(theorem1_rhs(4, 1.0, icl, stat, g), std::invalid_argument);
}

TEST(Theorem1, GeometricLimit) {
  const std::size_t t = 2000;
  const std::vector<double> icl(t, 0.02), stat(t, 0.03);
  EXPECT_NEAR(theorem1_rhs(t, 7.0, icl, stat, 0.95), 0.05 / 0.05, 1e-9);
}

TEST(EpsStat, Examples) {
  EXPECT_NEAR(eps_stat_bound(0.9, 16, 4, 0.05, 100, 0.0), 9.0 * std::sqrt(2.0 * std::log(1280.0) / 100.0),
              1e-12);
  EXPECT_NEAR(eps_stat_bound(0.9, 16, 4, 0.05, 100, 0.0), 3.404, 5e-4);
  EXPECT_LT(eps_stat_bound(0.9, 16, 4, 0.05, 1e18, 0.0), 1e-7);
  EXPECT_NEAR(eps_stat_bound(0.9, 16, 4, 0.05, 1e18, 0.3), 0.3, 1e-7);
  EXPECT_THROW(eps_stat_bound(0.9, 16, 4, 0.05, 0.5, 0.0), std::domain_error);
  EXPECT_THROW(eps_stat_bound(0.9, 16, 4, 1.0, 10, 0.0), std::domain_error);
}

TEST(Theorem2, TermsAndScaling) {
  const double g = 0.9, eps = 0.5;
  const SampleComplexity s = theorem2_terms(g, eps, 48, 4, 0.05, 1.0);
  const double first = 18.0 * g * g / (std::pow(1 - g, 4) * eps * eps) * std::log(192.0 / 0.05);
  const double second = std::ceil(std::log(3.0 / ((1 - g) * eps)) / std::log(1.0 / g));
  EXPECT_NEAR(s.context_cost, first, 1e-9 * first);
  EXPECT_DOUBLE_EQ(s.horizon, second);
  EXPECT_DOUBLE_EQ(theorem2_samples(g, eps, 48, 4, 0.05, 1.0), first + second);

  const SampleComplexity d = theorem2_terms(g, eps, 48, 4, 0.05, 2.0);
  EXPECT_NEAR(d.context_cost, 2.0 * s.context_cost, 1e-9 * first);
  EXPECT_EQ(d.horizon, s.horizon);

  const SampleComplexity wide = theorem2_terms(g, 50.0, 48, 4, 0.05, 1.0);
  EXPECT_LT(wide.context_cost, s.context_cost);

  EXPECT_TRUE(theorem2_preconditions(g, eps, 0.01, 0.01));
  EXPECT_FALSE(theorem2_preconditions(g, eps, 0.02, 0.0));
  EXPECT_THROW(theorem2_terms(1.0, eps, 48, 4, 0.05, 1.0), std::domain_error);
}

TEST(Asymptotic, Limits) {
  const double g = 0.9;
  EXPECT_LT(asymptotic_suboptimality(0.0, 0.0, g, 16, 4, 0.05, 1e30), 1e-9);
  EXPECT_NEAR(asymptotic_suboptimality(0.0, 0.2, g, 16, 4, 0.05, 1e30),
              2 * g * 0.2 / ((1 - g) * (1 - g)), 1e-6);
  const double m = 50.0;
  const double expect = 2 * g * (0.1 + 0.2) / std::pow(1 - g, 2) +
                        2 * g * g / std::pow(1 - g, 3) * std::sqrt(2 * std::log(64 / 0.05) / m);
  EXPECT_NEAR(asymptotic_suboptimality(0.1, 0.2, g, 16, 4, 0.05, m), expect, 1e-9 * expect);
  EXPECT_DOUBLE_EQ(performance_difference_bound(0.5, 0.9), 2 * 0.9 * 0.5 / 0.1);
}

TEST(Ledger, HoldRate) {
  ErrorLedger l;
  l.step = {1, 2, 3, 4};
  l.sup_error = {0.1, 0.5, 0.2, 0.3};
  l.theorem1_bound = {0.2, 0.4, 0.2, 0.35};
  EXPECT_DOUBLE_EQ(l.bound_hold_rate(), 0.75);
  EXPECT_DOUBLE_EQ(l.bound_hold_rate(0.2), 1.0);
}
