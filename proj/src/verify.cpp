#include "tabql/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <sstream>

#include "tabql/config.hpp"
#include "tabql/engine.hpp"
#include "tabql/oracle.hpp"
#include "tabql/qnet.hpp"

namespace tabql {

namespace {

QTable random_table(std::size_t n_states, std::size_t n_actions, double scale, Rng& rng) {
  QTable q(n_states, n_actions);
  for (double& v : q.values()) v = rng.uniform(-scale, scale);
  return q;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(3);
  os << v;
  return os.str();
}

CheckResult contraction_check(Rng& rng) {
  double worst = -1.0;
  double vi_residual = 0.0;
  for (std::size_t m = 0; m < 20; ++m) {
    const std::size_t ns = 2 + rng.uniform_index(7);
    const std::size_t na = 1 + rng.uniform_index(4);
    const double gamma = rng.uniform(0.1, 0.99);
    const MdpSpec mdp = random_mdp(ns, na, gamma, rng);
    for (std::size_t k = 0; k < 10; ++k) {
      const QTable a = random_table(ns, na, 10.0, rng);
      const QTable b = random_table(ns, na, 10.0, rng);
      const double lhs = sup_distance(bellman_apply(a, mdp, gamma), bellman_apply(b, mdp, gamma));
      worst = std::max(worst, lhs - gamma * sup_distance(a, b));
    }
    const QTable star = value_iteration(mdp, gamma, 1e-10);
    vi_residual = std::max(vi_residual, sup_distance(bellman_apply(star, mdp, gamma), star));
  }
  return {"bellman contraction (200 pairs) and fixed point",
          worst <= 1e-12 && vi_residual <= 1e-10,
          "max excess " + fmt(worst) + ", VI residual " + fmt(vi_residual)};
}

CheckResult decomposition_check(Rng& rng) {
  double worst = 0.0;
  for (std::size_t k = 0; k < 100; ++k) {
    const std::size_t ns = 2 + rng.uniform_index(5);
    const std::size_t na = 1 + rng.uniform_index(3);
    const double gamma = rng.uniform(0.1, 0.95);
    auto mdp = std::make_shared<MdpSpec>(random_mdp(ns, na, gamma, rng));
    EnvOptions opts;
    opts.id = EnvId::kTabular;
    opts.model = mdp;
    opts.horizon = 20;
    Environment env(opts, rng.next_u64());
    std::vector<Transition> data;
    EnvState s = env.reset();
    for (std::size_t t = 0; t < 60; ++t) {
      const std::size_t a = rng.uniform_index(na);
      const StepResult res = env.step(s, a);
      Transition tr{s, a, res.reward, res.next, {}, t, 0, std::nullopt};
      for (std::size_t j = 0; j < na; ++j) tr.q_labels.push_back(rng.uniform(-5.0, 5.0));
      data.push_back(std::move(tr));
      s = res.done ? env.reset() : res.next;
    }
    FeatureOptions features;
    features.include_timestep = false;
    const Context ctx(std::move(data), 60, features);
    const KnnRegressor knn(3);
    const QTable q_t = random_table(ns, na, 5.0, rng);
    const QTable q_next = random_table(ns, na, 5.0, rng);
    const QTable q_star = value_iteration(*mdp, gamma, 1e-10);
    const ErrorTerms terms = error_decompose(q_t, q_next, q_star, ctx, knn, *mdp, gamma);
    worst = std::max(worst, terms.identity_residual(q_next, q_star));
  }
  return {"error decomposition identity (100 triples)", worst <= 1e-12, "max residual " + fmt(worst)};
}

CheckResult theorem1_check() {
  const ExperimentConfig cfg = Settings::defaults("tabular").to_experiment();
  EngineConfig e = cfg.engine;
  e.seed = cfg.seeds.front();
  const RunResult r = run(e);
  if (!r.ledger || r.ledger->size() == 0) return {"recursive error bound trace", false, "no ledger entries"};
  const double rate = r.ledger->bound_hold_rate();
  return {"recursive error bound trace (2-state MDP)", rate == 1.0,
          std::to_string(r.ledger->size()) + " steps, hold rate " + fmt(rate)};
}

CheckResult gradient_check(Rng& rng) {
  double worst = 0.0;
  double control = std::numeric_limits<double>::infinity();
  EnvOptions opts;
  opts.id = EnvId::kCartPole;
  const EnvInfo info = env_info(opts);
  for (std::size_t k = 0; k < 20; ++k) {
    std::vector<std::size_t> hidden(1 + rng.uniform_index(2));
    for (auto& h : hidden) h = 3 + rng.uniform_index(6);
    const QNetParams params = init_qnet(info.net_input_dim, hidden, info.n_actions, rng);
    const QNetParams target = init_qnet(info.net_input_dim, hidden, info.n_actions, rng);
    Environment env(opts, rng.next_u64());
    std::vector<Transition> data;
    EnvState s = env.reset();
    const std::size_t batch = 2 + rng.uniform_index(14);
    for (std::size_t t = 0; t < batch; ++t) {
      const std::size_t a = rng.uniform_index(info.n_actions);
      const StepResult res = env.step(s, a);
      data.push_back({s, a, res.reward, res.next, {0.0, 0.0}, t, 0, std::nullopt});
      s = res.done ? env.reset() : res.next;
    }
    std::vector<const Transition*> ptrs;
    for (const auto& tr : data) ptrs.push_back(&tr);
    const TdBatch b = make_batch(ptrs, info);
    worst = std::max(worst, grad_check(params, target, b, 0.99, rng));
    GradCheckOptions bad;
    bad.corrupt_gradient = true;
    control = std::min(control, grad_check(params, target, b, 0.99, rng, bad));
  }
  return {"td gradient check (20 configs) with negative control", worst < 1e-4 && control > 1e-2,
          "max rel err " + fmt(worst) + ", corrupted min " + fmt(control)};
}

CheckResult gate_check() {
  const GateConfig g;
  std::vector<double> window(30, 10.0);
  bool ok = g.window_W == 30 && g.G_min == 20 && g.delta_margin == 1.0;
  ok = ok && !switch_gate(window, g);  // all equal: nothing strictly above the quantile
  std::vector<double> mixed;
  for (int i = 0; i < 15; ++i) mixed.push_back(10.0);
  for (int i = 0; i < 15; ++i) mixed.push_back(0.0);
  ok = ok && quantile(mixed, 0.5) == 5.0 && !switch_gate(mixed, g);
  std::vector<double> mostly_high(20, 10.0);
  mostly_high.insert(mostly_high.end(), 10, 0.0);
  GateConfig low = g;
  low.quantile_q = 9.5 / 29.0;
  ok = ok && quantile(mostly_high, low.quantile_q) == 5.0 && switch_gate(mostly_high, low);
  ok = ok && !switch_gate(std::span<const double>(mostly_high).first(29), low);
  const RefitConfig r;
  ok = ok && r.rho_stale == 0.25 && r.e_min == 1;
  ok = ok && refit_gate(250, 0, 1, 0, 1000, r) && !refit_gate(249, 0, 1, 0, 1000, r) &&
       !refit_gate(1000, 0, 0, 0, 1000, r);
  return {"switch and refit gate boundaries", ok, ok ? "all cases" : "mismatch"};
}

}  // namespace

std::vector<CheckResult> theory_suite(std::uint64_t seed) {
  Rng rng(seed, Stream::kHarness);
  std::vector<CheckResult> out;
  out.push_back(contraction_check(rng));
  out.push_back(decomposition_check(rng));
  out.push_back(theorem1_check());
  out.push_back(gradient_check(rng));
  out.push_back(gate_check());
  return out;
}

}  // namespace tabql
