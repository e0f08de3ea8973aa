#include "tabql/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <numeric>
#include <stdexcept>
#include <thread>

namespace tabql {

namespace {

std::vector<CurveRow> to_curve(std::uint64_t seed, const std::vector<EpisodeRecord>& episodes) {
  std::vector<CurveRow> rows;
  rows.reserve(episodes.size());
  for (const auto& e : episodes) {
    rows.push_back({seed, e.episode, e.end_step, e.episode_return, std::string(to_string(e.phase))});
  }
  return rows;
}

struct Rollout {
  double episode_return = 0.0;
  std::size_t length = 0;
};

template <typename Policy>
Rollout rollout(Environment& env, const std::optional<InitialCondition>& start, Policy&& policy) {
  Rollout out;
  EnvState s = env.reset(start);
  while (true) {
    const StepResult res = env.step(s, policy(s));
    out.episode_return += res.reward;
    ++out.length;
    if (res.done) return out;
    s = res.next;
  }
}

// Per-pair mean of the targets; pairs without data stay at zero.
QTable fit_table(const std::vector<Transition>& data, const std::vector<double>& targets,
                 std::size_t n_states, std::size_t n_actions) {
  QTable sum(n_states, n_actions);
  QTable count(n_states, n_actions);
  for (std::size_t i = 0; i < data.size(); ++i) {
    sum(data[i].state.index(), data[i].action_taken) += targets[i];
    count(data[i].state.index(), data[i].action_taken) += 1.0;
  }
  for (std::size_t i = 0; i < sum.values().size(); ++i) {
    if (count.values()[i] > 0.0) sum.values()[i] /= count.values()[i];
  }
  return sum;
}

std::vector<std::size_t> taxi_starts() {
  std::vector<std::size_t> starts;
  for (std::size_t row = 0; row < 5; ++row) {
    for (std::size_t col = 0; col < 5; ++col) {
      for (std::size_t pass = 0; pass < 4; ++pass) {
        for (std::size_t dest = 0; dest < 4; ++dest) {
          if (pass != dest) starts.push_back(encode_taxi(row, col, pass, dest));
        }
      }
    }
  }
  return starts;
}

void shuffle(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.uniform_index(i)]);
}

}  // namespace

std::vector<CurveRow> ExperimentResult::curve() const {
  std::vector<CurveRow> all;
  for (const auto& r : runs) all.insert(all.end(), r.curve.begin(), r.curve.end());
  return all;
}

SeedRun run_tabular_q(const ExperimentConfig& config, std::uint64_t seed, QTable* final_q) {
  const EngineConfig& e = config.engine;
  Environment env(e.env, seed);
  const EnvInfo& info = env.info();
  Rng explore(seed, Stream::kExploration);
  QTable q(info.n_states, info.n_actions);
  QTable visits(info.n_states, info.n_actions);
  SeedRun run;
  run.seed = seed;
  EnvState s = env.reset(e.initial_condition);
  double ret = 0.0;
  std::size_t episode = 0;
  for (std::size_t t = 0; t < e.total_steps; ++t) {
    const std::size_t a = epsilon_greedy(q.row(s.index()), t, e.sgd.epsilon, explore);
    const StepResult res = env.step(s, a);
    const double n = visits(s.index(), a) += 1.0;
    const double alpha = config.tabular.alpha > 0.0 ? config.tabular.alpha : 1.0 / n;
    q = tabular_q_update(std::move(q), s.index(), a, res.reward, res.next.index(), alpha, e.gamma);
    ret += res.reward;
    if (res.done) {
      run.curve.push_back({seed, episode++, t + 1, ret, "tabular"});
      ret = 0.0;
      s = env.reset(e.initial_condition);
    } else {
      s = res.next;
    }
  }
  if (final_q != nullptr) *final_q = q;
  return run;
}

std::vector<Transition> collect_random_dataset(const EngineConfig& config, std::size_t steps,
                                               std::uint64_t seed) {
  Environment env(config.env, seed);
  Rng rng(seed, Stream::kHarness);
  const std::size_t n_actions = env.info().n_actions;
  std::vector<Transition> data;
  data.reserve(steps);
  EnvState s = env.reset(config.initial_condition);
  std::size_t episode = 0;
  for (std::size_t t = 0; t < steps; ++t) {
    const std::size_t a = rng.uniform_index(n_actions);
    const StepResult res = env.step(s, a);
    Transition tr;
    tr.state = s;
    tr.action_taken = a;
    tr.reward = res.reward;
    tr.next_state = res.next;
    tr.q_labels.assign(n_actions, 0.0);
    tr.timestep = t;
    tr.episode_id = episode;
    data.push_back(std::move(tr));
    if (res.done) {
      ++episode;
      s = env.reset(config.initial_condition);
    } else {
      s = res.next;
    }
  }
  return data;
}

FqiResult baseline_fqi(const ExperimentConfig& config, const std::vector<Transition>& dataset,
                       std::uint64_t seed) {
  if (dataset.empty()) throw std::invalid_argument("baseline_fqi: empty dataset");
  const EngineConfig& e = config.engine;
  if (!is_discrete(e.env.id)) throw std::invalid_argument("baseline_fqi: discrete env required");
  const EnvInfo info = env_info(e.env);
  const bool table_fit = e.regressor.kind == RegressorType::kExactTable;
  std::unique_ptr<Regressor> fitter;
  if (!table_fit) fitter = make_regressor(e.regressor, e.env.id, nullptr);

  FqiResult out{QTable(info.n_states, info.n_actions), {}, {}};
  std::vector<double> targets(dataset.size());
  for (std::size_t k = 0; k < config.fqi.iterations; ++k) {
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      const Transition& tr = dataset[i];
      double next = 0.0;
      if (!tr.next_state.terminal) {
        const auto row = out.q.row(tr.next_state.index());
        next = *std::max_element(row.begin(), row.end());
      }
      targets[i] = tr.reward + e.gamma * next;
    }
    if (table_fit) {
      out.q = fit_table(dataset, targets, info.n_states, info.n_actions);
      continue;
    }
    std::vector<FeatureRow> rows;
    rows.reserve(dataset.size());
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      FeatureRow r = encode_features(dataset[i].state, dataset[i].action_taken, e.features);
      r.label = targets[i];
      rows.push_back(std::move(r));
    }
    const Context ctx = Context::from_rows(std::move(rows), e.features);
    out.q = predict_table(*fitter, ctx, e.env.id, info.n_states, info.n_actions);
  }

  Environment env(e.env, seed);
  for (std::size_t i = 0; i < config.fqi.eval_episodes; ++i) {
    const Rollout r = rollout(env, e.initial_condition,
                              [&](const EnvState& s) { return argmax(out.q.row(s.index())); });
    out.eval_returns.push_back(r.episode_return);
    out.eval_lengths.push_back(r.length);
  }
  return out;
}

SeedRun run_seed(const ExperimentConfig& config, std::uint64_t seed) {
  switch (config.algo) {
    case Algo::kTabularQ: return run_tabular_q(config, seed);
    case Algo::kFqi: {
      const auto data = collect_random_dataset(config.engine, config.fqi.dataset_steps, seed);
      const FqiResult fqi = baseline_fqi(config, data, seed);
      SeedRun run;
      run.seed = seed;
      std::size_t step = config.fqi.dataset_steps;
      for (std::size_t i = 0; i < fqi.eval_returns.size(); ++i) {
        step += fqi.eval_lengths[i];
        run.curve.push_back({seed, i, step, fqi.eval_returns[i], "eval"});
      }
      return run;
    }
    case Algo::kTabql:
    case Algo::kDqn: {
      EngineConfig e = config.engine;
      e.seed = seed;
      e.enable_switch = e.enable_switch && config.algo == Algo::kTabql;
      if (!e.enable_switch) e.ledger = false;
      RunResult r = run(e);
      SeedRun out;
      out.seed = seed;
      out.curve = to_curve(seed, r.episodes);
      out.switch_step = r.switch_step;
      out.ledger = std::move(r.ledger);
      return out;
    }
  }
  throw std::logic_error("run_seed: unknown algo");
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  config.validate();
  ExperimentResult result;
  result.runs.resize(config.seeds.size());
  std::vector<std::exception_ptr> errors(config.seeds.size());
  std::size_t workers = config.threads > 0 ? config.threads : std::thread::hardware_concurrency();
  workers = std::clamp<std::size_t>(workers, 1, config.seeds.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < config.seeds.size(); i = next++) {
      try {
        result.runs[i] = run_seed(config, config.seeds[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  for (const auto& err : errors) {
    if (err) std::rethrow_exception(err);
  }
  return result;
}

void write_experiment(const ExperimentResult& result, const Settings& settings,
                      const std::string& output_path) {
  std::ofstream curve(output_path, std::ios::binary);
  if (!curve) throw std::runtime_error("cannot write " + output_path);
  write_curve(curve, result.curve());

  const bool any_ledger = std::any_of(result.runs.begin(), result.runs.end(),
                                      [](const SeedRun& r) { return r.ledger.has_value(); });
  if (any_ledger) {
    std::ofstream ledger(output_path + ".ledger.csv", std::ios::binary);
    if (!ledger) throw std::runtime_error("cannot write " + output_path + ".ledger.csv");
    write_ledger_header(ledger);
    for (const auto& r : result.runs) {
      if (r.ledger) write_ledger_rows(ledger, r.seed, *r.ledger);
    }
  }
  std::ofstream sidecar(output_path + ".config", std::ios::binary);
  if (!sidecar) throw std::runtime_error("cannot write " + output_path + ".config");
  sidecar << settings.dump();
}

SweepParam parse_sweep_param(std::string_view name) {
  if (name == "t0") return SweepParam::kT0;
  if (name == "k") return SweepParam::kContextK;
  throw std::invalid_argument("sweep parameter must be t0 or k");
}

std::vector<SweepPoint> sweep(const ExperimentConfig& config, SweepParam param,
                              const std::vector<std::size_t>& values) {
  if (values.empty()) throw std::invalid_argument("sweep: no values");
  std::vector<SweepPoint> points;
  for (std::size_t v : values) {
    SweepPoint p;
    p.value = v;
    p.config = config;
    if (param == SweepParam::kT0) {
      p.config.engine.gate.T0 = v;
      p.config.engine.gate.fixed_T0 = true;
    } else {
      p.config.engine.context_K = v;
    }
    p.result = run_experiment(p.config);
    points.push_back(std::move(p));
  }
  return points;
}

double final_mean(const std::vector<CurveRow>& curve, std::size_t n) {
  if (curve.empty() || n == 0) throw std::invalid_argument("final_mean: empty curve");
  const std::size_t take = std::min(n, curve.size());
  double sum = 0.0;
  for (std::size_t i = curve.size() - take; i < curve.size(); ++i) sum += curve[i].episode_return;
  return sum / static_cast<double>(take);
}

std::vector<GeneralizationRow> cross_seed_generalization(const GeneralizationConfig& config) {
  if (config.context_counts.empty()) throw std::invalid_argument("generalization: no context counts");
  for (std::size_t c : config.context_counts) {
    if (c == 0) throw std::invalid_argument("generalization: context conditions must be positive");
    if (c > config.n_train_conditions) {
      throw std::invalid_argument("generalization: more context conditions than trained conditions");
    }
  }
  if (config.n_test_conditions == 0) throw std::invalid_argument("generalization: no test conditions");
  std::vector<std::size_t> starts = taxi_starts();
  if (config.n_train_conditions + config.n_test_conditions > starts.size()) {
    throw std::invalid_argument("generalization: insufficient distinct initial conditions");
  }
  Rng rng(config.seed, Stream::kHarness);
  shuffle(starts, rng);
  const std::vector<std::size_t> train(starts.begin(),
                                       starts.begin() + static_cast<long>(config.n_train_conditions));
  const std::vector<std::size_t> test(
      starts.begin() + static_cast<long>(config.n_train_conditions),
      starts.begin() + static_cast<long>(config.n_train_conditions + config.n_test_conditions));

  ExperimentConfig teacher_cfg;
  teacher_cfg.algo = Algo::kTabularQ;
  teacher_cfg.engine.env.id = EnvId::kTaxi;
  teacher_cfg.engine.gamma = 0.99;
  teacher_cfg.engine.total_steps = config.teacher_steps;
  teacher_cfg.engine.sgd.epsilon = {1.0, 0.05, config.teacher_steps / 2};
  teacher_cfg.tabular.alpha = 0.5;
  const EnvInfo info = env_info(teacher_cfg.engine.env);

  // Per-condition teacher rollouts, initial-tagged by construction.
  std::vector<std::vector<Transition>> pool(train.size());
  std::size_t timestep = 0;
  for (std::size_t i = 0; i < train.size(); ++i) {
    ExperimentConfig cfg = teacher_cfg;
    cfg.engine.initial_condition = InitialCondition{train[i], std::nullopt};
    const std::uint64_t teacher_seed = derive_seed(config.seed, 100 + i);
    QTable q;
    run_tabular_q(cfg, teacher_seed, &q);
    Environment env(cfg.engine.env, teacher_seed);
    Rng explore(teacher_seed, Stream::kExploration);
    const EpsilonSchedule fixed{config.rollout_epsilon, config.rollout_epsilon, 1};
    for (std::size_t ep = 0; ep < config.rollout_episodes; ++ep) {
      EnvState s = env.reset(cfg.engine.initial_condition);
      while (true) {
        const std::size_t a = epsilon_greedy(q.row(s.index()), 0, fixed, explore);
        const StepResult res = env.step(s, a);
        Transition tr;
        tr.state = s;
        tr.action_taken = a;
        tr.reward = res.reward;
        tr.next_state = res.next;
        tr.q_labels.assign(q.row(s.index()).begin(), q.row(s.index()).end());
        tr.timestep = timestep++;
        tr.episode_id = ep;
        pool[i].push_back(std::move(tr));
        if (res.done) break;
        s = res.next;
      }
    }
  }

  FeatureOptions features;
  features.include_timestep = false;
  features.include_initial_tag = true;
  const KnnRegressor knn(config.knn_k);
  Environment eval_env(teacher_cfg.engine.env, config.seed);

  auto evaluate = [&](const Context& ctx, std::size_t start) {
    const Rollout r = rollout(eval_env, InitialCondition{start, std::nullopt},
                              [&](const EnvState& s) { return greedy_action(knn, ctx, s, info.n_actions); });
    return normalized_return(info, r.episode_return);
  };

  std::vector<GeneralizationRow> rows;
  for (std::size_t rep = 0; rep < config.repetitions; ++rep) {
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rep_rng(derive_seed(config.seed, 1000 + rep));
    shuffle(order, rep_rng);
    for (std::size_t count : config.context_counts) {
      std::vector<Transition> sources;
      for (std::size_t j = 0; j < count; ++j) {
        const auto& p = pool[order[j]];
        sources.insert(sources.end(), p.begin(), p.end());
      }
      const std::size_t k = sources.size();
      const Context ctx(std::move(sources), k, features);
      GeneralizationRow row;
      row.context_conditions = count;
      row.repetition = rep;
      for (std::size_t start : test) row.unseen_mean += evaluate(ctx, start);
      row.unseen_mean /= static_cast<double>(test.size());
      const std::size_t n_seen = std::min(count, config.n_test_conditions);
      for (std::size_t j = 0; j < n_seen; ++j) row.seen_mean += evaluate(ctx, train[order[j]]);
      row.seen_mean /= static_cast<double>(n_seen);
      rows.push_back(row);
    }
  }
  return rows;
}

}  // namespace tabql
