#include "tabql/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "tabql/bridge_client.hpp"

namespace tabql {

namespace {

// Every accepted key with its generic default.
const std::map<std::string, std::string>& generic_defaults() {
  static const std::map<std::string, std::string> d = {
      {"env", "cliffwalking"},
      {"algo", "tabql"},
      {"gamma", "0.99"},
      {"total_steps", "30000"},
      {"seeds", "0,1,2,3,4"},
      {"t0", "20000"},
      {"context_k", "1000"},
      {"buffer_w", "50000"},
      {"sampling", "recent"},
      {"switch", "on"},
      {"gate.mode", "fixed"},
      {"gate.window", "30"},
      {"gate.g_min", "20"},
      {"gate.q", "0.5"},
      {"gate.theta_floor", "0"},
      {"gate.delta", "1"},
      {"refit.mode", "episode"},
      {"refit.rho_stale", "0.25"},
      {"refit.e_min", "1"},
      {"filter", "off"},
      {"filter.tau", "0.1"},
      {"filter.returns", "on"},
      {"regressor", "knn"},
      {"regressor.knn_k", "8"},
      {"regressor.bandwidth", "1"},
      {"regressor.endpoint", ""},
      {"sgd.lr", "0.1"},
      {"sgd.batch", "32"},
      {"sgd.target_sync", "250"},
      {"sgd.max_grad_norm", "10"},
      {"eps.start", "1"},
      {"eps.end", "0.01"},
      {"eps.decay_steps", "10000"},
      {"hidden", "64,64"},
      {"features.timestep", "on"},
      {"features.initial_tag", "off"},
      {"slippery", "off"},
      {"horizon", "0"},
      {"reward_scale", "0.1"},
      {"ledger", "off"},
      {"ledger.m_min", "1"},
      {"tabular.alpha", "0"},
      {"fqi.iterations", "50"},
      {"fqi.eval_episodes", "20"},
      {"fqi.dataset_steps", "20000"},
      {"output", "curve.csv"},
      {"threads", "0"},
  };
  return d;
}

// Per-environment overrides of the generic defaults.
std::map<std::string, std::string> env_defaults(const std::string& env) {
  if (env == "cliffwalking") {
    return {{"t0", "20000"}, {"context_k", "1000"}, {"total_steps", "30000"}, {"features.timestep", "off"}};
  }
  if (env == "frozenlake" || env == "frozenlake4" || env == "frozenlake8") {
    return {{"t0", "30000"}, {"context_k", "1500"}, {"total_steps", "40000"}, {"reward_scale", "1"}, {"features.timestep", "off"}};
  }
  if (env == "taxi") {
    return {{"t0", "25000"}, {"context_k", "1000"}, {"total_steps", "35000"}, {"features.timestep", "off"}};
  }
  if (env == "cartpole") {
    return {{"t0", "20000"},        {"context_k", "1000"},  {"total_steps", "30000"},
            {"gate.mode", "adaptive"}, {"gate.q", "0.5"},     {"refit.mode", "staleness"},
            {"filter", "on"},        {"filter.tau", "0.1"}, {"features.timestep", "off"},
            {"reward_scale", "0.01"}};
  }
  if (env == "tabular") {
    return {{"t0", "2000"},          {"context_k", "200"}, {"total_steps", "3000"},
            {"gamma", "0.9"},        {"reward_scale", "1"}, {"features.timestep", "off"},
            {"ledger", "on"},        {"seeds", "0"},        {"refit.mode", "staleness"}};
  }
  return {};
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad(const std::string& key, const std::string& value, const std::string& why) {
  throw ConfigError(key + "=" + value + ": " + why);
}

double as_double(const Settings& s, const std::string& key) {
  const std::string& v = s.get(key);
  if (v == "inf" || v == "none") return std::numeric_limits<double>::infinity();
  const auto d = parse_double(v);
  if (!d) bad(key, v, "expected a number");
  return *d;
}

std::size_t as_count(const Settings& s, const std::string& key) {
  const std::string& v = s.get(key);
  std::size_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) bad(key, v, "expected a count");
  return out;
}

bool as_bool(const Settings& s, const std::string& key) {
  const std::string& v = s.get(key);
  if (v == "on" || v == "true" || v == "1" || v == "yes") return true;
  if (v == "off" || v == "false" || v == "0" || v == "no") return false;
  bad(key, v, "expected on/off");
}

template <typename T>
std::vector<T> as_list(const Settings& s, const std::string& key) {
  const std::string& v = s.get(key);
  std::vector<T> out;
  for (auto part : split(v, ',')) {
    const std::string item = trim(part);
    T x{};
    const auto res = std::from_chars(item.data(), item.data() + item.size(), x);
    if (item.empty() || res.ec != std::errc() || res.ptr != item.data() + item.size()) {
      bad(key, v, "expected a comma-separated list of integers");
    }
    out.push_back(x);
  }
  return out;
}

}  // namespace

std::string_view to_string(Algo algo) {
  switch (algo) {
    case Algo::kTabql: return "tabql";
    case Algo::kTabularQ: return "tabular_q";
    case Algo::kDqn: return "dqn";
    case Algo::kFqi: return "fqi";
  }
  return "unknown";
}

Algo parse_algo(std::string_view name) {
  for (Algo a : {Algo::kTabql, Algo::kTabularQ, Algo::kDqn, Algo::kFqi}) {
    if (to_string(a) == name) return a;
  }
  throw ConfigError("algo=" + std::string(name) + ": expected tabql, tabular_q, dqn or fqi");
}

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw ConfigError("seeds: at least one seed required");
  if (engine.total_steps < 1) throw ConfigError("total_steps: must be at least 1");
  if (!(tabular.alpha >= 0.0 && tabular.alpha <= 1.0)) throw ConfigError("tabular.alpha: must lie in [0, 1]");
  if ((algo == Algo::kTabularQ || algo == Algo::kFqi) && !is_discrete(engine.env.id)) {
    throw ConfigError("algo=" + std::string(to_string(algo)) + ": needs a discrete env");
  }
  try {
    engine.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

Settings Settings::defaults(const std::string& env) {
  Settings s;
  s.values_ = generic_defaults();
  if (!env.empty()) {
    parse_env_id(env);
    s.values_["env"] = env;
    for (const auto& [k, v] : env_defaults(env)) s.values_[k] = v;
  }
  return s;
}

void Settings::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown key: " + key);
  if (key == "env") {
    try {
      parse_env_id(value);
    } catch (const std::invalid_argument&) {
      bad(key, value, "unknown environment");
    }
  }
  it->second = value;
}

const std::string& Settings::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown key: " + key);
  return it->second;
}

Settings Settings::parse(std::istream& in, const std::vector<std::string>& overrides) {
  std::vector<std::pair<std::string, std::string>> pairs;
  std::string line;
  std::size_t line_no = 0;
  auto add = [&pairs](const std::string& text, const std::string& where) {
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key=value");
    pairs.emplace_back(trim(std::string_view(text).substr(0, eq)),
                       trim(std::string_view(text).substr(eq + 1)));
  };
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    const std::string body = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (body.empty()) continue;
    add(body, "line " + std::to_string(line_no));
  }
  for (const auto& o : overrides) add(o, "override '" + o + "'");

  std::string env;
  for (const auto& [k, v] : pairs) {
    if (k == "env") env = v;
  }
  Settings s;
  try {
    s = defaults(env);
  } catch (const std::invalid_argument&) {
    bad("env", env, "unknown environment");
  }
  for (const auto& [k, v] : pairs) s.set(k, v);
  return s;
}

Settings Settings::load(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  return parse(in, overrides);
}

std::string Settings::dump() const {
  std::string out = "env=" + values_.at("env") + "\n";
  for (const auto& [k, v] : values_) {
    if (k != "env") out += k + "=" + v + "\n";
  }
  return out;
}

ExperimentConfig Settings::to_experiment() const {
  ExperimentConfig x;
  x.algo = parse_algo(get("algo"));
  EngineConfig& e = x.engine;
  e.env.id = parse_env_id(get("env"));
  e.env.slippery = as_bool(*this, "slippery");
  e.env.horizon = as_count(*this, "horizon");
  e.gamma = as_double(*this, "gamma");
  e.total_steps = as_count(*this, "total_steps");
  e.gate.T0 = as_count(*this, "t0");
  e.context_K = as_count(*this, "context_k");
  e.buffer_W = as_count(*this, "buffer_w");

  const std::string& sampling = get("sampling");
  if (sampling == "recent") {
    e.sampling = SamplingStrategy::kRecent;
  } else if (sampling == "uniform") {
    e.sampling = SamplingStrategy::kUniform;
  } else {
    bad("sampling", sampling, "expected recent or uniform");
  }

  const std::string& gate_mode = get("gate.mode");
  if (gate_mode != "fixed" && gate_mode != "adaptive") bad("gate.mode", gate_mode, "expected fixed or adaptive");
  e.gate.fixed_T0 = gate_mode == "fixed";
  e.gate.window_W = as_count(*this, "gate.window");
  e.gate.G_min = as_count(*this, "gate.g_min");
  e.gate.quantile_q = as_double(*this, "gate.q");
  e.gate.theta_floor = as_double(*this, "gate.theta_floor");
  e.gate.delta_margin = as_double(*this, "gate.delta");

  const std::string& refit_mode = get("refit.mode");
  if (refit_mode == "episode") {
    e.refit.mode = RefitMode::kEveryEpisode;
  } else if (refit_mode == "staleness") {
    e.refit.mode = RefitMode::kStaleness;
  } else {
    bad("refit.mode", refit_mode, "expected episode or staleness");
  }
  e.refit.rho_stale = as_double(*this, "refit.rho_stale");
  e.refit.e_min = as_count(*this, "refit.e_min");

  e.use_filter = as_bool(*this, "filter");
  e.filter_tau = as_double(*this, "filter.tau");
  e.filter_returns = as_bool(*this, "filter.returns");

  try {
    e.regressor.kind = parse_regressor_type(get("regressor"));
  } catch (const std::invalid_argument&) {
    bad("regressor", get("regressor"), "expected knn, kernel, bridge or exact_table");
  }
  e.regressor.knn_k = as_count(*this, "regressor.knn_k");
  e.regressor.kernel_bandwidth = as_double(*this, "regressor.bandwidth");
  e.regressor.bridge_endpoint = get("regressor.endpoint");

  e.sgd.learning_rate = as_double(*this, "sgd.lr");
  e.sgd.batch_size = as_count(*this, "sgd.batch");
  e.sgd.target_sync_period = as_count(*this, "sgd.target_sync");
  e.sgd.max_grad_norm = as_double(*this, "sgd.max_grad_norm");
  e.sgd.epsilon.eps_start = as_double(*this, "eps.start");
  e.sgd.epsilon.eps_end = as_double(*this, "eps.end");
  e.sgd.epsilon.decay_steps = as_count(*this, "eps.decay_steps");
  e.hidden = as_list<std::size_t>(*this, "hidden");

  e.features.include_timestep = as_bool(*this, "features.timestep");
  e.features.include_initial_tag = as_bool(*this, "features.initial_tag");
  e.reward_scale = as_double(*this, "reward_scale");
  e.ledger = as_bool(*this, "ledger");
  e.ledger_m_min = as_count(*this, "ledger.m_min");
  e.enable_switch = as_bool(*this, "switch") && x.algo == Algo::kTabql;
  if (e.env.id == EnvId::kTabular) e.env.model = std::make_shared<const MdpSpec>(two_state_mdp(e.gamma));

  x.seeds = as_list<std::uint64_t>(*this, "seeds");
  x.tabular.alpha = as_double(*this, "tabular.alpha");
  x.fqi.iterations = as_count(*this, "fqi.iterations");
  x.fqi.eval_episodes = as_count(*this, "fqi.eval_episodes");
  x.fqi.dataset_steps = as_count(*this, "fqi.dataset_steps");
  x.output_path = get("output");
  x.threads = as_count(*this, "threads");
  x.validate();
  return x;
}

ExperimentConfig load_experiment(const std::string& path, const std::vector<std::string>& overrides) {
  return Settings::load(path, overrides).to_experiment();
}

}  // namespace tabql
