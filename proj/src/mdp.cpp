#include "tabql/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace tabql {

namespace {

constexpr std::size_t kCliffRows = 4;
constexpr std::size_t kCliffCols = 12;
constexpr std::size_t kCliffStart = 36;
constexpr std::size_t kCliffGoal = 47;

constexpr std::array<const char*, 4> kFrozenMap4 = {"SFFF", "FHFH", "FFFH", "HFFG"};
constexpr std::array<const char*, 8> kFrozenMap8 = {
    "SFFFFFFF", "FFFFFFFF", "FFFHFFFF", "FFFFFHFF",
    "FFFHFFFF", "FHHFFFHF", "FHFFHFHF", "FFFHFFFG"};

// Taxi map rows; walls between columns are '|'.
constexpr std::array<const char*, 7> kTaxiDesc = {
    "+---------+", "|R: | : :G|", "| : | : : |", "| : : : : |",
    "| | : | : |", "|Y| : |B: |", "+---------+"};
constexpr std::array<std::pair<std::size_t, std::size_t>, 4> kTaxiLocs = {
    {{0, 0}, {0, 4}, {4, 0}, {4, 3}}};

// CartPole constants (Euler integration, 12 degree / 2.4 m thresholds).
constexpr double kGravity = 9.8;
constexpr double kMassCart = 1.0;
constexpr double kMassPole = 0.1;
constexpr double kTotalMass = kMassCart + kMassPole;
constexpr double kHalfLength = 0.5;
constexpr double kPoleMassLength = kMassPole * kHalfLength;
constexpr double kForceMag = 10.0;
constexpr double kTau = 0.02;
constexpr double kThetaThreshold = 12.0 * 2.0 * std::numbers::pi / 360.0;
constexpr double kXThreshold = 2.4;

std::size_t frozen_side(EnvId id) { return id == EnvId::kFrozenLake4 ? 4 : 8; }

char frozen_cell(EnvId id, std::size_t index) {
  const std::size_t n = frozen_side(id);
  const std::size_t r = index / n;
  const std::size_t c = index % n;
  return id == EnvId::kFrozenLake4 ? kFrozenMap4[r][c] : kFrozenMap8[r][c];
}

bool cliff_cell(std::size_t index) {
  return index / kCliffCols == kCliffRows - 1 && index % kCliffCols > 0 &&
         index % kCliffCols < kCliffCols - 1;
}

struct TaxiState {
  std::size_t row, col, passenger, destination;
};

TaxiState decode_taxi(std::size_t index) {
  TaxiState t{};
  t.destination = index % 4;
  index /= 4;
  t.passenger = index % 5;
  index /= 5;
  t.col = index % 5;
  t.row = index / 5;
  return t;
}

struct DiscreteOutcome {
  std::size_t next;
  double reward;
  bool terminal;
};

// Deterministic successor of a discrete environment for a realized move.
DiscreteOutcome cliff_move(std::size_t s, std::size_t action) {
  // 0 up, 1 right, 2 down, 3 left
  long r = static_cast<long>(s / kCliffCols);
  long c = static_cast<long>(s % kCliffCols);
  switch (action) {
    case 0: r = std::max(r - 1, 0L); break;
    case 1: c = std::min(c + 1, static_cast<long>(kCliffCols) - 1); break;
    case 2: r = std::min(r + 1, static_cast<long>(kCliffRows) - 1); break;
    default: c = std::max(c - 1, 0L); break;
  }
  const auto next = static_cast<std::size_t>(r) * kCliffCols + static_cast<std::size_t>(c);
  if (cliff_cell(next)) return {kCliffStart, -100.0, false};
  return {next, -1.0, next == kCliffGoal};
}

std::size_t frozen_move(EnvId id, std::size_t s, std::size_t action) {
  // 0 left, 1 down, 2 right, 3 up
  const long n = static_cast<long>(frozen_side(id));
  long r = static_cast<long>(s) / n;
  long c = static_cast<long>(s) % n;
  switch (action) {
    case 0: c = std::max(c - 1, 0L); break;
    case 1: r = std::min(r + 1, n - 1); break;
    case 2: c = std::min(c + 1, n - 1); break;
    default: r = std::max(r - 1, 0L); break;
  }
  return static_cast<std::size_t>(r * n + c);
}

DiscreteOutcome frozen_outcome(EnvId id, std::size_t s, std::size_t moved) {
  const std::size_t next = frozen_move(id, s, moved);
  const char cell = frozen_cell(id, next);
  return {next, cell == 'G' ? 1.0 : 0.0, cell == 'G' || cell == 'H'};
}

DiscreteOutcome taxi_outcome(std::size_t s, std::size_t action) {
  const TaxiState t = decode_taxi(s);
  std::size_t row = t.row, col = t.col, pass = t.passenger;
  double reward = -1.0;
  bool terminal = false;
  const std::pair<std::size_t, std::size_t> here{t.row, t.col};
  switch (action) {
    case 0: row = std::min<std::size_t>(t.row + 1, 4); break;
    case 1: row = t.row == 0 ? 0 : t.row - 1; break;
    case 2:
      if (kTaxiDesc[1 + t.row][2 * t.col + 2] == ':') col = std::min<std::size_t>(t.col + 1, 4);
      break;
    case 3:
      if (kTaxiDesc[1 + t.row][2 * t.col] == ':') col = t.col == 0 ? 0 : t.col - 1;
      break;
    case 4:
      if (t.passenger < 4 && here == kTaxiLocs[t.passenger]) {
        pass = 4;
      } else {
        reward = -10.0;
      }
      break;
    default: {
      const auto it = std::find(kTaxiLocs.begin(), kTaxiLocs.end(), here);
      if (here == kTaxiLocs[t.destination] && t.passenger == 4) {
        pass = t.destination;
        terminal = true;
        reward = 20.0;
      } else if (it != kTaxiLocs.end() && t.passenger == 4) {
        pass = static_cast<std::size_t>(it - kTaxiLocs.begin());
      } else {
        reward = -10.0;
      }
      break;
    }
  }
  return {encode_taxi(row, col, pass, t.destination), reward, terminal};
}

bool taxi_absorbing(std::size_t s) {
  const TaxiState t = decode_taxi(s);
  return t.passenger < 4 && t.passenger == t.destination;
}

bool taxi_valid_start(std::size_t s) {
  const TaxiState t = decode_taxi(s);
  return t.passenger < 4 && t.passenger != t.destination;
}

std::size_t frozen_start(EnvId id) {
  (void)id;
  return 0;
}

bool discrete_start_valid(const EnvOptions& o, std::size_t s) {
  switch (o.id) {
    case EnvId::kCliffWalking: return s < 48 && !cliff_cell(s) && s != kCliffGoal;
    case EnvId::kFrozenLake4:
    case EnvId::kFrozenLake8: {
      const std::size_t n = frozen_side(o.id);
      if (s >= n * n) return false;
      const char cell = frozen_cell(o.id, s);
      return cell != 'H' && cell != 'G';
    }
    case EnvId::kTaxi: return s < 500 && taxi_valid_start(s);
    case EnvId::kTabular: return s < o.model->n_states && !o.model->terminal[s];
    case EnvId::kCartPole: return false;
  }
  return false;
}

// Outcomes of (s, a) as listed before merging duplicate successors.
std::vector<std::pair<DiscreteOutcome, double>> discrete_outcomes(const EnvOptions& o,
                                                                 std::size_t s,
                                                                 std::size_t a) {
  switch (o.id) {
    case EnvId::kCliffWalking: return {{cliff_move(s, a), 1.0}};
    case EnvId::kFrozenLake4:
    case EnvId::kFrozenLake8:
      if (o.slippery) {
        std::vector<std::pair<DiscreteOutcome, double>> out;
        for (std::size_t d : {(a + 3) % 4, a, (a + 1) % 4}) {
          out.push_back({frozen_outcome(o.id, s, d), 1.0 / 3.0});
        }
        return out;
      }
      return {{frozen_outcome(o.id, s, a), 1.0}};
    case EnvId::kTaxi: return {{taxi_outcome(s, a), 1.0}};
    case EnvId::kTabular: {
      std::vector<std::pair<DiscreteOutcome, double>> out;
      const MdpSpec& m = *o.model;
      for (const Outcome& oc : m.transition[m.row(s, a)]) {
        out.push_back({{oc.next_state, m.raw_reward[m.row(s, a)], bool(m.terminal[oc.next_state])},
                       oc.probability});
      }
      return out;
    }
    case EnvId::kCartPole: break;
  }
  throw std::invalid_argument("discrete_outcomes: continuous environment");
}

bool absorbing(const EnvOptions& o, std::size_t s) {
  switch (o.id) {
    case EnvId::kCliffWalking: return s == kCliffGoal;
    case EnvId::kFrozenLake4:
    case EnvId::kFrozenLake8: {
      const char cell = frozen_cell(o.id, s);
      return cell == 'H' || cell == 'G';
    }
    case EnvId::kTaxi: return taxi_absorbing(s);
    case EnvId::kTabular: return o.model->terminal[s];
    case EnvId::kCartPole: return false;
  }
  return false;
}

std::int64_t cartpole_tag(const ContinuousState& x) {
  // 10 bins per component over the reset range [-0.05, 0.05].
  std::int64_t tag = 0;
  for (double v : x) {
    const double u = std::clamp((v + 0.05) / 0.1, 0.0, 0.999999);
    tag = tag * 10 + static_cast<std::int64_t>(u * 10.0);
  }
  return tag;
}

}  // namespace

std::string_view to_string(EnvId id) {
  switch (id) {
    case EnvId::kCliffWalking: return "cliffwalking";
    case EnvId::kFrozenLake4: return "frozenlake4";
    case EnvId::kFrozenLake8: return "frozenlake8";
    case EnvId::kTaxi: return "taxi";
    case EnvId::kCartPole: return "cartpole";
    case EnvId::kTabular: return "tabular";
  }
  return "unknown";
}

EnvId parse_env_id(std::string_view name) {
  for (EnvId id : {EnvId::kCliffWalking, EnvId::kFrozenLake4, EnvId::kFrozenLake8,
                   EnvId::kTaxi, EnvId::kCartPole, EnvId::kTabular}) {
    if (to_string(id) == name) return id;
  }
  if (name == "frozenlake") return EnvId::kFrozenLake4;
  throw std::invalid_argument("unknown env_id: " + std::string(name));
}

bool is_discrete(EnvId id) { return id != EnvId::kCartPole; }

void MdpSpec::validate() const {
  const std::size_t rows = n_states * n_actions;
  if (n_states == 0 || n_actions == 0) throw std::invalid_argument("MdpSpec: empty");
  if (transition.size() != rows || reward.size() != rows || raw_reward.size() != rows ||
      terminal.size() != n_states) {
    throw std::invalid_argument("MdpSpec: inconsistent table sizes");
  }
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("MdpSpec: gamma outside (0,1)");
  for (std::size_t r = 0; r < rows; ++r) {
    double sum = 0.0;
    for (const Outcome& o : transition[r]) {
      if (o.next_state >= n_states || o.probability < 0.0) {
        throw std::invalid_argument("MdpSpec: bad outcome");
      }
      sum += o.probability;
    }
    if (std::abs(sum - 1.0) > 1e-12) throw std::invalid_argument("MdpSpec: row does not sum to 1");
  }
}

std::size_t EnvState::index() const {
  if (!discrete_index) throw std::logic_error("EnvState: no discrete index");
  return *discrete_index;
}

EnvInfo env_info(const EnvOptions& o) {
  EnvInfo info;
  switch (o.id) {
    case EnvId::kCliffWalking:
      info = {48, 4, 200, 2, 48, -100.0, -1.0, 0.0, -13.0};
      break;
    case EnvId::kFrozenLake4: info = {16, 4, 100, 2, 16, 0.0, 1.0, 0.0, 1.0}; break;
    case EnvId::kFrozenLake8: info = {64, 4, 100, 2, 64, 0.0, 1.0, 0.0, 1.0}; break;
    case EnvId::kTaxi: info = {500, 6, 200, 4, 500, -10.0, 20.0, -2000.0, 20.0}; break;
    case EnvId::kCartPole: info = {0, 2, 500, 4, 4, 1.0, 1.0, 0.0, 500.0}; break;
    case EnvId::kTabular: {
      if (!o.model) throw std::invalid_argument("tabular environment requires a model");
      const auto [lo, hi] = std::minmax_element(o.model->raw_reward.begin(),
                                                o.model->raw_reward.end());
      info = {o.model->n_states, o.model->n_actions, 50, 1, o.model->n_states, *lo, *hi, 0, 0};
      break;
    }
  }
  if (o.horizon != 0) info.horizon = o.horizon;
  if (o.id == EnvId::kCliffWalking) info.return_min = -100.0 * static_cast<double>(info.horizon);
  if (o.id == EnvId::kCartPole) info.return_max = static_cast<double>(info.horizon);
  if (o.id == EnvId::kTabular) {
    info.return_min = std::min(0.0, info.reward_min * static_cast<double>(info.horizon));
    info.return_max = std::max(0.0, info.reward_max * static_cast<double>(info.horizon));
  }
  return info;
}

Environment::Environment(EnvOptions options, std::uint64_t seed)
    : options_(std::move(options)), info_(env_info(options_)), rng_(seed, Stream::kEnv) {}

std::size_t Environment::reset_index(const std::optional<InitialCondition>& initial) {
  if (initial && initial->index) {
    if (!discrete_start_valid(options_, *initial->index)) {
      throw std::invalid_argument("invalid initial_condition for " +
                                  std::string(to_string(options_.id)));
    }
    return *initial->index;
  }
  switch (options_.id) {
    case EnvId::kCliffWalking: return kCliffStart;
    case EnvId::kFrozenLake4:
    case EnvId::kFrozenLake8: return frozen_start(options_.id);
    case EnvId::kTaxi: {
      // Uniform over the 300 valid starts: taxi cell x ordered (passenger, destination).
      const std::size_t cell = rng_.uniform_index(25);
      const std::size_t pd = rng_.uniform_index(12);
      const std::size_t pass = pd / 3;
      std::size_t dest = pd % 3;
      if (dest >= pass) ++dest;
      return encode_taxi(cell / 5, cell % 5, pass, dest);
    }
    case EnvId::kTabular: return options_.tabular_start;
    case EnvId::kCartPole: break;
  }
  throw std::logic_error("reset_index: continuous environment");
}

EnvState Environment::reset(const std::optional<InitialCondition>& initial) {
  EnvState s;
  s.env_id = options_.id;
  if (options_.id == EnvId::kCartPole) {
    if (initial && initial->index) throw std::invalid_argument("cartpole takes a continuous initial_condition");
    ContinuousState x{};
    if (initial && initial->continuous) {
      x = *initial->continuous;
      for (double v : x) {
        if (!std::isfinite(v)) throw std::invalid_argument("invalid initial_condition for cartpole");
      }
    } else {
      for (double& v : x) v = rng_.uniform(-0.05, 0.05);
    }
    s.continuous = x;
    s.initial_tag = cartpole_tag(x);
    return s;
  }
  if (initial && initial->continuous) {
    throw std::invalid_argument("discrete environment takes an index initial_condition");
  }
  const std::size_t idx = reset_index(initial);
  s.discrete_index = idx;
  s.initial_tag = static_cast<std::int64_t>(idx);
  return s;
}

EnvState Environment::make_state(std::size_t index, std::size_t episode_step) const {
  if (!is_discrete(options_.id) || index >= info_.n_states) {
    throw std::invalid_argument("make_state: bad index");
  }
  EnvState s;
  s.env_id = options_.id;
  s.discrete_index = index;
  s.episode_step = episode_step;
  s.initial_tag = static_cast<std::int64_t>(index);
  return s;
}

StepResult Environment::step(const EnvState& state, std::size_t action) {
  if (action >= info_.n_actions) throw std::out_of_range("step: action out of range");
  if (state.done) throw std::logic_error("step: episode already done");
  if (state.env_id != options_.id) throw std::invalid_argument("step: state from another env");
  return options_.id == EnvId::kCartPole ? step_cartpole(state, action)
                                         : step_discrete(state, action);
}

StepResult Environment::step_discrete(const EnvState& state, std::size_t action) {
  const auto outcomes = discrete_outcomes(options_, state.index(), action);
  std::size_t pick = 0;
  if (outcomes.size() > 1) {
    const double u = rng_.uniform01();
    double acc = 0.0;
    pick = outcomes.size() - 1;
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
      acc += outcomes[i].second;
      if (u < acc) {
        pick = i;
        break;
      }
    }
  }
  const DiscreteOutcome& o = outcomes[pick].first;
  StepResult r;
  r.next = state;
  r.next.discrete_index = o.next;
  r.next.episode_step = state.episode_step + 1;
  r.reward = o.reward;
  r.next.terminal = o.terminal;
  r.done = o.terminal || r.next.episode_step >= info_.horizon;
  r.next.done = r.done;
  return r;
}

StepResult Environment::step_cartpole(const EnvState& state, std::size_t action) {
  auto [x, x_dot, theta, theta_dot] = *state.continuous;
  const double force = action == 1 ? kForceMag : -kForceMag;
  const double cos_t = std::cos(theta);
  const double sin_t = std::sin(theta);
  const double temp = (force + kPoleMassLength * theta_dot * theta_dot * sin_t) / kTotalMass;
  const double theta_acc = (kGravity * sin_t - cos_t * temp) /
                           (kHalfLength * (4.0 / 3.0 - kMassPole * cos_t * cos_t / kTotalMass));
  const double x_acc = temp - kPoleMassLength * theta_acc * cos_t / kTotalMass;
  x += kTau * x_dot;
  x_dot += kTau * x_acc;
  theta += kTau * theta_dot;
  theta_dot += kTau * theta_acc;

  StepResult r;
  r.next = state;
  r.next.continuous = ContinuousState{x, x_dot, theta, theta_dot};
  r.next.episode_step = state.episode_step + 1;
  const bool fell = x < -kXThreshold || x > kXThreshold || theta < -kThetaThreshold ||
                    theta > kThetaThreshold;
  r.reward = 1.0;
  r.next.terminal = fell;
  r.done = fell || r.next.episode_step >= info_.horizon;
  r.next.done = r.done;
  return r;
}

EnvState reset(const EnvOptions& options, std::uint64_t seed,
               const std::optional<InitialCondition>& initial) {
  Environment env(options, seed);
  return env.reset(initial);
}

MdpSpec two_state_mdp(double gamma) {
  MdpSpec m;
  m.n_states = 2;
  m.n_actions = 2;
  m.gamma = gamma;
  m.transition = {
      {{0, 0.7}, {1, 0.3}},  // s0, a0
      {{1, 0.6}, {0, 0.4}},  // s0, a1
      {{0, 0.5}, {1, 0.5}},  // s1, a0
      {{1, 1.0}},            // s1, a1
  };
  m.reward = {0.2, 0.0, 1.0, 0.5};
  m.raw_reward = m.reward;
  m.terminal = {false, false};
  m.validate();
  return m;
}

MdpSpec random_mdp(std::size_t n_states, std::size_t n_actions, double gamma, Rng& rng) {
  if (n_states == 0 || n_actions == 0) throw std::invalid_argument("random_mdp: empty state or action set");
  MdpSpec m;
  m.n_states = n_states;
  m.n_actions = n_actions;
  m.gamma = gamma;
  m.transition.resize(n_states * n_actions);
  for (auto& row : m.transition) {
    double total = 0.0;
    for (std::size_t s = 0; s < n_states; ++s) {
      const double w = rng.uniform01() + 1e-3;
      row.push_back({s, w});
      total += w;
    }
    for (auto& o : row) o.probability /= total;
  }
  m.reward.resize(n_states * n_actions);
  for (double& r : m.reward) r = rng.uniform01();
  m.raw_reward = m.reward;
  m.terminal.assign(n_states, false);
  m.validate();
  return m;
}

MdpSpec enumerate_model(const EnvOptions& options, double gamma) {
  if (!is_discrete(options.id)) {
    throw std::invalid_argument("enumerate_model: cartpole has no finite enumeration");
  }
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("enumerate_model: gamma outside (0,1)");
  const EnvInfo info = env_info(options);
  MdpSpec m;
  m.n_states = info.n_states;
  m.n_actions = info.n_actions;
  m.gamma = gamma;
  m.transition.resize(m.n_states * m.n_actions);
  m.reward.assign(m.n_states * m.n_actions, 0.0);
  m.raw_reward.assign(m.n_states * m.n_actions, 0.0);
  m.terminal.assign(m.n_states, false);
  const double span = info.reward_max - info.reward_min;
  for (std::size_t s = 0; s < m.n_states; ++s) {
    m.terminal[s] = absorbing(options, s);
    for (std::size_t a = 0; a < m.n_actions; ++a) {
      const std::size_t row = m.row(s, a);
      if (m.terminal[s]) {
        m.transition[row] = {{s, 1.0}};
        continue;
      }
      double expected = 0.0;
      for (const auto& [o, p] : discrete_outcomes(options, s, a)) {
        m.transition[row].push_back({o.next, p});
        expected += p * o.reward;
      }
      m.raw_reward[row] = expected;
      m.reward[row] = span > 0.0 ? (expected - info.reward_min) / span : expected;
    }
  }
  if (options.id == EnvId::kTabular) m.reward = options.model->reward;
  return m;
}

std::size_t encode_taxi(std::size_t row, std::size_t col, std::size_t passenger,
                        std::size_t destination) {
  return ((row * 5 + col) * 5 + passenger) * 4 + destination;
}

std::vector<double> decode_state(EnvId id, std::size_t index) {
  switch (id) {
    case EnvId::kCliffWalking:
      return {double(index / kCliffCols), double(index % kCliffCols)};
    case EnvId::kFrozenLake4:
    case EnvId::kFrozenLake8: {
      const std::size_t n = frozen_side(id);
      return {double(index / n), double(index % n)};
    }
    case EnvId::kTaxi: {
      const TaxiState t = decode_taxi(index);
      return {double(t.row), double(t.col), double(t.passenger), double(t.destination)};
    }
    case EnvId::kTabular: return {double(index)};
    case EnvId::kCartPole: break;
  }
  throw std::invalid_argument("decode_state: continuous environment");
}

std::size_t encode_state(EnvId id, std::span<const double> c) {
  auto integral = [&](std::size_t i, std::size_t bound) {
    const double v = c[i];
    if (!(v >= 0.0) || v != std::floor(v) || v >= static_cast<double>(bound)) {
      throw std::invalid_argument("encode_state: component out of range");
    }
    return static_cast<std::size_t>(v);
  };
  switch (id) {
    case EnvId::kCliffWalking:
      if (c.size() < 2) break;
      return integral(0, kCliffRows) * kCliffCols + integral(1, kCliffCols);
    case EnvId::kFrozenLake4:
    case EnvId::kFrozenLake8: {
      if (c.size() < 2) break;
      const std::size_t n = frozen_side(id);
      return integral(0, n) * n + integral(1, n);
    }
    case EnvId::kTaxi:
      if (c.size() < 4) break;
      return encode_taxi(integral(0, 5), integral(1, 5), integral(2, 5), integral(3, 4));
    case EnvId::kTabular:
      if (c.empty()) break;
      return integral(0, static_cast<std::size_t>(-1));
    case EnvId::kCartPole:
      throw std::invalid_argument("encode_state: continuous environment");
  }
  throw std::invalid_argument("encode_state: too few components");
}

FeatureRow encode_features(const EnvState& state, std::size_t action,
                           const FeatureOptions& options) {
  FeatureRow row;
  if (state.continuous) {
    row.features.assign(state.continuous->begin(), state.continuous->end());
  } else {
    row.features = decode_state(state.env_id, state.index());
  }
  row.features.push_back(static_cast<double>(action));
  if (options.include_timestep) row.features.push_back(static_cast<double>(state.episode_step));
  if (options.include_initial_tag) row.features.push_back(static_cast<double>(state.initial_tag));
  return row;
}

std::size_t feature_length(const EnvInfo& info, const FeatureOptions& options) {
  return info.state_feature_dim + 1 + (options.include_timestep ? 1 : 0) +
         (options.include_initial_tag ? 1 : 0);
}

std::vector<double> net_input(const EnvState& state, const EnvInfo& info) {
  if (state.continuous) return {state.continuous->begin(), state.continuous->end()};
  std::vector<double> x(info.net_input_dim, 0.0);
  x.at(state.index()) = 1.0;
  return x;
}

double normalized_return(const EnvInfo& info, double raw_return) {
  return (raw_return - info.return_min) / (info.return_max - info.return_min);
}

}  // namespace tabql
