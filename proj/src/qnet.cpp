#include "tabql/qnet.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace tabql {

namespace {

constexpr char kMagic[4] = {'T', 'Q', 'N', 'P'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_le(std::ostream& out, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  in.read(reinterpret_cast<char*>(bytes), sizeof(T));
  if (!in) throw std::runtime_error("load_params: truncated record");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

struct ForwardCache {
  std::vector<Eigen::MatrixXd> activations;  // activations[0] = input
};

Eigen::MatrixXd forward_cached(const QNetParams& p, const Eigen::MatrixXd& x, ForwardCache& cache) {
  cache.activations.clear();
  cache.activations.push_back(x);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    Eigen::MatrixXd z = p.layers[l].weight * cache.activations.back();
    z.colwise() += p.layers[l].bias;
    if (l + 1 < p.layers.size()) z = z.cwiseMax(0.0);
    cache.activations.push_back(std::move(z));
  }
  return cache.activations.back();
}

Eigen::VectorXd td_targets(const QNetParams& target, const TdBatch& batch, double gamma) {
  const Eigen::MatrixXd q_next = forward_batch(target, batch.next_states);
  Eigen::VectorXd y(static_cast<Eigen::Index>(batch.size()));
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto col = static_cast<Eigen::Index>(i);
    const double bootstrap = batch.terminal[i] ? 0.0 : q_next.col(col).maxCoeff();
    y(col) = batch.rewards(col) + gamma * bootstrap;
  }
  return y;
}

QNetParams zeros_like(const QNetParams& p) {
  QNetParams g = p;
  for (auto& l : g.layers) {
    l.weight.setZero();
    l.bias.setZero();
  }
  return g;
}

}  // namespace

std::size_t QNetParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

bool QNetParams::all_finite() const {
  return std::all_of(layers.begin(), layers.end(), [](const DenseLayer& l) {
    return l.weight.allFinite() && l.bias.allFinite();
  });
}

bool QNetParams::operator==(const QNetParams& other) const {
  if (layers.size() != other.layers.size()) return false;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& a = layers[l];
    const auto& b = other.layers[l];
    if (a.weight.rows() != b.weight.rows() || a.weight.cols() != b.weight.cols()) return false;
    if (std::memcmp(a.weight.data(), b.weight.data(), sizeof(double) * a.weight.size()) != 0 ||
        std::memcmp(a.bias.data(), b.bias.data(), sizeof(double) * a.bias.size()) != 0) {
      return false;
    }
  }
  return true;
}

double& QNetParams::flat(std::size_t i) {
  for (auto& l : layers) {
    const auto nw = static_cast<std::size_t>(l.weight.size());
    if (i < nw) return l.weight.data()[i];
    i -= nw;
    const auto nb = static_cast<std::size_t>(l.bias.size());
    if (i < nb) return l.bias.data()[i];
    i -= nb;
  }
  throw std::out_of_range("QNetParams::flat");
}

double QNetParams::flat(std::size_t i) const { return const_cast<QNetParams&>(*this).flat(i); }

QNetParams zero_qnet(std::size_t input_dim, std::span<const std::size_t> hidden,
                     std::size_t n_actions) {
  QNetParams p;
  std::size_t in = input_dim;
  auto add = [&](std::size_t out) {
    p.layers.push_back({Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in)),
                        Eigen::VectorXd::Zero(static_cast<Eigen::Index>(out))});
    in = out;
  };
  for (std::size_t h : hidden) add(h);
  add(n_actions);
  return p;
}

QNetParams init_qnet(std::size_t input_dim, std::span<const std::size_t> hidden,
                     std::size_t n_actions, Rng& rng) {
  QNetParams p = zero_qnet(input_dim, hidden, n_actions);
  for (auto& l : p.layers) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(l.weight.cols()));
    for (Eigen::Index i = 0; i < l.weight.size(); ++i) l.weight.data()[i] = rng.uniform(-bound, bound);
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias.data()[i] = rng.uniform(-bound, bound);
  }
  return p;
}

double EpsilonSchedule::at(std::size_t step) const {
  const double frac = std::min(1.0, static_cast<double>(step) / static_cast<double>(decay_steps));
  return std::max(eps_end, eps_start + (eps_end - eps_start) * frac);
}

void SgdConfig::validate() const {
  if (!(learning_rate >= 0.0)) throw std::invalid_argument("sgd.learning_rate must be >= 0");
  if (batch_size == 0) throw std::invalid_argument("sgd.batch_size must be positive");
  if (target_sync_period == 0) throw std::invalid_argument("sgd.target_sync_period must be positive");
  if (epsilon.eps_end > epsilon.eps_start) throw std::invalid_argument("eps_end must not exceed eps_start");
  if (epsilon.decay_steps == 0) throw std::invalid_argument("eps decay_steps must be at least 1");
  if (epsilon.eps_end < 0.0 || epsilon.eps_start > 1.0) throw std::invalid_argument("epsilon outside [0,1]");
}

TdBatch make_batch(std::span<const Transition* const> transitions, const EnvInfo& info) {
  TdBatch b;
  const auto n = static_cast<Eigen::Index>(transitions.size());
  const auto d = static_cast<Eigen::Index>(info.net_input_dim);
  b.states = Eigen::MatrixXd::Zero(d, n);
  b.next_states = Eigen::MatrixXd::Zero(d, n);
  b.rewards.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Transition& t = *transitions[static_cast<std::size_t>(i)];
    const auto s = net_input(t.state, info);
    const auto s2 = net_input(t.next_state, info);
    b.states.col(i) = Eigen::Map<const Eigen::VectorXd>(s.data(), d);
    b.next_states.col(i) = Eigen::Map<const Eigen::VectorXd>(s2.data(), d);
    b.actions.push_back(t.action_taken);
    b.rewards(i) = t.reward;
    b.terminal.push_back(t.next_state.terminal);
  }
  return b;
}

Eigen::VectorXd forward(const QNetParams& params, std::span<const double> input) {
  if (input.size() != params.input_dim()) throw std::invalid_argument("forward: shape mismatch");
  const Eigen::Map<const Eigen::VectorXd> x(input.data(), static_cast<Eigen::Index>(input.size()));
  return forward_batch(params, x);
}

Eigen::MatrixXd forward_batch(const QNetParams& params, const Eigen::MatrixXd& inputs) {
  if (static_cast<std::size_t>(inputs.rows()) != params.input_dim()) {
    throw std::invalid_argument("forward: shape mismatch");
  }
  Eigen::MatrixXd a = inputs;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    Eigen::MatrixXd z = params.layers[l].weight * a;
    z.colwise() += params.layers[l].bias;
    if (l + 1 < params.layers.size()) z = z.cwiseMax(0.0);
    a = std::move(z);
  }
  return a;
}

double td_loss(const QNetParams& params, const QNetParams& target, const TdBatch& batch,
               double gamma) {
  if (batch.size() == 0) throw std::invalid_argument("td_loss: empty batch");
  const Eigen::MatrixXd q = forward_batch(params, batch.states);
  const Eigen::VectorXd y = td_targets(target, batch, gamma);
  double loss = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto col = static_cast<Eigen::Index>(i);
    const double e = q(static_cast<Eigen::Index>(batch.actions[i]), col) - y(col);
    loss += e * e;
  }
  return loss / static_cast<double>(batch.size());
}

QNetParams td_gradient(const QNetParams& params, const QNetParams& target, const TdBatch& batch,
                       double gamma, double* loss) {
  if (batch.size() == 0) throw std::invalid_argument("td_gradient: empty batch");
  ForwardCache cache;
  const Eigen::MatrixXd q = forward_cached(params, batch.states, cache);
  const Eigen::VectorXd y = td_targets(target, batch, gamma);
  const double inv_b = 1.0 / static_cast<double>(batch.size());

  Eigen::MatrixXd delta = Eigen::MatrixXd::Zero(q.rows(), q.cols());
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto col = static_cast<Eigen::Index>(i);
    const auto a = static_cast<Eigen::Index>(batch.actions[i]);
    const double e = q(a, col) - y(col);
    total += e * e;
    delta(a, col) = 2.0 * e * inv_b;
  }
  if (loss != nullptr) *loss = total * inv_b;

  QNetParams grad = zeros_like(params);
  for (std::size_t l = params.layers.size(); l-- > 0;) {
    const Eigen::MatrixXd& input = cache.activations[l];
    grad.layers[l].weight = delta * input.transpose();
    grad.layers[l].bias = delta.rowwise().sum();
    if (l > 0) {
      Eigen::MatrixXd back = params.layers[l].weight.transpose() * delta;
      // ReLU derivative taken as 0 at exactly 0.
      back = back.cwiseProduct((input.array() > 0.0).cast<double>().matrix());
      delta = std::move(back);
    }
  }
  return grad;
}

QNetParams td_update(const QNetParams& params, const QNetParams& target, const TdBatch& batch,
                     double gamma, const SgdConfig& cfg) {
  if (batch.size() == 0) throw std::invalid_argument("td_update: empty batch");
  QNetParams grad = td_gradient(params, target, batch, gamma);
  double scale = cfg.learning_rate;
  if (cfg.max_grad_norm > 0.0) {
    double sq = 0.0;
    for (const auto& l : grad.layers) sq += l.weight.squaredNorm() + l.bias.squaredNorm();
    const double norm = std::sqrt(sq);
    if (norm > cfg.max_grad_norm) scale *= cfg.max_grad_norm / norm;
  }
  QNetParams next = params;
  if (scale == 0.0) return next;
  for (std::size_t l = 0; l < next.layers.size(); ++l) {
    next.layers[l].weight -= scale * grad.layers[l].weight;
    next.layers[l].bias -= scale * grad.layers[l].bias;
  }
  return next;
}

double grad_check(const QNetParams& params, const QNetParams& target, const TdBatch& batch,
                  double gamma, Rng& rng, const GradCheckOptions& options) {
  QNetParams analytic = td_gradient(params, target, batch, gamma);
  QNetParams probe = params;
  const std::size_t n = params.parameter_count();
  const std::size_t samples = std::min(options.n_samples, n);
  double worst = 0.0;
  for (std::size_t k = 0; k < samples; ++k) {
    const std::size_t i = samples == n ? k : rng.uniform_index(n);
    const double original = probe.flat(i);
    probe.flat(i) = original + options.step;
    const double up = td_loss(probe, target, batch, gamma);
    probe.flat(i) = original - options.step;
    const double down = td_loss(probe, target, batch, gamma);
    probe.flat(i) = original;
    const double numeric = (up - down) / (2.0 * options.step);
    const double exact = options.corrupt_gradient ? -analytic.flat(i) : analytic.flat(i);
    const double magnitude = std::max(std::abs(numeric), std::abs(exact));
    if (magnitude < 1e-10) continue;
    worst = std::max(worst, std::abs(numeric - exact) / std::max(magnitude, 1e-6));
  }
  return worst;
}

std::size_t argmax(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("argmax: empty");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

std::size_t epsilon_greedy(std::span<const double> q_values, std::size_t step,
                           const EpsilonSchedule& schedule, Rng& rng) {
  if (q_values.empty()) throw std::invalid_argument("epsilon_greedy: empty q_values");
  const double eps = schedule.at(step);
  // Both draws are always consumed so the stream position does not depend on eps.
  const double u = rng.uniform01();
  const std::size_t random_action = rng.uniform_index(q_values.size());
  return u < eps ? random_action : argmax(q_values);
}

void save_params(const QNetParams& params, std::ostream& out) {
  out.write(kMagic, 4);
  write_le<std::uint32_t>(out, kVersion);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.layers.size()));
  for (const auto& l : params.layers) {
    write_le<std::uint64_t>(out, static_cast<std::uint64_t>(l.weight.rows()));
    write_le<std::uint64_t>(out, static_cast<std::uint64_t>(l.weight.cols()));
  }
  for (const auto& l : params.layers) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) write_le<double>(out, l.weight(r, c));
    }
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) write_le<double>(out, l.bias(r));
  }
}

QNetParams load_params(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw std::runtime_error("load_params: bad magic");
  if (read_le<std::uint32_t>(in) != kVersion) throw std::runtime_error("load_params: bad version");
  const auto n_layers = read_le<std::uint32_t>(in);
  QNetParams p;
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    const auto rows = static_cast<Eigen::Index>(read_le<std::uint64_t>(in));
    const auto cols = static_cast<Eigen::Index>(read_le<std::uint64_t>(in));
    if (!p.layers.empty() && p.layers.back().weight.rows() != cols) {
      throw std::runtime_error("load_params: inconsistent layer shapes");
    }
    p.layers.push_back({Eigen::MatrixXd(rows, cols), Eigen::VectorXd(rows)});
  }
  for (auto& l : p.layers) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = read_le<double>(in);
    }
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias(r) = read_le<double>(in);
  }
  return p;
}

}  // namespace tabql
