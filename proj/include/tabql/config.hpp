#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "tabql/engine.hpp"

namespace tabql {

/// Raised for any invalid key or value; the message names the field.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Algo { kTabql, kTabularQ, kDqn, kFqi };
std::string_view to_string(Algo algo);
Algo parse_algo(std::string_view name);

struct TabularQConfig {
  /// Constant step size; 0 selects 1 / visit count.
  double alpha = 0.0;
};

struct FqiConfig {
  std::size_t iterations = 50;
  std::size_t eval_episodes = 20;
  /// Steps of behaviour data (uniform-random policy) collected before fitting.
  std::size_t dataset_steps = 20000;
};

struct ExperimentConfig {
  Algo algo = Algo::kTabql;
  EngineConfig engine;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  TabularQConfig tabular;
  FqiConfig fqi;
  std::string output_path = "curve.csv";
  /// Worker threads for independent seeds; 0 picks the hardware concurrency.
  std::size_t threads = 0;

  void validate() const;
};

/// Flat key=value settings. Environment defaults are loaded first, then file
/// contents and overrides; every key is known in advance, so typos are errors.
class Settings {
 public:
  /// Defaults for the named environment (or the generic defaults when empty).
  static Settings defaults(const std::string& env = "");

  /// Parses "key=value" lines with '#' comments. An `env=` line, if present,
  /// reloads the environment defaults before applying the remaining keys.
  static Settings parse(std::istream& in, const std::vector<std::string>& overrides = {});
  static Settings load(const std::string& path, const std::vector<std::string>& overrides = {});

  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;
  const std::map<std::string, std::string>& values() const { return values_; }

  /// Canonical sorted dump; parsing it back yields the same settings.
  std::string dump() const;

  ExperimentConfig to_experiment() const;

 private:
  std::map<std::string, std::string> values_;
};

ExperimentConfig load_experiment(const std::string& path,
                                 const std::vector<std::string>& overrides = {});

}  // namespace tabql
