#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace tabql {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Property checks on the operators, the error decomposition, the bound
/// trace, the network gradient and the gates.
std::vector<CheckResult> theory_suite(std::uint64_t seed = 0);

}  // namespace tabql
