#pragma once

#include <string>
#include <vector>

namespace ics {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

// Fast formula, gradient and small-MDP checks behind `ics check`.
std::vector<CheckResult> run_self_checks();

}  // namespace ics
