#pragma once

#include <string>
#include <vector>

#include "natadiff/experiment.hpp"

namespace natadiff {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

// Schedule, score, posterior, victim-gradient and adversarial-gradient checks
// for a loaded experiment.
std::vector<CheckResult> run_self_checks(const Experiment& exp, const VictimRegistry& victims);

}  // namespace natadiff
