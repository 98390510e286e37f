#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace rws {

struct CheckResult {
  std::string name;
  double error = 0.0;  // worst observed discrepancy
  double tolerance = 0.0;
  bool passed = false;
};

// Enumeration-oracle, finite-difference and normalization checks on small
// models. Deterministic in seed.
std::vector<CheckResult> run_checks(std::uint64_t seed = 0);

// One line per check: name, PASS/FAIL, error and tolerance.
std::string format_checks(std::span<const CheckResult> results);

}  // namespace rws
