#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace adaqat {

struct CheckResult {
  std::string name;
  bool passed = false;
  int trials = 0;
  double max_error = 0.0;  // worst error in the check's own metric
  std::string detail;
};

struct GradcheckOptions {
  std::uint64_t seed = 1;
  int oracle_trials = 1000;   // random tensors for the fake-quant oracle
  int fd_trials = 100;        // random smooth compositions
  double fd_step = 1e-3;
  double fd_tolerance = 1e-3;
};

/// Fake-quant gradients against scalar loops (bit-exact), smooth op
/// compositions against double-precision central differences, Swish and
/// cross-entropy against direct formulas.
std::vector<CheckResult> run_gradcheck(const GradcheckOptions& opts = {});

}  // namespace adaqat
