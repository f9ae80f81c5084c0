#pragma once

#include "enopt/linalg.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace enopt {

/// Identity suite on the bilinear objective l(x, u) = 1^T (A x + B u), whose
/// expected gradient is 1^T B.
struct LinearCheckOptions {
  Index dims = 5;
  std::size_t seeds = 100;
  Index ensemble_size = 16;
  bool zero_a = false;
  /// Passed to stosag as its baseline weight; -1 flips the sign of the
  /// correction, which the suite must detect.
  double stosag_baseline_weight = 1.0;
  std::uint64_t base_seed = 1;
};

struct CheckResult {
  std::string name;
  bool passed = false;
  /// Worst observed discrepancy (or z-score for the unbiasedness checks).
  double observed = 0.0;
  double tolerance = 0.0;
  std::string detail;
};

[[nodiscard]] std::vector<CheckResult> run_linear_checks(const LinearCheckOptions& options);

}  // namespace enopt
