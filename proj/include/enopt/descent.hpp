#pragma once

#include "enopt/linalg.hpp"

#include <functional>
#include <vector>

namespace enopt {

struct DescentConfig {
  double step = 0.012;
  std::size_t n_steps = 400;
  std::vector<Vector> starts = default_starts();

  [[nodiscard]] static std::vector<Vector> default_starts();
};

struct Trajectory {
  /// n_steps + 1 iterates including the start, fewer if aborted.
  std::vector<Vector> points;
  bool aborted = false;
};

using GradientFn = std::function<RowVector(const Vector&)>;

/// u_{k+1} = u_k - step * grad(u_k) from every start. A trajectory stops and
/// is flagged as soon as an iterate is not finite.
[[nodiscard]] std::vector<Trajectory> steepest_descent(const GradientFn& grad,
                                                       const DescentConfig& cfg);

}  // namespace enopt
