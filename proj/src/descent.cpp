#include "enopt/descent.hpp"

#include <stdexcept>

namespace enopt {

std::vector<Vector> DescentConfig::default_starts() {
  std::vector<Vector> starts;
  for (const auto& [a, b] : {std::pair{-2.2, 2.8}, {2.6, 1.9}, {1.3, -3.1}, {-1.8, -2.4}, {0.4, 3.5}}) {
    Vector v(2);
    v << a, b;
    starts.push_back(v);
  }
  return starts;
}

std::vector<Trajectory> steepest_descent(const GradientFn& grad, const DescentConfig& cfg) {
  if (!(cfg.step >= 0.0)) {
    throw std::invalid_argument("steepest_descent: step must be >= 0");
  }
  std::vector<Trajectory> out;
  out.reserve(cfg.starts.size());
  for (const Vector& start : cfg.starts) {
    Trajectory t;
    t.points.reserve(cfg.n_steps + 1);
    t.points.push_back(start);
    Vector u = start;
    for (std::size_t k = 0; k < cfg.n_steps; ++k) {
      u = u - cfg.step * grad(u).transpose();
      if (!u.allFinite()) {
        t.aborted = true;
        break;
      }
      t.points.push_back(u);
    }
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace enopt
