#include "enopt/objectives.hpp"

#include "enopt/errors.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace enopt {

CountingObjective::CountingObjective(ObjectiveSpec inner)
    : evals_(std::make_shared<std::atomic<std::size_t>>(0)),
      grads_(std::make_shared<std::atomic<std::size_t>>(0)) {
  counted_.name = inner.name;
  counted_.expected_grad = inner.expected_grad;
  counted_.eval = [evals = evals_, f = inner.eval](const ConstVectorRef& x,
                                                   const ConstVectorRef& u) {
    evals->fetch_add(1, std::memory_order_relaxed);
    return f(x, u);
  };
  if (inner.grad_u) {
    counted_.grad_u = [grads = grads_, g = inner.grad_u](const ConstVectorRef& x,
                                                         const ConstVectorRef& u) {
      grads->fetch_add(1, std::memory_order_relaxed);
      return g(x, u);
    };
  }
}

void CountingObjective::reset() noexcept {
  evals_->store(0);
  grads_->store(0);
}

// Hermite.

namespace {

void check_order(int order) {
  if (order < 0 || order > kMaxHermiteOrder) {
    throw std::out_of_range("Hermite order must be in [0, " +
                            std::to_string(kMaxHermiteOrder) + "], got " +
                            std::to_string(order));
  }
}

void check_dims(const ConstVectorRef& x, const ConstVectorRef& u) {
  if (x.size() != u.size()) {
    throw DimensionError("Hermite objective: x has " + std::to_string(x.size()) +
                         " entries, u has " + std::to_string(u.size()));
  }
}

GaussHermiteRule build_rule() {
  constexpr auto n = static_cast<Index>(GaussHermiteRule::kPoints);
  // Jacobi matrix of the monic recurrence t He_k = He_{k+1} + k He_{k-1}.
  Matrix jacobi = Matrix::Zero(n, n);
  for (Index k = 1; k < n; ++k) {
    const double off = std::sqrt(static_cast<double>(k));
    jacobi(k, k - 1) = off;
    jacobi(k - 1, k) = off;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(jacobi);
  GaussHermiteRule rule;
  double total = 0.0;
  for (Index k = 0; k < n; ++k) {
    const double v0 = eig.eigenvectors()(0, k);
    rule.nodes[static_cast<std::size_t>(k)] = eig.eigenvalues()(k);
    rule.weights[static_cast<std::size_t>(k)] = v0 * v0;
    total += v0 * v0;
  }
  for (auto& w : rule.weights) {
    w /= total;
  }
  return rule;
}

}  // namespace

const GaussHermiteRule& gauss_hermite_rule() {
  static const GaussHermiteRule rule = build_rule();
  return rule;
}

double hermite_he(int order, double t) {
  check_order(order);
  if (order == 0) {
    return 1.0;
  }
  double prev = 1.0;
  double cur = t;
  for (int k = 1; k < order; ++k) {
    const double next = t * cur - k * prev;
    prev = cur;
    cur = next;
  }
  return cur;
}

double hermite_eval(int order, const ConstVectorRef& x, const ConstVectorRef& u) {
  check_order(order);
  check_dims(x, u);
  double total = 0.0;
  for (Index i = 0; i < u.size(); ++i) {
    total += hermite_he(order, u(i) + x(i));
  }
  return total;
}

RowVector hermite_grad_u(int order, const ConstVectorRef& x, const ConstVectorRef& u) {
  check_order(order);
  check_dims(x, u);
  RowVector g = RowVector::Zero(u.size());
  if (order == 0) {
    return g;
  }
  for (Index i = 0; i < u.size(); ++i) {
    g(i) = order * hermite_he(order - 1, u(i) + x(i));
  }
  return g;
}

namespace {

/// E[order * He_{order-1}(c + s Z)], Z ~ N(0, 1).
double expected_derivative(int order, double centre, double sd) {
  if (order == 0) {
    return 0.0;
  }
  const auto& rule = gauss_hermite_rule();
  CompensatedSum acc;
  for (std::size_t k = 0; k < GaussHermiteRule::kPoints; ++k) {
    acc.add(rule.weights[k] * hermite_he(order - 1, centre + sd * rule.nodes[k]));
  }
  return order * acc.value();
}

}  // namespace

RowVector hermite_expected_grad(int order, const Matrix& X, const GaussianSpec& u_spec) {
  check_order(order);
  u_spec.validate();
  if (X.rows() != u_spec.dim() || X.cols() < 1) {
    throw DimensionError("hermite_expected_grad: x-ensemble is " + std::to_string(X.rows()) +
                         "x" + std::to_string(X.cols()) + ", u has dimension " +
                         std::to_string(u_spec.dim()));
  }
  RowVector out(u_spec.dim());
  for (Index i = 0; i < u_spec.dim(); ++i) {
    const double sd = std::sqrt(u_spec.covariance(i, i));
    CompensatedSum acc;
    for (Index m = 0; m < X.cols(); ++m) {
      acc.add(expected_derivative(order, u_spec.mean(i) + X(i, m), sd));
    }
    out(i) = acc.value() / static_cast<double>(X.cols());
  }
  return out;
}

RowVector hermite_expected_grad_distributional(int order, const GaussianSpec& x_spec,
                                               const GaussianSpec& u_spec) {
  check_order(order);
  x_spec.validate();
  u_spec.validate();
  if (x_spec.dim() != u_spec.dim()) {
    throw DimensionError("hermite_expected_grad_distributional: dimension mismatch");
  }
  RowVector out(u_spec.dim());
  for (Index i = 0; i < u_spec.dim(); ++i) {
    const double sd = std::sqrt(u_spec.covariance(i, i) + x_spec.covariance(i, i));
    out(i) = expected_derivative(order, u_spec.mean(i) + x_spec.mean(i), sd);
  }
  return out;
}

ObjectiveSpec hermite_objective(int order) {
  check_order(order);
  ObjectiveSpec spec;
  spec.name = "hermite" + std::to_string(order);
  spec.eval = [order](const ConstVectorRef& x, const ConstVectorRef& u) {
    return hermite_eval(order, x, u);
  };
  spec.grad_u = [order](const ConstVectorRef& x, const ConstVectorRef& u) {
    return hermite_grad_u(order, x, u);
  };
  spec.expected_grad = [order](const Matrix& X, const GaussianSpec& u_spec) {
    return hermite_expected_grad(order, X, u_spec);
  };
  return spec;
}

// Rastrigin.

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr std::array<double, 2> kStretch{2.0, 1.0};

void check_plane(const ConstVectorRef& u) {
  if (u.size() != 2) {
    throw DimensionError("Rastrigin objective is two-dimensional, got " +
                         std::to_string(u.size()));
  }
}

}  // namespace

double rastrigin_eval(const ConstVectorRef& u) {
  check_plane(u);
  double total = 20.0;
  for (Index i = 0; i < 2; ++i) {
    const double v = kStretch[static_cast<std::size_t>(i)] * u(i);
    total += v * v - 10.0 * std::cos(kTwoPi * v);
  }
  return total;
}

RowVector rastrigin_grad(const ConstVectorRef& u) {
  check_plane(u);
  RowVector g(2);
  for (Index i = 0; i < 2; ++i) {
    const double a = kStretch[static_cast<std::size_t>(i)];
    const double v = a * u(i);
    g(i) = a * (2.0 * v + 10.0 * kTwoPi * std::sin(kTwoPi * v));
  }
  return g;
}

double rastrigin_blurred(const ConstVectorRef& mu, double blur_variance) {
  check_plane(mu);
  double total = 20.0;
  for (Index i = 0; i < 2; ++i) {
    const double a = kStretch[static_cast<std::size_t>(i)];
    const double m = a * mu(i);
    const double var = a * a * blur_variance;
    const double damping = std::exp(-0.5 * kTwoPi * kTwoPi * var);
    total += m * m + var - 10.0 * std::cos(kTwoPi * m) * damping;
  }
  return total;
}

RowVector rastrigin_blurred_grad(const ConstVectorRef& mu, double blur_variance) {
  check_plane(mu);
  RowVector g(2);
  for (Index i = 0; i < 2; ++i) {
    const double a = kStretch[static_cast<std::size_t>(i)];
    const double m = a * mu(i);
    const double damping = std::exp(-0.5 * kTwoPi * kTwoPi * a * a * blur_variance);
    g(i) = a * (2.0 * m + 10.0 * kTwoPi * std::sin(kTwoPi * m) * damping);
  }
  return g;
}

ObjectiveSpec rastrigin_objective() {
  ObjectiveSpec spec;
  spec.name = "rastrigin";
  spec.eval = [](const ConstVectorRef&, const ConstVectorRef& u) { return rastrigin_eval(u); };
  spec.grad_u = [](const ConstVectorRef&, const ConstVectorRef& u) { return rastrigin_grad(u); };
  return spec;
}

// Bilinear.

double BilinearObjective::eval(const ConstVectorRef& x, const ConstVectorRef& u) const {
  if (A.cols() != x.size() || B.cols() != u.size() || A.rows() != B.rows()) {
    throw DimensionError("bilinear objective: A is " + std::to_string(A.rows()) + "x" +
                         std::to_string(A.cols()) + ", B is " + std::to_string(B.rows()) +
                         "x" + std::to_string(B.cols()) + ", x has " +
                         std::to_string(x.size()) + ", u has " + std::to_string(u.size()));
  }
  return (A * x + B * u).sum();
}

RowVector BilinearObjective::grad() const { return B.colwise().sum(); }

ObjectiveSpec bilinear_objective(const BilinearObjective& bilinear) {
  ObjectiveSpec spec;
  spec.name = "bilinear";
  spec.eval = [bilinear](const ConstVectorRef& x, const ConstVectorRef& u) {
    return bilinear.eval(x, u);
  };
  spec.grad_u = [g = bilinear.grad()](const ConstVectorRef&, const ConstVectorRef&) {
    return g;
  };
  spec.expected_grad = [g = bilinear.grad()](const Matrix&, const GaussianSpec&) { return g; };
  return spec;
}

}  // namespace enopt
