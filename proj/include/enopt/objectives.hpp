#pragma once

#include "enopt/linalg.hpp"
#include "enopt/sampling.hpp"

#include <array>
#include <atomic>
#include <cstddef>
#include <functional>
#include <memory>
#include <string>

namespace enopt {

using ConstVectorRef = Eigen::Ref<const Vector>;

/// A conditional objective l(x, u), treated as a black box by the estimators.
/// grad_u and expected_grad are optional.
struct ObjectiveSpec {
  using Eval = std::function<double(const ConstVectorRef& x, const ConstVectorRef& u)>;
  using Grad = std::function<RowVector(const ConstVectorRef& x, const ConstVectorRef& u)>;
  /// E_u[(1/M) sum_m dl/du(x_m, u)] for the columns x_m of X.
  using ExpectedGrad = std::function<RowVector(const Matrix& X, const GaussianSpec& u_spec)>;

  std::string name;
  Eval eval;
  Grad grad_u;
  ExpectedGrad expected_grad;

  [[nodiscard]] bool has_grad() const noexcept { return static_cast<bool>(grad_u); }
};

/// Wraps an objective so that every call to eval (and grad_u) is counted.
/// The counters may be bumped from several threads.
class CountingObjective {
 public:
  explicit CountingObjective(ObjectiveSpec inner);

  [[nodiscard]] const ObjectiveSpec& objective() const noexcept { return counted_; }
  [[nodiscard]] std::size_t evaluations() const noexcept { return evals_->load(); }
  [[nodiscard]] std::size_t gradient_evaluations() const noexcept { return grads_->load(); }
  void reset() noexcept;

 private:
  std::shared_ptr<std::atomic<std::size_t>> evals_;
  std::shared_ptr<std::atomic<std::size_t>> grads_;
  ObjectiveSpec counted_;
};

// Hermite benchmark: l(x, u) = sum_i He_k(u_i + x_i), probabilists' He.

inline constexpr int kMaxHermiteOrder = 6;

/// Probabilists' Hermite polynomial He_n(t).
[[nodiscard]] double hermite_he(int order, double t);

[[nodiscard]] double hermite_eval(int order, const ConstVectorRef& x, const ConstVectorRef& u);
[[nodiscard]] RowVector hermite_grad_u(int order, const ConstVectorRef& x,
                                       const ConstVectorRef& u);

/// Expected gradient conditional on the sampled x-ensemble (columns of X),
/// integrated over u ~ u_spec with Gauss-Hermite quadrature per dimension.
[[nodiscard]] RowVector hermite_expected_grad(int order, const Matrix& X,
                                              const GaussianSpec& u_spec);

/// Expected gradient over both x ~ x_spec and u ~ u_spec.
[[nodiscard]] RowVector hermite_expected_grad_distributional(int order,
                                                             const GaussianSpec& x_spec,
                                                             const GaussianSpec& u_spec);

[[nodiscard]] ObjectiveSpec hermite_objective(int order);

/// 64-point Gauss-Hermite rule for E[g(Z)], Z ~ N(0, 1). Weights sum to 1.
struct GaussHermiteRule {
  static constexpr std::size_t kPoints = 64;
  std::array<double, kPoints> nodes{};
  std::array<double, kPoints> weights{};
};

[[nodiscard]] const GaussHermiteRule& gauss_hermite_rule();

// Rastrigin demo in two dimensions with v_1 = 2 u_1, v_2 = u_2.

[[nodiscard]] double rastrigin_eval(const ConstVectorRef& u);
[[nodiscard]] RowVector rastrigin_grad(const ConstVectorRef& u);

/// mu -> E L(u), u ~ N(mu, blur_variance * I), in closed form.
[[nodiscard]] double rastrigin_blurred(const ConstVectorRef& mu, double blur_variance = 1.0);
[[nodiscard]] RowVector rastrigin_blurred_grad(const ConstVectorRef& mu,
                                               double blur_variance = 1.0);

/// Rastrigin as a conditional objective that ignores x.
[[nodiscard]] ObjectiveSpec rastrigin_objective();

// Bilinear case: l(x, u) = 1^T (A x + B u), gradient 1^T B.

struct BilinearObjective {
  Matrix A;
  Matrix B;

  [[nodiscard]] double eval(const ConstVectorRef& x, const ConstVectorRef& u) const;
  [[nodiscard]] RowVector grad() const;
};

[[nodiscard]] ObjectiveSpec bilinear_objective(const BilinearObjective& bilinear);

}  // namespace enopt
