#pragma once

#include "enopt/linalg.hpp"
#include "enopt/objectives.hpp"
#include "enopt/sampling.hpp"

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace enopt {

enum class EstimatorKind {
  plain_lls,
  fragile,
  paired,
  stosag,
  average_lls,
  generalized_stosag,
  hybrid,
  two_sided,
  mirrored_two_sided,
  one_sided_mirrored,
  decorrelated_paired,
  avg_analytic_grad,
};

inline constexpr std::array<EstimatorKind, 12> kAllEstimators{
    EstimatorKind::plain_lls,          EstimatorKind::fragile,
    EstimatorKind::paired,             EstimatorKind::stosag,
    EstimatorKind::average_lls,        EstimatorKind::generalized_stosag,
    EstimatorKind::hybrid,             EstimatorKind::two_sided,
    EstimatorKind::mirrored_two_sided, EstimatorKind::one_sided_mirrored,
    EstimatorKind::decorrelated_paired, EstimatorKind::avg_analytic_grad,
};

/// Short id used on the command line and in CSV files (e.g. "gen_stosag").
[[nodiscard]] std::string_view estimator_id(EstimatorKind kind) noexcept;
[[nodiscard]] std::optional<EstimatorKind> parse_estimator_id(std::string_view id) noexcept;

/// True for the estimators that consume M groups of subsample_size members
/// (or M independent pairs) rather than one N-member ensemble.
[[nodiscard]] bool uses_subsamples(EstimatorKind kind) noexcept;
/// True for the estimators that pair x_n with u_n and therefore need M == N.
[[nodiscard]] bool requires_pairing(EstimatorKind kind) noexcept;

struct EstimatorSpec {
  EstimatorKind kind = EstimatorKind::plain_lls;
  /// Replace the trailing pseudo-inverse by anomalies^T / (N - 1).
  bool precondition = false;
  PinvConfig pinv{};
  /// Group size N_m for average_lls, generalized_stosag and hybrid.
  Index subsample_size = 2;
  /// Weight on the l(X, mu) baseline subtracted by stosag; 1 is the standard
  /// estimator, other values scale the control variate.
  double baseline_weight = 1.0;
  /// Count the l(X, mu) evaluations in eval_count instead of only in
  /// cached_evals.
  bool charge_cached = false;
  /// avg_analytic_grad averages over the diagonal pairs (x_n, u_n) only.
  bool avg_grad_single_ensemble = false;
};

struct GradientEstimate {
  RowVector grad;
  EstimatorKind kind = EstimatorKind::plain_lls;
  double lambda = 0.0;
  bool preconditioned = false;
  /// Objective (or, for avg_analytic_grad, gradient) evaluations charged.
  std::size_t eval_count = 0;
  /// Evaluations of l(X, mu) assumed available from the previous step.
  std::size_t cached_evals = 0;
  std::vector<std::string> warnings;
};

/// Estimator with all objective evaluations and factorizations done; only
/// the Tikhonov damping remains, so a lambda sweep costs a few dot products.
class PreparedEstimator {
 public:
  [[nodiscard]] GradientEstimate solve(const PinvConfig& pinv) const;
  [[nodiscard]] GradientEstimate solve_preconditioned() const;

  [[nodiscard]] EstimatorKind kind() const noexcept { return kind_; }
  [[nodiscard]] std::size_t eval_count() const noexcept { return eval_count_; }
  [[nodiscard]] std::size_t cached_evals() const noexcept { return cached_evals_; }
  [[nodiscard]] const std::vector<std::string>& warnings() const noexcept { return warnings_; }

 private:
  friend PreparedEstimator prepare_estimator(const ObjectiveSpec&, const Ensemble&,
                                             const Ensemble&, const EstimatorSpec&);

  // weight * projected diag(gain(s)) left^T, from the thin SVD of the
  // matrix being inverted.
  struct Term {
    double weight = 1.0;
    RowVector projected;
    Vector singular;
    Matrix left;
  };

  [[nodiscard]] GradientEstimate make_estimate(RowVector grad, double lambda,
                                               bool preconditioned) const;

  EstimatorKind kind_ = EstimatorKind::plain_lls;
  Index dim_ = 0;
  std::vector<Term> terms_;
  std::optional<RowVector> fixed_;
  RowVector preconditioned_;
  std::size_t eval_count_ = 0;
  std::size_t cached_evals_ = 0;
  std::vector<std::string> warnings_;
};

/// Runs the objective evaluations for spec.kind.
///
/// X holds the M uncertain-parameter members as columns. U is the control
/// ensemble the estimator consumes: N members for the plain, fragile, paired
/// and mirrored families, or M * subsample_size members (M pairs for
/// two_sided, v_m and w_m adjacent) for the subsample estimators. U should be
/// recentred; its true_mean is the evaluation point mu.
///
/// Throws PreconditionError when the shapes do not fit the estimator and
/// DegenerateError when a perturbation direction vanishes.
[[nodiscard]] PreparedEstimator prepare_estimator(const ObjectiveSpec& objective,
                                                  const Ensemble& X, const Ensemble& U,
                                                  const EstimatorSpec& spec);

/// prepare_estimator followed by solve with spec.pinv (or the
/// preconditioned form when spec.precondition is set).
[[nodiscard]] GradientEstimate estimate_gradient(const ObjectiveSpec& objective,
                                                 const Ensemble& X, const Ensemble& U,
                                                 const EstimatorSpec& spec);

}  // namespace enopt
