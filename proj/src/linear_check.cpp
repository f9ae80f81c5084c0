#include "enopt/linear_check.hpp"

#include "enopt/estimators.hpp"
#include "enopt/objectives.hpp"
#include "enopt/random.hpp"
#include "enopt/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace enopt {

namespace {

constexpr double kExactTol = 1e-8;
constexpr double kDecorrTol = 1e-6;
constexpr double kBandSigmas = 3.0;

Matrix random_matrix(Index rows, Index cols, Rng& rng) {
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j) {
    for (Index i = 0; i < rows; ++i) {
      m(i, j) = rng.normal();
    }
  }
  return m;
}

double max_abs(const RowVector& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

struct Worst {
  double value = 0.0;
  std::size_t seed = 0;

  void update(double v, std::size_t s) {
    if (!(v <= value)) {  // also catches NaN
      value = v;
      seed = s;
    }
  }
};

/// Running mean and standard error per component.
struct MeanTracker {
  std::vector<RowVector> samples;

  [[nodiscard]] double worst_z(const RowVector& target) const {
    const auto n = static_cast<double>(samples.size());
    RowVector mean = RowVector::Zero(target.size());
    for (const auto& s : samples) mean += s;
    mean /= n;
    RowVector var = RowVector::Zero(target.size());
    for (const auto& s : samples) var += (s - mean).cwiseAbs2();
    var /= (n - 1.0);
    double worst = 0.0;
    for (Index i = 0; i < target.size(); ++i) {
      const double se = std::sqrt(var(i) / n);
      const double gap = std::abs(mean(i) - target(i));
      const double z = se > 0.0 ? gap / se : (gap > 1e-12 * (1.0 + std::abs(target(i))) ? INFINITY : 0.0);
      worst = std::max(worst, z);
    }
    return worst;
  }
};

}  // namespace

std::vector<CheckResult> run_linear_checks(const LinearCheckOptions& options) {
  if (options.dims < 1) {
    throw std::invalid_argument("linear check: dims must be >= 1");
  }
  if (options.seeds < 2) {
    throw std::invalid_argument("linear check: need at least 2 seeds");
  }
  if (options.ensemble_size - 1 < options.dims) {
    throw std::invalid_argument("linear check: ensemble size must exceed dims");
  }
  const Index d = options.dims;
  const Index n = options.ensemble_size;

  Rng setup = Rng::child(options.base_seed, 0);
  BilinearObjective bilinear;
  bilinear.A = options.zero_a ? Matrix::Zero(d, d) : random_matrix(d, d, setup);
  bilinear.B = random_matrix(d, d, setup);
  const ObjectiveSpec objective = bilinear_objective(bilinear);
  const RowVector target = bilinear.grad();

  const double u_variance = 1.0 / 100.0;
  GaussianSpec u_spec = GaussianSpec::isotropic(random_matrix(d, 1, setup).col(0), u_variance);
  const GaussianSpec x_spec = GaussianSpec::isotropic(Vector::Zero(d), 1.0);
  const RowVector precond_target = target * u_spec.covariance;

  std::map<std::string, Worst> worst;
  MeanTracker paired_pre;
  MeanTracker stosag_pre;

  auto run = [&](EstimatorKind kind, const Ensemble& X, const Ensemble& U, double baseline = 1.0) {
    EstimatorSpec spec;
    spec.kind = kind;
    spec.baseline_weight = baseline;
    return prepare_estimator(objective, X, U, spec);
  };

  for (std::size_t s = 0; s < options.seeds; ++s) {
    Rng rng = Rng::child(options.base_seed, s + 1);
    const Ensemble X = draw_ensemble(x_spec, n, rng);
    const Ensemble U = recenter(draw_ensemble(u_spec, n, rng));
    const Ensemble pool = recenter(draw_ensemble(u_spec, 2 * n, rng));

    const auto stosag = run(EstimatorKind::stosag, X, U, options.stosag_baseline_weight);
    worst["stosag_exact"].update(max_abs(stosag.solve({}).grad - target), s);

    const auto paired = run(EstimatorKind::paired, X, U);
    const Matrix upinv = tikhonov_pinv(U.anomalies());
    const RowVector predicted_error = bilinear.A.colwise().sum() * X.members * upinv;
    worst["paired_error_formula"].update(
        max_abs(paired.solve({}).grad - target - predicted_error), s);
    if (options.zero_a) {
      worst["paired_exact_when_a_zero"].update(max_abs(paired.solve({}).grad - target), s);
    }

    const auto decorr = run(EstimatorKind::decorrelated_paired, X, U);
    worst["decorr_eliminates_error"].update(max_abs(decorr.solve({}).grad - target), s);

    for (const EstimatorKind kind : {EstimatorKind::plain_lls, EstimatorKind::fragile,
                                     EstimatorKind::mirrored_two_sided,
                                     EstimatorKind::one_sided_mirrored}) {
      worst[std::string(estimator_id(kind)) + "_exact"].update(
          max_abs(run(kind, X, U).solve({}).grad - target), s);
    }
    for (const EstimatorKind kind : {EstimatorKind::generalized_stosag, EstimatorKind::two_sided}) {
      worst[std::string(estimator_id(kind)) + "_exact"].update(
          max_abs(run(kind, X, pool).solve({}).grad - target), s);
    }

    paired_pre.samples.push_back(paired.solve_preconditioned().grad);
    stosag_pre.samples.push_back(run(EstimatorKind::stosag, X, U).solve_preconditioned().grad);
  }

  std::vector<CheckResult> results;
  auto exact = [&](const std::string& name, double tol) {
    const Worst& w = worst.at(name);
    results.push_back({name, w.value <= tol, w.value, tol,
                       "max |error| over " + std::to_string(options.seeds) + " seeds (worst seed " +
                           std::to_string(w.seed) + ")"});
  };
  exact("stosag_exact", kExactTol);
  exact("paired_error_formula", kExactTol);
  if (options.zero_a) {
    exact("paired_exact_when_a_zero", kExactTol);
  }
  exact("decorr_eliminates_error", kDecorrTol);
  for (const char* name : {"plain_lls_exact", "fragile_exact", "mirrored2s_exact", "one_sided_exact",
                           "gen_stosag_exact", "two_sided_exact"}) {
    exact(name, kExactTol);
  }
  auto band = [&](const std::string& name, const MeanTracker& t) {
    const double z = t.worst_z(precond_target);
    results.push_back({name, z <= kBandSigmas, z, kBandSigmas,
                       "largest |mean - 1^T B C_u| / standard error over dimensions"});
  };
  band("paired_preconditioned_unbiased", paired_pre);
  band("stosag_preconditioned_unbiased", stosag_pre);
  return results;
}

}  // namespace enopt
