#pragma once

#include "enopt/estimators.hpp"
#include "enopt/linalg.hpp"
#include "enopt/sampling.hpp"

#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace enopt {

/// Hermite benchmark configuration. Defaults: u ~ N(0, I/100),
/// x ~ N([-2, ..., 2], I/4), five dimensions, M = N.
struct BenchConfig {
  std::uint64_t base_seed = 20240601;
  std::size_t n_trials = 10000;
  Index dims = 5;
  std::vector<int> hermite_orders{0, 1, 2, 3, 4, 5, 6};
  std::vector<Index> ensemble_sizes{3, 4, 5, 6, 8, 10, 15, 20, 30, 50, 100};
  std::vector<double> lambda_grid{0.0, 1e-4, 1e-3, 1e-2, 3e-2, 1e-1, 3e-1};
  std::vector<EstimatorKind> estimators{kAllEstimators.begin(), kAllEstimators.end()};
  GaussianSpec u_spec = GaussianSpec::isotropic(Vector::Zero(5), 1.0 / 100.0);
  GaussianSpec x_spec = GaussianSpec::isotropic(Vector::LinSpaced(5, -2.0, 2.0), 1.0 / 4.0);
  /// Truth averaged over the x distribution instead of the sampled x_m.
  bool distributional_truth = false;
  bool avg_grad_single_ensemble = false;
  /// Size of the x-ensemble for the estimators that do not pair x with u.
  std::optional<Index> x_ensemble_size;
  Index subsample_size = 2;
  std::size_t workers = 1;
  /// Trials are grouped into this many batches; bootstrap bands resample
  /// whole batches.
  std::size_t batches = 100;

  [[nodiscard]] static BenchConfig defaults();
  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

struct TrialEntry {
  EstimatorKind kind = EstimatorKind::plain_lls;
  /// Signed error (estimate - truth) for each lambda in the grid.
  std::vector<RowVector> errors;
  std::size_t evals = 0;
  std::optional<std::string> skipped;
};

struct TrialOutcome {
  RowVector truth;
  std::vector<TrialEntry> entries;
};

/// One seeded replicate: draws X, U (recentred) and the subsample pool from
/// the stream (base_seed, trial_index, N) and evaluates every configured
/// estimator at every lambda.
[[nodiscard]] TrialOutcome run_trial(const BenchConfig& cfg, int order, Index n,
                                     std::uint64_t trial_index);

/// Per-dimension sums of errors and squared errors.
class ErrorAccumulator {
 public:
  ErrorAccumulator() = default;
  explicit ErrorAccumulator(Index dims);

  void add(const RowVector& error);
  void merge(const ErrorAccumulator& other);

  [[nodiscard]] std::size_t count() const noexcept { return count_; }
  [[nodiscard]] Index dims() const noexcept { return static_cast<Index>(sum_.size()); }
  [[nodiscard]] double sum(Index i) const { return sum_[static_cast<std::size_t>(i)].value(); }
  [[nodiscard]] double sum_sq(Index i) const {
    return sum_sq_[static_cast<std::size_t>(i)].value();
  }
  /// Root-mean-square error per dimension, averaged over dimensions.
  [[nodiscard]] double rmse() const;
  /// |mean error| per dimension, averaged over dimensions.
  [[nodiscard]] double bias() const;

  std::size_t evals = 0;

 private:
  std::size_t count_ = 0;
  std::vector<CompensatedSum> sum_;
  std::vector<CompensatedSum> sum_sq_;
};

struct StatKey {
  EstimatorKind kind = EstimatorKind::plain_lls;
  int order = 0;
  Index n = 0;
  std::size_t lambda_index = 0;

  auto operator<=>(const StatKey&) const = default;
};

struct SkipKey {
  EstimatorKind kind = EstimatorKind::plain_lls;
  int order = 0;
  Index n = 0;

  auto operator<=>(const SkipKey&) const = default;
};

class TrialStats {
 public:
  void add_trial(int order, Index n, const TrialOutcome& outcome);
  void merge(const TrialStats& other);

  [[nodiscard]] bool empty() const noexcept { return cells_.empty(); }
  [[nodiscard]] const std::map<StatKey, ErrorAccumulator>& cells() const noexcept {
    return cells_;
  }
  [[nodiscard]] const std::map<SkipKey, std::map<std::string, std::size_t>>& skips() const noexcept {
    return skips_;
  }
  [[nodiscard]] const ErrorAccumulator* find(const StatKey& key) const;

 private:
  std::map<StatKey, ErrorAccumulator> cells_;
  std::map<SkipKey, std::map<std::string, std::size_t>> skips_;
};

struct ResultRow {
  std::string estimator;
  int order = 0;
  Index n = 0;
  double lambda = 0.0;
  double rmse = 0.0;
  double bias = 0.0;
  std::size_t evals = 0;
  std::size_t trials = 0;

  bool operator==(const ResultRow&) const = default;
};

/// One row per (estimator, order, N, lambda). Throws if stats is empty or a
/// cell has fewer than two trials.
[[nodiscard]] std::vector<ResultRow> aggregate(const TrialStats& stats,
                                               const std::vector<double>& lambda_grid);

enum class SelectionMetric { rmse, bias };

/// Keeps the best lambda per (estimator, order, N); ties go to the smaller
/// lambda.
[[nodiscard]] std::vector<ResultRow> select_best_lambda(const std::vector<ResultRow>& rows,
                                                        SelectionMetric metric = SelectionMetric::rmse);

struct BenchFailure {
  int order = 0;
  Index n = 0;
  std::string message;
};

struct BenchResult {
  TrialStats total;
  /// total split by trial batch, for bootstrap bands.
  std::vector<TrialStats> batches;
  std::vector<ResultRow> rows;
  std::vector<BenchFailure> failures;
};

using ProgressFn = std::function<void(std::size_t done, std::size_t total)>;

/// Runs every (order, N, trial) on cfg.workers threads. The result does not
/// depend on the worker count.
[[nodiscard]] BenchResult run_benchmark(const BenchConfig& cfg, const ProgressFn& progress = {});

struct Band {
  double low = 0.0;
  double high = 0.0;
};

/// Percentile bootstrap over trial batches of the rmse or bias of one cell.
[[nodiscard]] Band bootstrap_band(const std::vector<TrialStats>& batches, const StatKey& key,
                                  SelectionMetric metric, double level = 0.95,
                                  std::size_t resamples = 1000, std::uint64_t seed = 7);

struct VarianceReduction {
  double measured = 0.0;
  double predicted = 0.0;
};

/// Scalar control-variate experiment: a ~ N(0, 1), b with Var(b)/Var(a) = r^2
/// and corr(a, b) = rho. Compares the sampled relative variance improvement
/// of a - b with r (2 rho - r).
[[nodiscard]] VarianceReduction variance_reduction_experiment(double rho, double r,
                                                              std::size_t samples,
                                                              std::uint64_t seed);

}  // namespace enopt
