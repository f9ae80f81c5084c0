#include "enopt/harness.hpp"

#include "enopt/errors.hpp"
#include "enopt/objectives.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace enopt {

BenchConfig BenchConfig::defaults() { return BenchConfig{}; }

void BenchConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw std::invalid_argument(field + ": " + why);
  };
  if (n_trials < 2) fail("n_trials", "must be >= 2");
  if (dims < 1) fail("dims", "must be >= 1");
  if (hermite_orders.empty()) fail("hermite_orders", "must not be empty");
  for (const int k : hermite_orders) {
    if (k < 0 || k > kMaxHermiteOrder) fail("hermite_orders", "order " + std::to_string(k) + " outside [0, 6]");
  }
  if (ensemble_sizes.empty()) fail("ensemble_sizes", "must not be empty");
  for (const Index n : ensemble_sizes) {
    if (n < 2) fail("ensemble_sizes", "every N must be >= 2, got " + std::to_string(n));
  }
  if (lambda_grid.empty()) fail("lambda_grid", "must not be empty");
  for (const double l : lambda_grid) {
    if (!(l >= 0.0) || !std::isfinite(l)) fail("lambda_grid", "entries must be finite and >= 0");
  }
  if (estimators.empty()) fail("estimators", "must not be empty");
  if (u_spec.dim() != dims) fail("u_spec", "dimension must equal dims");
  if (x_spec.dim() != dims) fail("x_spec", "dimension must equal dims");
  try {
    u_spec.validate();
  } catch (const std::exception& e) {
    fail("u_spec", e.what());
  }
  try {
    x_spec.validate();
  } catch (const std::exception& e) {
    fail("x_spec", e.what());
  }
  if (x_ensemble_size && *x_ensemble_size < 1) fail("x_ensemble_size", "must be >= 1");
  if (subsample_size < 2) fail("subsample_size", "must be >= 2");
  if (workers < 1) fail("workers", "must be >= 1");
  if (batches < 1) fail("batches", "must be >= 1");
}

TrialOutcome run_trial(const BenchConfig& cfg, int order, Index n, std::uint64_t trial_index) {
  Rng rng = Rng::child(cfg.base_seed, trial_index).child(static_cast<std::uint64_t>(n));
  const Ensemble x_paired = draw_ensemble(cfg.x_spec, n, rng);
  const Ensemble u_main = recenter(draw_ensemble(cfg.u_spec, n, rng));
  const Index m_free = cfg.x_ensemble_size.value_or(n);
  const Ensemble x_free = cfg.x_ensemble_size ? draw_ensemble(cfg.x_spec, m_free, rng) : x_paired;
  const Ensemble pool = recenter(draw_ensemble(cfg.u_spec, m_free * cfg.subsample_size, rng));
  Ensemble pairs = pool;
  if (cfg.subsample_size != 2) {
    pairs.members = pool.members.leftCols(2 * m_free);
    pairs = recenter(pairs);
  }

  const ObjectiveSpec objective = hermite_objective(order);
  auto truth_for = [&](const Ensemble& x) -> RowVector {
    if (cfg.distributional_truth) {
      return hermite_expected_grad_distributional(order, cfg.x_spec, cfg.u_spec);
    }
    return hermite_expected_grad(order, x.members, cfg.u_spec);
  };
  const RowVector truth_paired = truth_for(x_paired);
  const RowVector truth_free = cfg.x_ensemble_size ? truth_for(x_free) : truth_paired;

  TrialOutcome outcome;
  outcome.truth = truth_paired;
  for (const EstimatorKind kind : cfg.estimators) {
    TrialEntry entry;
    entry.kind = kind;
    EstimatorSpec spec;
    spec.kind = kind;
    spec.subsample_size = cfg.subsample_size;
    spec.avg_grad_single_ensemble = cfg.avg_grad_single_ensemble;

    const bool paired_x = requires_pairing(kind) ||
                          (kind == EstimatorKind::avg_analytic_grad && cfg.avg_grad_single_ensemble);
    const Ensemble& x = paired_x ? x_paired : x_free;
    const RowVector& truth = paired_x ? truth_paired : truth_free;
    const Ensemble& u = !uses_subsamples(kind)              ? u_main
                        : kind == EstimatorKind::two_sided ? pairs
                                                            : pool;
    try {
      const PreparedEstimator prepared = prepare_estimator(objective, x, u, spec);
      entry.evals = prepared.eval_count();
      entry.errors.reserve(cfg.lambda_grid.size());
      for (const double lambda : cfg.lambda_grid) {
        entry.errors.push_back(prepared.solve(PinvConfig{lambda}).grad - truth);
      }
    } catch (const PreconditionError& e) {
      entry.skipped = e.what();
    } catch (const DegenerateError& e) {
      entry.skipped = e.what();
    } catch (const InsufficientSampleError& e) {
      entry.skipped = e.what();
    }
    outcome.entries.push_back(std::move(entry));
  }
  return outcome;
}

// Statistics.

ErrorAccumulator::ErrorAccumulator(Index dims)
    : sum_(static_cast<std::size_t>(dims)), sum_sq_(static_cast<std::size_t>(dims)) {}

void ErrorAccumulator::add(const RowVector& error) {
  if (sum_.empty()) {
    *this = ErrorAccumulator(error.size());
  }
  if (error.size() != dims()) {
    throw DimensionError("ErrorAccumulator: error vector has wrong length");
  }
  for (Index i = 0; i < error.size(); ++i) {
    sum_[static_cast<std::size_t>(i)].add(error(i));
    sum_sq_[static_cast<std::size_t>(i)].add(error(i) * error(i));
  }
  ++count_;
}

void ErrorAccumulator::merge(const ErrorAccumulator& other) {
  if (other.count_ == 0) {
    return;
  }
  if (sum_.empty()) {
    *this = other;
    return;
  }
  if (other.dims() != dims()) {
    throw DimensionError("ErrorAccumulator: merging different dimensions");
  }
  for (std::size_t i = 0; i < sum_.size(); ++i) {
    sum_[i].merge(other.sum_[i]);
    sum_sq_[i].merge(other.sum_sq_[i]);
  }
  count_ += other.count_;
  evals = std::max(evals, other.evals);
}

double ErrorAccumulator::rmse() const {
  if (count_ == 0) {
    throw std::logic_error("rmse of an empty accumulator");
  }
  double total = 0.0;
  for (Index i = 0; i < dims(); ++i) {
    total += std::sqrt(std::max(0.0, sum_sq(i) / static_cast<double>(count_)));
  }
  return total / static_cast<double>(dims());
}

double ErrorAccumulator::bias() const {
  if (count_ == 0) {
    throw std::logic_error("bias of an empty accumulator");
  }
  double total = 0.0;
  for (Index i = 0; i < dims(); ++i) {
    total += std::abs(sum(i) / static_cast<double>(count_));
  }
  return total / static_cast<double>(dims());
}

void TrialStats::add_trial(int order, Index n, const TrialOutcome& outcome) {
  for (const TrialEntry& entry : outcome.entries) {
    if (entry.skipped) {
      ++skips_[SkipKey{entry.kind, order, n}][*entry.skipped];
      continue;
    }
    for (std::size_t l = 0; l < entry.errors.size(); ++l) {
      ErrorAccumulator& acc = cells_[StatKey{entry.kind, order, n, l}];
      acc.add(entry.errors[l]);
      acc.evals = entry.evals;
    }
  }
}

void TrialStats::merge(const TrialStats& other) {
  for (const auto& [key, acc] : other.cells_) {
    cells_[key].merge(acc);
  }
  for (const auto& [key, reasons] : other.skips_) {
    for (const auto& [reason, count] : reasons) {
      skips_[key][reason] += count;
    }
  }
}

const ErrorAccumulator* TrialStats::find(const StatKey& key) const {
  const auto it = cells_.find(key);
  return it == cells_.end() ? nullptr : &it->second;
}

std::vector<ResultRow> aggregate(const TrialStats& stats, const std::vector<double>& lambda_grid) {
  if (stats.empty()) {
    throw std::invalid_argument("aggregate: no statistics collected");
  }
  std::vector<ResultRow> rows;
  rows.reserve(stats.cells().size());
  for (const auto& [key, acc] : stats.cells()) {
    if (acc.count() < 2) {
      throw std::invalid_argument("aggregate: " + std::string(estimator_id(key.kind)) +
                                  " has fewer than two trials at N = " + std::to_string(key.n));
    }
    if (key.lambda_index >= lambda_grid.size()) {
      throw std::invalid_argument("aggregate: lambda index outside the grid");
    }
    ResultRow row;
    row.estimator = std::string(estimator_id(key.kind));
    row.order = key.order;
    row.n = key.n;
    row.lambda = lambda_grid[key.lambda_index];
    row.rmse = acc.rmse();
    row.bias = acc.bias();
    row.evals = acc.evals;
    row.trials = acc.count();
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<ResultRow> select_best_lambda(const std::vector<ResultRow>& rows, SelectionMetric metric) {
  std::vector<ResultRow> best;
  auto score = [metric](const ResultRow& r) { return metric == SelectionMetric::rmse ? r.rmse : r.bias; };
  for (const ResultRow& row : rows) {
    auto it = std::find_if(best.begin(), best.end(), [&](const ResultRow& b) {
      return b.estimator == row.estimator && b.order == row.order && b.n == row.n;
    });
    if (it == best.end()) {
      best.push_back(row);
    } else if (score(row) < score(*it) || (score(row) == score(*it) && row.lambda < it->lambda)) {
      *it = row;
    }
  }
  return best;
}

// Benchmark driver.

BenchResult run_benchmark(const BenchConfig& cfg, const ProgressFn& progress) {
  cfg.validate();
  const std::size_t n_batches = std::min(cfg.batches, cfg.n_trials);
  struct Unit {
    int order;
    Index n;
    std::size_t batch;
  };
  std::vector<Unit> units;
  for (const int order : cfg.hermite_orders) {
    for (const Index n : cfg.ensemble_sizes) {
      for (std::size_t b = 0; b < n_batches; ++b) {
        units.push_back({order, n, b});
      }
    }
  }
  auto batch_begin = [&](std::size_t b) { return b * cfg.n_trials / n_batches; };

  std::vector<TrialStats> partial(units.size());
  std::vector<std::optional<std::string>> errors(units.size());
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> done{0};
  std::mutex progress_mutex;

  auto worker = [&]() {
    for (;;) {
      const std::size_t u = next.fetch_add(1);
      if (u >= units.size()) {
        return;
      }
      const Unit& unit = units[u];
      try {
        for (std::size_t t = batch_begin(unit.batch); t < batch_begin(unit.batch + 1); ++t) {
          partial[u].add_trial(unit.order, unit.n, run_trial(cfg, unit.order, unit.n, t));
        }
      } catch (const std::exception& e) {
        errors[u] = e.what();
        partial[u] = TrialStats{};
      }
      const std::size_t finished = done.fetch_add(1) + 1;
      if (progress) {
        std::lock_guard lock(progress_mutex);
        progress(finished, units.size());
      }
    }
  };

  const std::size_t n_workers = std::max<std::size_t>(1, std::min(cfg.workers, units.size()));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (std::size_t w = 0; w < n_workers; ++w) {
      threads.emplace_back(worker);
    }
    for (auto& t : threads) {
      t.join();
    }
  }

  BenchResult result;
  result.batches.resize(n_batches);
  std::map<std::pair<int, Index>, std::string> failed;
  for (std::size_t u = 0; u < units.size(); ++u) {
    if (errors[u]) {
      failed.emplace(std::make_pair(units[u].order, units[u].n), *errors[u]);
    }
  }
  for (std::size_t u = 0; u < units.size(); ++u) {
    if (failed.count({units[u].order, units[u].n}) != 0) {
      continue;
    }
    result.batches[units[u].batch].merge(partial[u]);
  }
  for (const TrialStats& b : result.batches) {
    result.total.merge(b);
  }
  for (const auto& [key, message] : failed) {
    result.failures.push_back({key.first, key.second, message});
  }
  if (!result.total.empty()) {
    result.rows = aggregate(result.total, cfg.lambda_grid);
  }
  return result;
}

Band bootstrap_band(const std::vector<TrialStats>& batches, const StatKey& key,
                    SelectionMetric metric, double level, std::size_t resamples,
                    std::uint64_t seed) {
  std::vector<const ErrorAccumulator*> cells;
  for (const TrialStats& b : batches) {
    if (const ErrorAccumulator* acc = b.find(key); acc != nullptr && acc->count() > 0) {
      cells.push_back(acc);
    }
  }
  if (cells.empty()) {
    throw std::invalid_argument("bootstrap_band: no data for the requested cell");
  }
  const Index d = cells.front()->dims();
  const std::size_t k = cells.size();
  Matrix sums(d, static_cast<Index>(k));
  Matrix sum_sqs(d, static_cast<Index>(k));
  std::vector<double> counts(k);
  for (std::size_t j = 0; j < k; ++j) {
    counts[j] = static_cast<double>(cells[j]->count());
    for (Index i = 0; i < d; ++i) {
      sums(i, static_cast<Index>(j)) = cells[j]->sum(i);
      sum_sqs(i, static_cast<Index>(j)) = cells[j]->sum_sq(i);
    }
  }
  Rng rng(seed);
  std::vector<double> stats(resamples);
  Vector s(d);
  Vector ss(d);
  for (std::size_t r = 0; r < resamples; ++r) {
    s.setZero();
    ss.setZero();
    double n = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const auto pick = static_cast<Index>(rng.next_u64() % k);
      s += sums.col(pick);
      ss += sum_sqs.col(pick);
      n += counts[static_cast<std::size_t>(pick)];
    }
    double value = 0.0;
    for (Index i = 0; i < d; ++i) {
      value += metric == SelectionMetric::rmse ? std::sqrt(std::max(0.0, ss(i) / n)) : std::abs(s(i) / n);
    }
    stats[r] = value / static_cast<double>(d);
  }
  std::sort(stats.begin(), stats.end());
  const double tail = 0.5 * (1.0 - level);
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(resamples - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, resamples - 1);
    const double frac = pos - static_cast<double>(lo);
    return stats[lo] * (1.0 - frac) + stats[hi] * frac;
  };
  return {quantile(tail), quantile(1.0 - tail)};
}

VarianceReduction variance_reduction_experiment(double rho, double r, std::size_t samples,
                                                std::uint64_t seed) {
  if (samples < 2) {
    throw InsufficientSampleError("variance_reduction_experiment: need >= 2 samples");
  }
  if (!(rho >= -1.0 && rho <= 1.0) || !(r >= 0.0)) {
    throw std::invalid_argument("variance_reduction_experiment: need |rho| <= 1 and r >= 0");
  }
  GaussianSpec spec;
  spec.mean = Vector::Zero(2);
  spec.covariance.resize(2, 2);
  spec.covariance << 1.0, rho * r, rho * r, r * r;
  const Ensemble draws = draw_ensemble(spec, static_cast<Index>(samples), seed);
  const Centred c = center_columns(draws.members);
  const RowVector a = c.anomalies.row(0);
  const RowVector diff = c.anomalies.row(0) - c.anomalies.row(1);
  const auto n = static_cast<std::size_t>(a.size());
  const double var_a = compensated_dot({a.data(), n}, {a.data(), n});
  const double var_diff = compensated_dot({diff.data(), n}, {diff.data(), n});
  return {(var_a - var_diff) / var_a, r * (2.0 * rho - r)};
}

}  // namespace enopt
