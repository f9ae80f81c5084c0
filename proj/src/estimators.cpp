#include "enopt/estimators.hpp"

#include "enopt/errors.hpp"

#include <cmath>
#include <string>
#include <tuple>

namespace enopt {

namespace {

struct IdEntry {
  EstimatorKind kind;
  std::string_view id;
};

constexpr std::array<IdEntry, 12> kIds{{
    {EstimatorKind::plain_lls, "plain_lls"},
    {EstimatorKind::fragile, "fragile"},
    {EstimatorKind::paired, "paired"},
    {EstimatorKind::stosag, "stosag"},
    {EstimatorKind::average_lls, "average_lls"},
    {EstimatorKind::generalized_stosag, "gen_stosag"},
    {EstimatorKind::hybrid, "hybrid"},
    {EstimatorKind::two_sided, "two_sided"},
    {EstimatorKind::mirrored_two_sided, "mirrored2s"},
    {EstimatorKind::one_sided_mirrored, "one_sided"},
    {EstimatorKind::decorrelated_paired, "decorr"},
    {EstimatorKind::avg_analytic_grad, "avg_grad"},
}};

}  // namespace

std::string_view estimator_id(EstimatorKind kind) noexcept {
  for (const auto& e : kIds) {
    if (e.kind == kind) {
      return e.id;
    }
  }
  return "unknown";
}

std::optional<EstimatorKind> parse_estimator_id(std::string_view id) noexcept {
  for (const auto& e : kIds) {
    if (e.id == id) {
      return e.kind;
    }
  }
  return std::nullopt;
}

bool uses_subsamples(EstimatorKind kind) noexcept {
  switch (kind) {
    case EstimatorKind::average_lls:
    case EstimatorKind::generalized_stosag:
    case EstimatorKind::hybrid:
    case EstimatorKind::two_sided:
      return true;
    default:
      return false;
  }
}

bool requires_pairing(EstimatorKind kind) noexcept {
  switch (kind) {
    case EstimatorKind::paired:
    case EstimatorKind::stosag:
    case EstimatorKind::mirrored_two_sided:
    case EstimatorKind::one_sided_mirrored:
    case EstimatorKind::decorrelated_paired:
      return true;
    default:
      return false;
  }
}

namespace {


std::string shape(Index rows, Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

/// Row [l(x, u_n)]_n for a fixed x.
RowVector eval_fixed_x(const ObjectiveSpec& obj, const ConstVectorRef& x, const Matrix& U) {
  RowVector out(U.cols());
  for (Index n = 0; n < U.cols(); ++n) {
    out(n) = obj.eval(x, U.col(n));
  }
  return out;
}

/// Row [l(x_n, u_n)]_n.
RowVector eval_pairs(const ObjectiveSpec& obj, const Matrix& X, const Matrix& U) {
  RowVector out(U.cols());
  for (Index n = 0; n < U.cols(); ++n) {
    out(n) = obj.eval(X.col(n), U.col(n));
  }
  return out;
}

/// Row [l(x_m, mu)]_m.
RowVector eval_at_point(const ObjectiveSpec& obj, const Matrix& X, const Vector& mu) {
  RowVector out(X.cols());
  for (Index m = 0; m < X.cols(); ++m) {
    out(m) = obj.eval(X.col(m), mu);
  }
  return out;
}

void require_pairing(const Ensemble& X, const Ensemble& U, EstimatorKind kind) {
  if (X.size() != U.size()) {
    throw PreconditionError(std::string(estimator_id(kind)) + " pairs x_n with u_n and needs M == N; got M = " +
                            std::to_string(X.size()) + ", N = " + std::to_string(U.size()));
  }
}

std::size_t count(Index n) { return static_cast<std::size_t>(n); }

}  // namespace

// Each builder below fills terms_, preconditioned_ and the evaluation counts.
// The numerator rows are never centred explicitly: the pseudo-inverse of a
// centred anomaly matrix annihilates constants.

namespace {

struct Builder {
  const ObjectiveSpec& obj;
  const Ensemble& X;
  const Ensemble& U;
  const EstimatorSpec& spec;
  Index d;

  struct Output {
    std::vector<std::tuple<double, RowVector, Vector, Matrix>> terms;
    std::optional<RowVector> fixed;
    RowVector preconditioned;
    std::size_t evals = 0;
    std::size_t cached = 0;
    std::vector<std::string> warnings;
  } out;

  void regression(double weight, const RowVector& f, const Matrix& a) {
    const SvdFactors svd = thin_svd(a);
    out.terms.emplace_back(weight, f * svd.right, svd.singular, svd.left);
  }

  // Closed form for a two-member group with anomalies [v, -v]:
  // single singular value sqrt(2)|v|, left vector v/|v|, right (1,-1)/sqrt(2).
  void two_member(double weight, const RowVector& f, const Matrix& a) {
    const Vector half = 0.5 * (a.col(0) - a.col(1));
    const double norm = half.norm();
    if (!(norm > 0.0)) {
      throw DegenerateError("two-member group has identical members");
    }
    Vector s(1);
    s(0) = std::sqrt(2.0) * norm;
    RowVector projected(1);
    projected(0) = (f(0) - f(1)) / std::sqrt(2.0);
    out.terms.emplace_back(weight, projected, s, half / norm);
  }

  void ratio(const RowVector& c, const Matrix& cov) {
    const SvdFactors svd = thin_svd(cov);
    out.terms.emplace_back(1.0, c * svd.right, svd.singular, svd.left);
  }

  void check_subsamples() const {
    const Index m = X.size();
    const Index nm = spec.subsample_size;
    if (nm < 2) {
      throw PreconditionError("subsample_size must be >= 2");
    }
    if (U.size() != m * nm) {
      throw PreconditionError(std::string(estimator_id(spec.kind)) + " needs M * N_m = " +
                              std::to_string(m) + " * " + std::to_string(nm) +
                              " control members, got " + std::to_string(U.size()));
    }
  }

  void plain_lls() {
    const Index n = U.size();
    RowVector mean_row = RowVector::Zero(n);
    std::vector<CompensatedSum> acc(count(n));
    for (Index m = 0; m < X.size(); ++m) {
      const RowVector row = eval_fixed_x(obj, X.members.col(m), U.members);
      for (Index j = 0; j < n; ++j) {
        acc[count(j)].add(row(j));
      }
    }
    for (Index j = 0; j < n; ++j) {
      mean_row(j) = acc[count(j)].value() / static_cast<double>(X.size());
    }
    const Matrix a = U.anomalies();
    regression(1.0, mean_row, a);
    out.preconditioned = sample_cross_cov(mean_row, a);
    out.evals = count(X.size() * n);
  }

  void fragile() {
    const Vector xbar = X.sample_mean();
    const RowVector row = eval_fixed_x(obj, xbar, U.members);
    const Matrix a = U.anomalies();
    regression(1.0, row, a);
    out.preconditioned = sample_cross_cov(row, a);
    out.evals = count(U.size());
  }

  void paired_like(const RowVector& row, const Matrix& a) {
    regression(1.0, row, a);
    out.preconditioned = sample_cross_cov(row, a);
  }

  void paired() {
    require_pairing(X, U, spec.kind);
    paired_like(eval_pairs(obj, X.members, U.members), U.anomalies());
    out.evals = count(U.size());
  }

  void stosag() {
    require_pairing(X, U, spec.kind);
    const RowVector values = eval_pairs(obj, X.members, U.members);
    const RowVector baseline = eval_at_point(obj, X.members, U.true_mean);
    paired_like(values - spec.baseline_weight * baseline, U.anomalies());
    out.evals = count(U.size());
    out.cached = count(X.size());
  }

  struct Groups {
    std::vector<RowVector> values;
    std::vector<Matrix> anomalies;
  };

  // Contiguous blocks of subsample_size members; x_m goes with block m.
  // Members are evaluated where they are; each block's anomalies are taken
  // about its own sample mean.
  Groups evaluate_groups() {
    check_subsamples();
    const Index nm = spec.subsample_size;
    Groups g;
    for (Index m = 0; m < X.size(); ++m) {
      const Matrix block = U.members.middleCols(m * nm, nm);
      g.values.push_back(eval_fixed_x(obj, X.members.col(m), block));
      g.anomalies.push_back(center_columns(block).anomalies);
    }
    out.evals = count(U.size());
    return g;
  }

  void average_lls() {
    const Groups g = evaluate_groups();
    const double w = 1.0 / static_cast<double>(X.size());
    out.preconditioned = RowVector::Zero(d);
    for (std::size_t m = 0; m < g.values.size(); ++m) {
      if (g.anomalies[m].cols() == 2) {
        two_member(w, g.values[m], g.anomalies[m]);
      } else {
        regression(w, g.values[m], g.anomalies[m]);
      }
      out.preconditioned += w * sample_cross_cov(g.values[m], g.anomalies[m]);
    }
  }

  // (sum_m c_m)(sum_m C_m)^+ = G S^+ with S = [A_m / sqrt(N_m - 1)] and
  // G = [l_m / sqrt(N_m - 1)], by the pseudo-inverse identity.
  void generalized_stosag() {
    const Groups g = evaluate_groups();
    const Index total = U.size();
    RowVector big_g(total);
    Matrix big_s(d, total);
    Index col = 0;
    for (std::size_t m = 0; m < g.values.size(); ++m) {
      const Index nm = g.anomalies[m].cols();
      const double scale = 1.0 / std::sqrt(static_cast<double>(nm - 1));
      big_g.segment(col, nm) = g.values[m] * scale;
      big_s.middleCols(col, nm) = g.anomalies[m] * scale;
      col += nm;
    }
    regression(1.0, big_g, big_s);
    out.preconditioned = big_g * big_s.transpose() / static_cast<double>(X.size());
  }

  void hybrid() {
    const Groups g = evaluate_groups();
    RowVector c = RowVector::Zero(d);
    for (std::size_t m = 0; m < g.values.size(); ++m) {
      c += sample_cross_cov(g.values[m], g.anomalies[m]);
    }
    c /= static_cast<double>(X.size());
    const Matrix pooled = U.anomalies();
    const Matrix cov = pooled * pooled.transpose() / static_cast<double>(pooled.cols() - 1);
    ratio(c, cov);
    out.preconditioned = c;
  }

  void two_sided() {
    const Index m = X.size();
    if (U.size() != 2 * m) {
      throw PreconditionError("two_sided needs 2M = " + std::to_string(2 * m) +
                              " control members (v_m, w_m adjacent), got " +
                              std::to_string(U.size()));
    }
    Matrix diff(d, m);
    RowVector delta(m);
    for (Index j = 0; j < m; ++j) {
      const auto v = U.members.col(2 * j);
      const auto w = U.members.col(2 * j + 1);
      diff.col(j) = v - w;
      if (!(diff.col(j).norm() > 0.0)) {
        throw DegenerateError("two_sided: v_" + std::to_string(j) + " == w_" +
                              std::to_string(j));
      }
      delta(j) = obj.eval(X.members.col(j), v) - obj.eval(X.members.col(j), w);
    }
    regression(1.0, delta, diff);
    out.preconditioned = delta * diff.transpose() / static_cast<double>(2 * m);
    out.evals = count(2 * m);
  }

  void mirrored_two_sided() {
    require_pairing(X, U, spec.kind);
    const MirroredPair pair = mirror(U);
    const RowVector plus = eval_pairs(obj, X.members, pair.V);
    const RowVector minus = eval_pairs(obj, X.members, pair.W);
    paired_like(0.5 * (plus - minus), U.anomalies());
    out.evals = count(2 * U.size());
  }

  // l(X, mu - A) is not evaluated: it is reconstructed as the reflection of
  // l(X, mu + A) about l(X, mu) and fed into the mirrored formula.
  void one_sided_mirrored() {
    require_pairing(X, U, spec.kind);
    const RowVector plus = eval_pairs(obj, X.members, U.members);
    const RowVector centre = eval_at_point(obj, X.members, U.true_mean);
    const RowVector minus = 2.0 * centre - plus;
    paired_like(0.5 * (plus - minus), U.anomalies());
    out.evals = count(U.size());
    out.cached = count(X.size());
  }

  void decorrelated_paired() {
    require_pairing(X, U, spec.kind);
    const RowVector centre = eval_at_point(obj, X.members, U.true_mean);
    const DecorrelationResult dec = decorrelate(U, centre);
    if (dec.skipped) {
      out.warnings.emplace_back("decorr: l(X, mu) is constant; no decorrelation applied");
    }
    const Matrix a = dec.ensemble.anomalies();
    if (dec.degenerate) {
      if (a.isZero(0.0)) {
        throw DegenerateError("decorr: projecting out l(X, mu) removed every direction");
      }
      out.warnings.emplace_back("decorr: projection lost rank");
    }
    paired_like(eval_pairs(obj, X.members, dec.ensemble.members), a);
    out.evals = count(U.size());
    out.cached = count(X.size());
  }

  void avg_analytic_grad() {
    if (!obj.has_grad()) {
      throw PreconditionError("avg_grad needs an analytic gradient");
    }
    std::vector<CompensatedSum> acc(count(d));
    std::size_t terms = 0;
    auto add = [&](const ConstVectorRef& x, const ConstVectorRef& u) {
      const RowVector g = obj.grad_u(x, u);
      for (Index i = 0; i < d; ++i) {
        acc[count(i)].add(g(i));
      }
      ++terms;
    };
    if (spec.avg_grad_single_ensemble) {
      require_pairing(X, U, spec.kind);
      for (Index n = 0; n < U.size(); ++n) {
        add(X.members.col(n), U.members.col(n));
      }
    } else {
      for (Index m = 0; m < X.size(); ++m) {
        for (Index n = 0; n < U.size(); ++n) {
          add(X.members.col(m), U.members.col(n));
        }
      }
    }
    RowVector g(d);
    for (Index i = 0; i < d; ++i) {
      g(i) = acc[count(i)].value() / static_cast<double>(terms);
    }
    out.fixed = g;
    const Matrix a = U.anomalies();
    out.preconditioned = g * (a * a.transpose()) / static_cast<double>(a.cols() - 1);
    out.evals = terms;
  }
};

}  // namespace

PreparedEstimator prepare_estimator(const ObjectiveSpec& objective, const Ensemble& X,
                                    const Ensemble& U, const EstimatorSpec& spec) {
  if (!objective.eval) {
    throw PreconditionError("objective has no eval function");
  }
  if (X.size() < 1) {
    throw PreconditionError("x-ensemble is empty");
  }
  if (U.size() < 2) {
    throw InsufficientSampleError("control ensemble needs N >= 2, got " +
                                  std::to_string(U.size()));
  }
  if (U.true_mean.size() != U.dim()) {
    throw DimensionError("control ensemble: true mean has " + std::to_string(U.true_mean.size()) +
                         " entries, members are " + shape(U.dim(), U.size()));
  }

  Builder b{objective, X, U, spec, U.dim(), {}};
  switch (spec.kind) {
    case EstimatorKind::plain_lls: b.plain_lls(); break;
    case EstimatorKind::fragile: b.fragile(); break;
    case EstimatorKind::paired: b.paired(); break;
    case EstimatorKind::stosag: b.stosag(); break;
    case EstimatorKind::average_lls: b.average_lls(); break;
    case EstimatorKind::generalized_stosag: b.generalized_stosag(); break;
    case EstimatorKind::hybrid: b.hybrid(); break;
    case EstimatorKind::two_sided: b.two_sided(); break;
    case EstimatorKind::mirrored_two_sided: b.mirrored_two_sided(); break;
    case EstimatorKind::one_sided_mirrored: b.one_sided_mirrored(); break;
    case EstimatorKind::decorrelated_paired: b.decorrelated_paired(); break;
    case EstimatorKind::avg_analytic_grad: b.avg_analytic_grad(); break;
  }

  PreparedEstimator p;
  p.kind_ = spec.kind;
  p.dim_ = U.dim();
  for (auto& [weight, projected, singular, left] : b.out.terms) {
    p.terms_.push_back({weight, std::move(projected), std::move(singular), std::move(left)});
  }
  p.fixed_ = std::move(b.out.fixed);
  p.preconditioned_ = std::move(b.out.preconditioned);
  p.eval_count_ = b.out.evals + (spec.charge_cached ? b.out.cached : 0);
  p.cached_evals_ = b.out.cached;
  p.warnings_ = std::move(b.out.warnings);
  return p;
}

GradientEstimate PreparedEstimator::make_estimate(RowVector grad, double lambda,
                                                  bool preconditioned) const {
  GradientEstimate e;
  e.grad = std::move(grad);
  e.kind = kind_;
  e.lambda = lambda;
  e.preconditioned = preconditioned;
  e.eval_count = eval_count_;
  e.cached_evals = cached_evals_;
  e.warnings = warnings_;
  return e;
}

GradientEstimate PreparedEstimator::solve(const PinvConfig& pinv) const {
  if (pinv.lambda < 0.0 || !std::isfinite(pinv.lambda)) {
    throw std::invalid_argument("lambda must be finite and >= 0");
  }
  if (fixed_) {
    return make_estimate(*fixed_, pinv.lambda, false);
  }
  RowVector grad = RowVector::Zero(dim_);
  for (const Term& t : terms_) {
    const double s1 = t.singular.size() > 0 ? t.singular(0) : 0.0;
    for (Index i = 0; i < t.singular.size(); ++i) {
      const double coeff = t.weight * t.projected(i) * tikhonov_gain(t.singular(i), s1, pinv.lambda);
      if (coeff != 0.0) {
        grad += coeff * t.left.col(i).transpose();
      }
    }
  }
  return make_estimate(std::move(grad), pinv.lambda, false);
}

GradientEstimate PreparedEstimator::solve_preconditioned() const {
  return make_estimate(preconditioned_, 0.0, true);
}

GradientEstimate estimate_gradient(const ObjectiveSpec& objective, const Ensemble& X,
                                   const Ensemble& U, const EstimatorSpec& spec) {
  const PreparedEstimator p = prepare_estimator(objective, X, U, spec);
  return spec.precondition ? p.solve_preconditioned() : p.solve(spec.pinv);
}

}  // namespace enopt
