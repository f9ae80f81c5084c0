#include "doctest.h"

#include "enopt/errors.hpp"
#include "enopt/estimators.hpp"
#include "enopt/random.hpp"

#include <cmath>

using namespace enopt;

namespace {

Matrix randn(Index r, Index c, Rng& rng) {
  Matrix m(r, c);
  for (Index j = 0; j < c; ++j)
    for (Index i = 0; i < r; ++i) m(i, j) = rng.normal();
  return m;
}

struct BilinearCase {
  BilinearObjective b;
  ObjectiveSpec obj;
  Ensemble X;
  Ensemble U;
  GaussianSpec u_spec;
};

BilinearCase bilinear_case(Index d, Index m, Index n, std::uint64_t seed) {
  Rng rng(seed);
  BilinearCase c;
  c.b = {randn(d, d, rng), randn(d, d, rng)};
  c.obj = bilinear_objective(c.b);
  c.u_spec = GaussianSpec::isotropic(randn(d, 1, rng).col(0), 0.01);
  c.X = draw_ensemble(GaussianSpec::isotropic(Vector::Zero(d), 1.0), m, rng);
  c.U = recenter(draw_ensemble(c.u_spec, n, rng));
  return c;
}

EstimatorSpec spec_of(EstimatorKind kind, double lambda = 0.0, Index nm = 2) {
  EstimatorSpec s;
  s.kind = kind;
  s.pinv.lambda = lambda;
  s.subsample_size = nm;
  return s;
}

double max_abs(const RowVector& v) { return v.cwiseAbs().maxCoeff(); }

ObjectiveSpec custom(std::function<double(const ConstVectorRef&, const ConstVectorRef&)> f) {
  ObjectiveSpec o;
  o.name = "custom";
  o.eval = std::move(f);
  return o;
}

}  // namespace

TEST_CASE("estimator ids") {
  const char* ids[] = {"plain_lls", "fragile",   "paired",     "stosag", "average_lls", "gen_stosag",
                       "hybrid",    "two_sided", "mirrored2s", "one_sided", "decorr",   "avg_grad"};
  std::size_t i = 0;
  for (const auto kind : kAllEstimators) {
    CHECK(estimator_id(kind) == ids[i]);
    CHECK(parse_estimator_id(ids[i]) == kind);
    ++i;
  }
  CHECK_FALSE(parse_estimator_id("StoSAG").has_value());
}

TEST_CASE("bilinear exactness at lambda 0") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto c = bilinear_case(5, 16, 16, seed);
    const RowVector target = c.b.grad();
    for (const auto kind : {EstimatorKind::plain_lls, EstimatorKind::fragile, EstimatorKind::stosag,
                            EstimatorKind::mirrored_two_sided, EstimatorKind::one_sided_mirrored,
                            EstimatorKind::avg_analytic_grad}) {
      CHECK_MESSAGE(max_abs(estimate_gradient(c.obj, c.X, c.U, spec_of(kind)).grad - target) <= 1e-8,
                    estimator_id(kind));
    }
    CHECK(max_abs(estimate_gradient(c.obj, c.X, c.U, spec_of(EstimatorKind::decorrelated_paired)).grad -
                  target) <= 1e-6);

    Rng rng(seed + 100);
    const Ensemble pool = recenter(draw_ensemble(c.u_spec, 32, rng));
    for (const auto kind : {EstimatorKind::generalized_stosag, EstimatorKind::two_sided}) {
      CHECK(max_abs(estimate_gradient(c.obj, c.X, pool, spec_of(kind)).grad - target) <= 1e-8);
    }
    // per-group regression is only exact once each group spans the space
    const Ensemble big = recenter(draw_ensemble(c.u_spec, 16 * 6, rng));
    CHECK(max_abs(estimate_gradient(c.obj, c.X, big, spec_of(EstimatorKind::average_lls, 0.0, 6)).grad -
                  target) <= 1e-8);
    CHECK(max_abs(estimate_gradient(c.obj, c.X, big, spec_of(EstimatorKind::generalized_stosag, 0.0, 6))
                      .grad -
                  target) <= 1e-8);
  }
}

TEST_CASE("average_lls exact in one dimension with pairs") {
  const auto c = bilinear_case(1, 8, 8, 3);
  Rng rng(4);
  const Ensemble pool = recenter(draw_ensemble(c.u_spec, 16, rng));
  CHECK(max_abs(estimate_gradient(c.obj, c.X, pool, spec_of(EstimatorKind::average_lls)).grad -
                c.b.grad()) <= 1e-10);
}

TEST_CASE("paired error formula on the bilinear objective") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto c = bilinear_case(5, 16, 16, seed);
    const RowVector err =
        estimate_gradient(c.obj, c.X, c.U, spec_of(EstimatorKind::paired)).grad - c.b.grad();
    const RowVector predicted =
        RowVector::Ones(5) * c.b.A * c.X.members * tikhonov_pinv(c.U.anomalies());
    CHECK(max_abs(err - predicted) <= 1e-8);
  }
  auto c = bilinear_case(5, 16, 16, 1);
  c.b.A.setZero();
  c.obj = bilinear_objective(c.b);
  CHECK(max_abs(estimate_gradient(c.obj, c.X, c.U, spec_of(EstimatorKind::paired)).grad - c.b.grad()) <=
        1e-8);
}

TEST_CASE("one_sided equals stosag, gen_stosag with pairs equals two_sided") {
  Rng rng(9);
  for (int k = 0; k < 100; ++k) {
    const int order = static_cast<int>(rng.next_u64() % 7);
    const Index n = 3 + static_cast<Index>(rng.next_u64() % 20);
    const double lambda = (k % 3 == 0) ? 0.0 : 0.1 * rng.uniform();
    const auto obj = hermite_objective(order);
    const auto x_spec = GaussianSpec::isotropic(Vector::LinSpaced(5, -2, 2), 0.25);
    const auto u_spec = GaussianSpec::isotropic(Vector::Zero(5), 0.01);
    const Ensemble X = draw_ensemble(x_spec, n, rng);
    const Ensemble U = recenter(draw_ensemble(u_spec, n, rng));
    const Ensemble pool = recenter(draw_ensemble(u_spec, 2 * n, rng));

    const RowVector a = estimate_gradient(obj, X, U, spec_of(EstimatorKind::stosag, lambda)).grad;
    const RowVector b =
        estimate_gradient(obj, X, U, spec_of(EstimatorKind::one_sided_mirrored, lambda)).grad;
    CHECK(max_abs(a - b) <= 1e-12 * std::max(1.0, max_abs(a)));

    const RowVector g =
        estimate_gradient(obj, X, pool, spec_of(EstimatorKind::generalized_stosag, lambda)).grad;
    const RowVector t = estimate_gradient(obj, X, pool, spec_of(EstimatorKind::two_sided, lambda)).grad;
    CHECK(max_abs(g - t) <= 1e-12 * std::max(1.0, max_abs(t)));
  }
}

TEST_CASE("two_sided against the direct formula") {
  Rng rng(10);
  const auto obj = hermite_objective(4);
  const Ensemble X = draw_ensemble(GaussianSpec::isotropic(Vector::Zero(3), 1.0), 7, rng);
  const Ensemble pool = recenter(draw_ensemble(GaussianSpec::isotropic(Vector::Zero(3), 0.1), 14, rng));
  Matrix V(3, 7);
  Matrix W(3, 7);
  RowVector diff(7);
  for (Index m = 0; m < 7; ++m) {
    V.col(m) = pool.members.col(2 * m);
    W.col(m) = pool.members.col(2 * m + 1);
    diff(m) = obj.eval(X.members.col(m), V.col(m)) - obj.eval(X.members.col(m), W.col(m));
  }
  for (const double lambda : {0.0, 0.01, 0.3}) {
    const RowVector direct = diff * tikhonov_pinv(V - W, {lambda});
    const RowVector got = estimate_gradient(obj, X, pool, spec_of(EstimatorKind::two_sided, lambda)).grad;
    CHECK(max_abs(got - direct) <= 1e-12 * std::max(1.0, max_abs(direct)));
  }
  EstimatorSpec pre = spec_of(EstimatorKind::two_sided);
  pre.precondition = true;
  const RowVector direct_pre = diff * (V - W).transpose() / 14.0;
  CHECK(max_abs(estimate_gradient(obj, X, pool, pre).grad - direct_pre) <= 1e-12);
}

TEST_CASE("lambda sweep matches a fresh pinv for each lambda") {
  Rng rng(11);
  const auto obj = hermite_objective(3);
  const Ensemble X = draw_ensemble(GaussianSpec::isotropic(Vector::LinSpaced(5, -2, 2), 0.25), 8, rng);
  const Ensemble U = recenter(draw_ensemble(GaussianSpec::isotropic(Vector::Zero(5), 0.01), 8, rng));
  const auto prepared = prepare_estimator(obj, X, U, spec_of(EstimatorKind::paired));
  RowVector row(8);
  for (Index n = 0; n < 8; ++n) row(n) = obj.eval(X.members.col(n), U.members.col(n));
  for (const double lambda : {0.0, 1e-4, 1e-3, 1e-2, 3e-2, 1e-1, 3e-1}) {
    const RowVector direct = row * tikhonov_pinv(U.anomalies(), {lambda});
    CHECK(max_abs(prepared.solve({lambda}).grad - direct) <= 1e-10 * std::max(1.0, max_abs(direct)));
  }
  CHECK(max_abs(prepared.solve_preconditioned().grad - sample_cross_cov(row, U.anomalies())) <= 1e-12);
}

TEST_CASE("hybrid against an independent computation") {
  Rng rng(12);
  const auto obj = hermite_objective(3);
  const Index m = 6;
  const Index nm = 3;
  const Ensemble X = draw_ensemble(GaussianSpec::isotropic(Vector::Zero(2), 1.0), m, rng);
  const Ensemble pool = recenter(draw_ensemble(GaussianSpec::isotropic(Vector::Zero(2), 0.04), m * nm, rng));
  RowVector c = RowVector::Zero(2);
  for (Index k = 0; k < m; ++k) {
    const Matrix block = pool.members.middleCols(k * nm, nm);
    const Vector mean = block.rowwise().mean();
    for (Index j = 0; j < nm; ++j) {
      c += obj.eval(X.members.col(k), block.col(j)) * (block.col(j) - mean).transpose() / double(nm - 1);
    }
  }
  c /= double(m);
  const Matrix a = pool.anomalies();
  const Matrix total = a * a.transpose() / double(m * nm - 1);
  const RowVector direct = c * total.inverse();
  const RowVector got = estimate_gradient(obj, X, pool, spec_of(EstimatorKind::hybrid, 0.0, nm)).grad;
  CHECK(max_abs(got - direct) <= 1e-10 * std::max(1.0, max_abs(direct)));
}

TEST_CASE("pooling numerator and denominator gives paired on the repeated x-ensemble") {
  Rng rng(13);
  const auto obj = hermite_objective(3);
  const Index m = 5;
  const Index nm = 2;
  const Ensemble X = draw_ensemble(GaussianSpec::isotropic(Vector::Zero(2), 1.0), m, rng);
  const Ensemble pool = recenter(draw_ensemble(GaussianSpec::isotropic(Vector::Zero(2), 0.04), m * nm, rng));
  RowVector values(m * nm);
  Ensemble repeated{Matrix(2, m * nm), X.true_mean, false};
  for (Index k = 0; k < m * nm; ++k) {
    repeated.members.col(k) = X.members.col(k / nm);
    values(k) = obj.eval(repeated.members.col(k), pool.members.col(k));
  }
  const Matrix a = pool.anomalies();
  const RowVector pooled = sample_cross_cov(values, a) * tikhonov_pinv(a * a.transpose() / double(m * nm - 1));
  const RowVector paired = estimate_gradient(obj, repeated, pool, spec_of(EstimatorKind::paired)).grad;
  CHECK(max_abs(pooled - paired) <= 1e-10 * std::max(1.0, max_abs(paired)));
}

TEST_CASE("structural examples") {
  Rng rng(14);
  const Ensemble X = draw_ensemble(GaussianSpec::isotropic(Vector::Zero(3), 1.0), 6, rng);
  const auto u_spec = GaussianSpec::isotropic(Vector::Constant(3, 0.3), 0.05);
  const Ensemble U = recenter(draw_ensemble(u_spec, 6, rng));
  const Ensemble pool = recenter(draw_ensemble(u_spec, 12, rng));

  SUBCASE("constant objective gives zero") {
    const auto obj = custom([](const ConstVectorRef&, const ConstVectorRef&) { return 4.2; });
    for (const auto kind : {EstimatorKind::plain_lls, EstimatorKind::fragile, EstimatorKind::paired,
                            EstimatorKind::stosag, EstimatorKind::mirrored_two_sided}) {
      CHECK(max_abs(estimate_gradient(obj, X, U, spec_of(kind)).grad) <= 1e-12);
    }
  }
  SUBCASE("objective of x only: stosag is zero") {
    const auto obj = custom([](const ConstVectorRef& x, const ConstVectorRef&) { return std::exp(x.sum()); });
    CHECK(max_abs(estimate_gradient(obj, X, U, spec_of(EstimatorKind::stosag)).grad) <= 1e-12);
  }
  SUBCASE("objective of u only: fragile equals plain, decorr equals paired") {
    const auto obj = custom([](const ConstVectorRef&, const ConstVectorRef& u) { return std::sin(u.sum()) + u.squaredNorm(); });
    const RowVector plain = estimate_gradient(obj, X, U, spec_of(EstimatorKind::plain_lls)).grad;
    const RowVector fragile = estimate_gradient(obj, X, U, spec_of(EstimatorKind::fragile)).grad;
    CHECK(max_abs(plain - fragile) <= 1e-12);
    const auto paired = estimate_gradient(obj, X, U, spec_of(EstimatorKind::paired));
    const auto decorr = estimate_gradient(obj, X, U, spec_of(EstimatorKind::decorrelated_paired));
    CHECK(max_abs(paired.grad - decorr.grad) <= 1e-12);
    CHECK_FALSE(decorr.warnings.empty());
  }
  SUBCASE("objective even about mu: mirrored gives zero") {
    const Vector mu = u_spec.mean;
    const auto obj = custom([mu](const ConstVectorRef& x, const ConstVectorRef& u) {
      return x.sum() + (u - mu).squaredNorm();
    });
    CHECK(max_abs(estimate_gradient(obj, X, U, spec_of(EstimatorKind::mirrored_two_sided)).grad) <= 1e-12);
  }
  SUBCASE("average_lls with one group equals plain_lls for that x") {
    const auto obj = hermite_objective(4);
    Ensemble one{X.members.leftCols(1), X.true_mean, false};
    EstimatorSpec s = spec_of(EstimatorKind::average_lls, 0.0, 6);
    const RowVector a = estimate_gradient(obj, one, U, s).grad;
    const RowVector p = estimate_gradient(obj, one, U, spec_of(EstimatorKind::plain_lls)).grad;
    CHECK(max_abs(a - p) <= 1e-10 * std::max(1.0, max_abs(p)));
  }
  SUBCASE("two_sided with identical pair is degenerate") {
    Ensemble bad = pool;
    bad.members.col(1) = bad.members.col(0);
    CHECK_THROWS_AS((void)estimate_gradient(hermite_objective(2), X, bad, spec_of(EstimatorKind::two_sided)),
                    DegenerateError);
  }
}

TEST_CASE("preconditions") {
  Rng rng(15);
  const Ensemble X = draw_ensemble(GaussianSpec::isotropic(Vector::Zero(2), 1.0), 4, rng);
  const Ensemble U = recenter(draw_ensemble(GaussianSpec::isotropic(Vector::Zero(2), 1.0), 5, rng));
  const auto obj = hermite_objective(3);
  for (const auto kind : {EstimatorKind::paired, EstimatorKind::stosag, EstimatorKind::mirrored_two_sided,
                          EstimatorKind::one_sided_mirrored, EstimatorKind::decorrelated_paired}) {
    CHECK_THROWS_AS((void)estimate_gradient(obj, X, U, spec_of(kind)), PreconditionError);
  }
  CHECK_THROWS_AS((void)estimate_gradient(obj, X, U, spec_of(EstimatorKind::average_lls)),
                  PreconditionError);
  Ensemble raw = U;
  raw.recentred = false;
  Ensemble X5 = draw_ensemble(GaussianSpec::isotropic(Vector::Zero(2), 1.0), 5, rng);
  CHECK_THROWS_AS((void)estimate_gradient(obj, X5, raw, spec_of(EstimatorKind::mirrored_two_sided)),
                  PreconditionError);
  const auto no_grad = custom([](const ConstVectorRef&, const ConstVectorRef& u) { return u.sum(); });
  CHECK_THROWS_AS((void)estimate_gradient(no_grad, X5, U, spec_of(EstimatorKind::avg_analytic_grad)),
                  PreconditionError);
}

TEST_CASE("avg_grad baseline") {
  Rng rng(16);
  const Ensemble X = draw_ensemble(GaussianSpec::isotropic(Vector::LinSpaced(5, -2, 2), 0.25), 5, rng);
  const Ensemble U = recenter(draw_ensemble(GaussianSpec::isotropic(Vector::Zero(5), 0.01), 5, rng));
  CHECK(estimate_gradient(hermite_objective(0), X, U, spec_of(EstimatorKind::avg_analytic_grad)).grad.isZero(0.0));
  CHECK(max_abs(estimate_gradient(hermite_objective(1), X, U, spec_of(EstimatorKind::avg_analytic_grad)).grad -
                RowVector::Ones(5)) <= 1e-15);
  const auto g = estimate_gradient(hermite_objective(3), X, U, spec_of(EstimatorKind::avg_analytic_grad));
  RowVector direct = RowVector::Zero(5);
  for (Index m = 0; m < 5; ++m)
    for (Index n = 0; n < 5; ++n) direct += hermite_grad_u(3, X.members.col(m), U.members.col(n)) / 25.0;
  CHECK(max_abs(g.grad - direct) <= 1e-12);
  CHECK(g.eval_count == 25);
  EstimatorSpec single = spec_of(EstimatorKind::avg_analytic_grad);
  single.avg_grad_single_ensemble = true;
  CHECK(estimate_gradient(hermite_objective(3), X, U, single).eval_count == 5);
}

TEST_CASE("eval counts match the evaluations performed") {
  Rng rng(17);
  const Index n = 7;
  const Ensemble X = draw_ensemble(GaussianSpec::isotropic(Vector::Zero(3), 1.0), n, rng);
  const Ensemble U = recenter(draw_ensemble(GaussianSpec::isotropic(Vector::Zero(3), 0.01), n, rng));
  const Ensemble pool = recenter(draw_ensemble(GaussianSpec::isotropic(Vector::Zero(3), 0.01), 2 * n, rng));
  struct Expect {
    EstimatorKind kind;
    std::size_t evals;
    std::size_t cached;
  };
  const std::size_t un = static_cast<std::size_t>(n);
  for (const Expect e : {Expect{EstimatorKind::plain_lls, un * un, 0}, Expect{EstimatorKind::fragile, un, 0},
                         Expect{EstimatorKind::paired, un, 0}, Expect{EstimatorKind::stosag, un, un},
                         Expect{EstimatorKind::average_lls, 2 * un, 0},
                         Expect{EstimatorKind::generalized_stosag, 2 * un, 0},
                         Expect{EstimatorKind::hybrid, 2 * un, 0}, Expect{EstimatorKind::two_sided, 2 * un, 0},
                         Expect{EstimatorKind::mirrored_two_sided, 2 * un, 0},
                         Expect{EstimatorKind::one_sided_mirrored, un, un},
                         Expect{EstimatorKind::decorrelated_paired, un, un}}) {
    CountingObjective counter(hermite_objective(3));
    const Ensemble& u = uses_subsamples(e.kind) ? pool : U;
    const auto g = estimate_gradient(counter.objective(), X, u, spec_of(e.kind));
    CHECK_MESSAGE(g.eval_count == e.evals, estimator_id(e.kind));
    CHECK_MESSAGE(g.cached_evals == e.cached, estimator_id(e.kind));
    CHECK_MESSAGE(counter.evaluations() == e.evals + e.cached, estimator_id(e.kind));
  }
  CountingObjective counter(hermite_objective(3));
  EstimatorSpec charged = spec_of(EstimatorKind::stosag);
  charged.charge_cached = true;
  const auto g = estimate_gradient(counter.objective(), X, U, charged);
  CHECK(g.eval_count == 2 * un);
  CHECK(counter.evaluations() == 2 * un);
}

TEST_CASE("stosag variance does not exceed paired on Hermite order 3") {
  const auto obj = hermite_objective(3);
  const auto x_spec = GaussianSpec::isotropic(Vector::LinSpaced(5, -2, 2), 0.25);
  const auto u_spec = GaussianSpec::isotropic(Vector::Zero(5), 0.01);
  const Index n = 30;
  RowVector s1 = RowVector::Zero(5), s2 = RowVector::Zero(5), p1 = RowVector::Zero(5), p2 = RowVector::Zero(5);
  const int seeds = 1000;
  for (int k = 0; k < seeds; ++k) {
    Rng rng = Rng::child(55, static_cast<std::uint64_t>(k));
    const Ensemble X = draw_ensemble(x_spec, n, rng);
    const Ensemble U = recenter(draw_ensemble(u_spec, n, rng));
    const RowVector s = estimate_gradient(obj, X, U, spec_of(EstimatorKind::stosag)).grad;
    const RowVector p = estimate_gradient(obj, X, U, spec_of(EstimatorKind::paired)).grad;
    s1 += s;
    s2 += s.cwiseAbs2();
    p1 += p;
    p2 += p.cwiseAbs2();
  }
  for (Index i = 0; i < 5; ++i) {
    const double vs = s2(i) / seeds - std::pow(s1(i) / seeds, 2);
    const double vp = p2(i) / seeds - std::pow(p1(i) / seeds, 2);
    CHECK(vs <= vp);
  }
}

TEST_CASE("mutated stosag baseline weight breaks exactness") {
  auto c = bilinear_case(5, 16, 16, 2);
  EstimatorSpec s = spec_of(EstimatorKind::stosag);
  s.baseline_weight = -1.0;
  CHECK(max_abs(estimate_gradient(c.obj, c.X, c.U, s).grad - c.b.grad()) > 1e-3);
}
