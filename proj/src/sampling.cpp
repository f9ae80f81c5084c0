#include "enopt/sampling.hpp"

#include "enopt/errors.hpp"

#include <cmath>
#include <numeric>
#include <string>

namespace enopt {

GaussianSpec GaussianSpec::isotropic(Vector mean, double variance) {
  const Index d = mean.size();
  return {std::move(mean), Matrix::Identity(d, d) * variance};
}

void GaussianSpec::validate() const {
  if (mean.size() < 1) {
    throw DimensionError("GaussianSpec: empty mean");
  }
  if (covariance.rows() != mean.size() || covariance.cols() != mean.size()) {
    throw DimensionError("GaussianSpec: covariance is " +
                         std::to_string(covariance.rows()) + "x" +
                         std::to_string(covariance.cols()) + ", mean has " +
                         std::to_string(mean.size()) + " entries");
  }
  const double scale = std::max(1.0, covariance.cwiseAbs().maxCoeff());
  if (!(covariance - covariance.transpose()).isZero(1e-12 * scale)) {
    throw FactorizationError("GaussianSpec: covariance is not symmetric");
  }
}

Matrix covariance_factor(const Matrix& covariance) {
  Eigen::LLT<Matrix> llt(covariance);
  if (llt.info() == Eigen::Success) {
    return llt.matrixL();
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(covariance);
  if (eig.info() != Eigen::Success) {
    throw FactorizationError("covariance_factor: eigendecomposition failed");
  }
  const Vector values = eig.eigenvalues();
  const double scale = std::max(values.cwiseAbs().maxCoeff(), 1e-300);
  if (values.minCoeff() < -1e-12 * scale) {
    throw FactorizationError("covariance_factor: covariance is not positive semi-definite");
  }
  return eig.eigenvectors() * values.cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

Ensemble draw_ensemble(const GaussianSpec& spec, Index n, Rng& rng) {
  spec.validate();
  if (n < 1) {
    throw InsufficientSampleError("draw_ensemble: need N >= 1");
  }
  const Matrix factor = covariance_factor(spec.covariance);
  Matrix z(spec.dim(), n);
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < spec.dim(); ++i) {
      z(i, j) = rng.normal();
    }
  }
  Ensemble e;
  e.members = (factor * z).colwise() + spec.mean;
  e.true_mean = spec.mean;
  e.recentred = false;
  return e;
}

Ensemble draw_ensemble(const GaussianSpec& spec, Index n, std::uint64_t seed) {
  Rng rng(seed);
  return draw_ensemble(spec, n, rng);
}

Ensemble recenter(const Ensemble& e) {
  if (e.size() < 2) {
    throw InsufficientSampleError("recenter: need N >= 2");
  }
  if (e.true_mean.size() != e.dim()) {
    throw DimensionError("recenter: true mean does not match member dimension");
  }
  Ensemble out = e;
  const Vector shift = e.sample_mean() - e.true_mean;
  out.members = e.members.colwise() - shift;
  out.recentred = true;
  return out;
}

MirroredPair mirror(const Ensemble& e) {
  if (!e.recentred) {
    throw PreconditionError("mirror: ensemble must be recentred");
  }
  MirroredPair pair;
  pair.V = e.members;
  pair.W = (-e.members).colwise() + 2.0 * e.true_mean;
  return pair;
}

Matrix pooled_covariance(const MirroredPair& pair, const Vector& mu) {
  if (pair.V.rows() != pair.W.rows() || pair.V.cols() != pair.W.cols() ||
      pair.V.rows() != mu.size()) {
    throw DimensionError("pooled_covariance: dimension mismatch");
  }
  const Matrix dv = pair.V.colwise() - mu;
  const Matrix dw = pair.W.colwise() - mu;
  return (dv * dv.transpose() + dw * dw.transpose()) /
         static_cast<double>(2 * pair.V.cols());
}

std::vector<Ensemble> partition(const Ensemble& e, const std::vector<Index>& sizes) {
  const Index total = std::accumulate(sizes.begin(), sizes.end(), Index{0});
  if (total != e.size()) {
    throw DimensionError("partition: sizes sum to " + std::to_string(total) +
                         " but the ensemble has " + std::to_string(e.size()) +
                         " members");
  }
  std::vector<Ensemble> groups;
  groups.reserve(sizes.size());
  Index start = 0;
  for (const Index size : sizes) {
    if (size < 2) {
      throw InsufficientSampleError("partition: every group needs >= 2 members");
    }
    Ensemble g;
    g.members = e.members.middleCols(start, size);
    g.true_mean = e.true_mean;
    groups.push_back(recenter(g));
    start += size;
  }
  return groups;
}

namespace {

Index numerical_rank(const Matrix& a) {
  if (a.size() == 0) {
    return 0;
  }
  Eigen::JacobiSVD<Matrix> svd(a);
  const Vector s = svd.singularValues();
  if (s.size() == 0 || s(0) <= 0.0) {
    return 0;
  }
  return (s.array() > 1e-10 * s(0)).count();
}

}  // namespace

DecorrelationResult decorrelate(const Ensemble& e, const RowVector& psi_in) {
  if (psi_in.size() != e.size()) {
    throw DimensionError("decorrelate: psi has " + std::to_string(psi_in.size()) +
                         " entries, ensemble has " + std::to_string(e.size()) +
                         " members");
  }
  if (e.size() < 2) {
    throw InsufficientSampleError("decorrelate: need N >= 2");
  }
  DecorrelationResult result;
  const RowVector psi = psi_in.array() - psi_in.mean();
  const double psi_norm2 = psi.squaredNorm();
  const double psi_scale = std::max(psi_in.cwiseAbs().maxCoeff(), 1e-300);
  if (psi_norm2 <= 0.0 || std::sqrt(psi_norm2) <= 1e-14 * psi_scale) {
    result.ensemble = e;
    result.skipped = true;
    return result;
  }

  const Matrix anomalies = e.anomalies();
  Matrix projected = anomalies - (anomalies * psi.transpose()) * psi / psi_norm2;
  for (Index i = 0; i < projected.rows(); ++i) {
    const double before = anomalies.row(i).norm();
    const double after = projected.row(i).norm();
    if (before == 0.0) {
      continue;
    }
    if (after <= 1e-12 * before) {
      projected.row(i).setZero();
      result.degenerate = true;
      continue;
    }
    projected.row(i) *= before / after;
  }
  if (numerical_rank(projected) < numerical_rank(anomalies)) {
    result.degenerate = true;
  }

  result.ensemble.members = projected.colwise() + e.true_mean;
  result.ensemble.true_mean = e.true_mean;
  result.ensemble.recentred = true;
  return result;
}

}  // namespace enopt
