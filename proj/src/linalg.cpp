#include "enopt/linalg.hpp"

#include "enopt/errors.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace enopt {

void CompensatedSum::add(double value) noexcept {
  const double t = sum_ + value;
  if (std::abs(sum_) >= std::abs(value)) {
    compensation_ += (sum_ - t) + value;
  } else {
    compensation_ += (value - t) + sum_;
  }
  sum_ = t;
}

void CompensatedSum::merge(const CompensatedSum& other) noexcept {
  add(other.sum_);
  add(other.compensation_);
}

double compensated_dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimensionError("compensated_dot: length mismatch");
  }
  CompensatedSum acc;
  for (std::size_t i = 0; i < a.size(); ++i) {
    acc.add(a[i] * b[i]);
  }
  return acc.value();
}

Vector column_mean(const Matrix& members) {
  if (members.cols() < 1 || members.rows() < 1) {
    throw DimensionError("column_mean: empty matrix");
  }
  Vector mean(members.rows());
  for (Index i = 0; i < members.rows(); ++i) {
    CompensatedSum acc;
    for (Index n = 0; n < members.cols(); ++n) {
      acc.add(members(i, n));
    }
    mean(i) = acc.value() / static_cast<double>(members.cols());
  }
  return mean;
}

Centred center_columns(const Matrix& members) {
  Centred out;
  out.mean = column_mean(members);
  out.anomalies = members.colwise() - out.mean;
  return out;
}

double tikhonov_gain(double s, double s1, double lambda) noexcept {
  // Numerically null directions are dropped at every lambda; damping alone
  // would still amplify their rounding noise.
  if (s1 <= 0.0 || s < kRankTolerance * s1) {
    return 0.0;
  }
  if (lambda == 0.0) {
    return 1.0 / s;
  }
  const double damp = lambda * s1;
  return s / (s * s + damp * damp);
}

SvdFactors thin_svd(const Matrix& a) {
  if (a.rows() < 1 || a.cols() < 1) {
    throw DimensionError("thin_svd: empty matrix");
  }
  if (!a.allFinite()) {
    throw std::domain_error("thin_svd: non-finite entries");
  }
  Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return {svd.matrixU(), svd.singularValues(), svd.matrixV()};
}

Matrix tikhonov_pinv(const Matrix& a, const PinvConfig& cfg) {
  if (cfg.lambda < 0.0 || !std::isfinite(cfg.lambda)) {
    throw std::invalid_argument("tikhonov_pinv: lambda must be finite and >= 0");
  }
  const SvdFactors f = thin_svd(a);
  const double s1 = f.singular.size() > 0 ? f.singular(0) : 0.0;
  Vector gains(f.singular.size());
  for (Index i = 0; i < gains.size(); ++i) {
    gains(i) = tikhonov_gain(f.singular(i), s1, cfg.lambda);
  }
  return f.right * gains.asDiagonal() * f.left.transpose();
}

Matrix sample_cross_cov(const Matrix& f, const Matrix& anomalies) {
  if (f.cols() != anomalies.cols()) {
    throw DimensionError("sample_cross_cov: F has " + std::to_string(f.cols()) +
                         " columns, anomalies have " +
                         std::to_string(anomalies.cols()));
  }
  const Index n = anomalies.cols();
  if (n < 2) {
    throw InsufficientSampleError("sample_cross_cov: need N >= 2");
  }
  Matrix out(f.rows(), anomalies.rows());
  for (Index i = 0; i < f.rows(); ++i) {
    const RowVector fi = f.row(i);
    for (Index j = 0; j < anomalies.rows(); ++j) {
      const RowVector aj = anomalies.row(j);
      out(i, j) = compensated_dot({fi.data(), static_cast<std::size_t>(n)},
                                  {aj.data(), static_cast<std::size_t>(n)});
    }
  }
  return out / static_cast<double>(n - 1);
}

Matrix uncentred_cross_cov(const Matrix& f, const Matrix& members,
                           const Vector& mu) {
  if (members.cols() < 1) {
    throw DimensionError("uncentred_cross_cov: empty ensemble");
  }
  if (f.cols() != members.cols() || mu.size() != members.rows()) {
    throw DimensionError("uncentred_cross_cov: dimension mismatch");
  }
  const Matrix deviations = members.colwise() - mu;
  Matrix out(f.rows(), members.rows());
  const auto n = static_cast<std::size_t>(members.cols());
  for (Index i = 0; i < f.rows(); ++i) {
    const RowVector fi = f.row(i);
    for (Index j = 0; j < members.rows(); ++j) {
      const RowVector dj = deviations.row(j);
      out(i, j) = compensated_dot({fi.data(), n}, {dj.data(), n});
    }
  }
  return out / static_cast<double>(members.cols());
}

Matrix lls_gradient(const Matrix& f, const Matrix& anomalies,
                    const PinvConfig& cfg) {
  if (f.cols() != anomalies.cols()) {
    throw DimensionError("lls_gradient: F has " + std::to_string(f.cols()) +
                         " columns, anomalies have " +
                         std::to_string(anomalies.cols()));
  }
  return f * tikhonov_pinv(anomalies, cfg);
}

}  // namespace enopt
