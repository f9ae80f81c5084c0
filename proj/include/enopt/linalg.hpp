#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <span>

namespace enopt {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Index = Eigen::Index;

/// Tikhonov parameter, relative to the largest singular value.
/// lambda == 0 gives the plain Moore-Penrose inverse.
struct PinvConfig {
  double lambda = 0.0;
};

/// Singular values below this fraction of the largest are treated as zero
/// (at every lambda).
inline constexpr double kRankTolerance = 1e-12;

/// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double value) noexcept;
  void merge(const CompensatedSum& other) noexcept;
  [[nodiscard]] double value() const noexcept { return sum_ + compensation_; }

 private:
  double sum_ = 0.0;
  double compensation_ = 0.0;
};

[[nodiscard]] double compensated_dot(std::span<const double> a,
                                     std::span<const double> b);

struct Centred {
  Matrix anomalies;
  Vector mean;
};

/// Subtracts the column-wise sample mean from every column.
[[nodiscard]] Centred center_columns(const Matrix& members);

/// Row-wise (compensated) mean across columns.
[[nodiscard]] Vector column_mean(const Matrix& members);

/// Damping applied to singular value s given the largest singular value s1:
/// s / (s^2 + (lambda s1)^2), zero below kRankTolerance * s1.
[[nodiscard]] double tikhonov_gain(double s, double s1, double lambda) noexcept;

/// Thin SVD A = U diag(s) V^T with singular values in decreasing order.
struct SvdFactors {
  Matrix left;     // rows(A) x r
  Vector singular;  // r
  Matrix right;    // cols(A) x r
};

[[nodiscard]] SvdFactors thin_svd(const Matrix& a);

/// V diag(s_i / (s_i^2 + (lambda s_1)^2)) U^T. Zero input gives a zero matrix
/// of transposed shape.
[[nodiscard]] Matrix tikhonov_pinv(const Matrix& a, const PinvConfig& cfg = {});

/// F anomalies^T / (N - 1). F is not centred: constants cancel against the
/// centred anomalies.
[[nodiscard]] Matrix sample_cross_cov(const Matrix& f, const Matrix& anomalies);

/// (1/N) sum_n f_n (u_n - mu)^T, the estimate that uses the known mean.
[[nodiscard]] Matrix uncentred_cross_cov(const Matrix& f, const Matrix& members,
                                         const Vector& mu);

/// Ensemble regression gradient F anomalies^+.
[[nodiscard]] Matrix lls_gradient(const Matrix& f, const Matrix& anomalies,
                                  const PinvConfig& cfg = {});

}  // namespace enopt
