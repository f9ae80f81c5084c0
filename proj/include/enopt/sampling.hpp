#pragma once

#include "enopt/linalg.hpp"
#include "enopt/random.hpp"

#include <cstdint>
#include <vector>

namespace enopt {

/// N(mean, covariance). The covariance must be symmetric positive
/// semi-definite.
struct GaussianSpec {
  Vector mean;
  Matrix covariance;

  [[nodiscard]] static GaussianSpec isotropic(Vector mean, double variance);
  [[nodiscard]] Index dim() const noexcept { return mean.size(); }
  void validate() const;
};

/// Members are the columns of a d x N matrix; the generating mean is kept
/// alongside so estimators can evaluate at it and recentre to it.
struct Ensemble {
  Matrix members;
  Vector true_mean;
  bool recentred = false;

  [[nodiscard]] Index dim() const noexcept { return members.rows(); }
  [[nodiscard]] Index size() const noexcept { return members.cols(); }
  [[nodiscard]] Vector sample_mean() const { return column_mean(members); }
  [[nodiscard]] Matrix anomalies() const { return center_columns(members).anomalies; }
};

/// Antithetic pair: W is V reflected about the mean.
struct MirroredPair {
  Matrix V;
  Matrix W;
};

/// Lower factor L with L L^T = covariance. Falls back to a symmetric
/// eigen-factor for singular PSD matrices.
[[nodiscard]] Matrix covariance_factor(const Matrix& covariance);

[[nodiscard]] Ensemble draw_ensemble(const GaussianSpec& spec, Index n, Rng& rng);
[[nodiscard]] Ensemble draw_ensemble(const GaussianSpec& spec, Index n,
                                     std::uint64_t seed);

/// Shifts the members so that their sample mean equals true_mean.
[[nodiscard]] Ensemble recenter(const Ensemble& e);

[[nodiscard]] MirroredPair mirror(const Ensemble& e);

/// Second moment of the pooled 2M members about mu, normalised by 2M.
[[nodiscard]] Matrix pooled_covariance(const MirroredPair& pair, const Vector& mu);

/// Contiguous column groups, each recentred to the true mean.
[[nodiscard]] std::vector<Ensemble> partition(const Ensemble& e,
                                              const std::vector<Index>& sizes);

struct DecorrelationResult {
  Ensemble ensemble;
  /// psi had zero norm; the input is returned unchanged.
  bool skipped = false;
  /// A row collapsed under the projection or the anomaly rank dropped.
  bool degenerate = false;
};

/// Projects the anomalies onto the orthogonal complement of psi, restores
/// each row's sample variance, then recentres to the true mean. psi is
/// centred internally.
[[nodiscard]] DecorrelationResult decorrelate(const Ensemble& e, const RowVector& psi);

}  // namespace enopt
