#pragma once

#include "statgeo/core.hpp"

#include <utility>

namespace statgeo {

/// Endpoint-constrained C¹ cubic curve on [0, 1]:
///
///   c(t) = (1 - t) z₀ + t z₁ + p(t)
///
/// where p is a piecewise cubic Hermite spline on `segments` uniform pieces with
/// p(0) = p(1) = 0. The free coefficients of each dimension are p at the interior knots
/// followed by p' at all knots: 2·segments numbers per dimension.
class SplineCurve {
 public:
  SplineCurve() = default;
  SplineCurve(Vec z0, Vec z1, int segments = 4);
  SplineCurve(Vec z0, Vec z1, int segments, Mat coefficients);

  const Vec& start() const noexcept { return z0_; }
  const Vec& end() const noexcept { return z1_; }
  int segments() const noexcept { return segments_; }
  Eigen::Index dim() const noexcept { return z0_.size(); }

  /// d x (2·segments), row per latent dimension.
  const Mat& coefficients() const noexcept { return coeffs_; }
  void set_coefficients(const Mat& c);

  Eigen::Index free_count() const noexcept { return coeffs_.size(); }
  /// Column-major flattening of the coefficient matrix.
  Vec free_parameters() const;
  void set_free_parameters(const Vec& x);

  /// Position and velocity at t ∈ [0, 1]; throws OutOfRange otherwise.
  std::pair<Vec, Vec> eval(double t) const;
  Vec position(double t) const { return eval(t).first; }

  /// Weights b(t), b'(t) with p(t) = coefficients · b(t).
  void basis(double t, Vec& value, Vec& derivative) const;

 private:
  Vec z0_;
  Vec z1_;
  int segments_ = 1;
  Mat coeffs_;
};

}  // namespace statgeo
