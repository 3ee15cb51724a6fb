#include "statgeo/spline.hpp"

#include <algorithm>
#include <cmath>

namespace statgeo {

SplineCurve::SplineCurve(Vec z0, Vec z1, int segments)
    : SplineCurve(std::move(z0), std::move(z1), segments, Mat()) {}

SplineCurve::SplineCurve(Vec z0, Vec z1, int segments, Mat coefficients)
    : z0_(std::move(z0)), z1_(std::move(z1)), segments_(segments) {
  if (z0_.size() != z1_.size() || z0_.size() == 0) throw Error(ErrorCode::ShapeError, "spline endpoints differ in size");
  if (segments_ < 1) throw Error(ErrorCode::ShapeError, "spline needs at least one segment");
  if (coefficients.size() == 0) {
    coeffs_ = Mat::Zero(z0_.size(), 2 * segments_);
  } else {
    set_coefficients(coefficients);
  }
}

void SplineCurve::set_coefficients(const Mat& c) {
  if (c.rows() != z0_.size() || c.cols() != 2 * segments_) throw Error(ErrorCode::ShapeError, "spline coefficients");
  coeffs_ = c;
}

Vec SplineCurve::free_parameters() const { return Eigen::Map<const Vec>(coeffs_.data(), coeffs_.size()); }

void SplineCurve::set_free_parameters(const Vec& x) {
  if (x.size() != coeffs_.size()) throw Error(ErrorCode::ShapeError, "spline parameter count");
  coeffs_ = Eigen::Map<const Mat>(x.data(), coeffs_.rows(), coeffs_.cols());
}

void SplineCurve::basis(double t, Vec& value, Vec& derivative) const {
  const int S = segments_;
  value.setZero(2 * S);
  derivative.setZero(2 * S);
  const double h = 1.0 / S;
  const int k = std::min(static_cast<int>(std::floor(t * S)), S - 1);
  const double s = t * S - k;
  const double s2 = s * s, s3 = s2 * s;

  const double h00 = 2 * s3 - 3 * s2 + 1, h10 = s3 - 2 * s2 + s, h01 = -2 * s3 + 3 * s2, h11 = s3 - s2;
  const double d00 = (6 * s2 - 6 * s) / h, d10 = 3 * s2 - 4 * s + 1, d01 = (-6 * s2 + 6 * s) / h, d11 = 3 * s2 - 2 * s;

  // Knot values P_1..P_{S-1} occupy [0, S-1); knot slopes D_0..D_S occupy [S-1, 2S).
  if (k >= 1) {
    value[k - 1] += h00;
    derivative[k - 1] += d00;
  }
  if (k + 1 <= S - 1) {
    value[k] += h01;
    derivative[k] += d01;
  }
  value[S - 1 + k] += h10 * h;
  derivative[S - 1 + k] += d10;
  value[S + k] += h11 * h;
  derivative[S + k] += d11;
}

std::pair<Vec, Vec> SplineCurve::eval(double t) const {
  if (!(t >= 0.0 && t <= 1.0)) throw Error(ErrorCode::OutOfRange, "curve parameter must lie in [0, 1]");
  Vec b, db;
  basis(t, b, db);
  Vec z = (1.0 - t) * z0_ + t * z1_ + coeffs_ * b;
  Vec zdot = (z1_ - z0_) + coeffs_ * db;
  return {std::move(z), std::move(zdot)};
}

}  // namespace statgeo
