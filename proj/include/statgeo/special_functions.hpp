#pragma once

#include <cmath>
#include <numbers>

namespace statgeo {

/// Digamma ψ(x) for x > 0: upward recurrence to x ≥ 10, then the asymptotic series.
template <typename Scalar>
Scalar digamma(Scalar x) {
  Scalar shift(0);
  while (x < Scalar(10)) {
    shift -= Scalar(1) / x;
    x += Scalar(1);
  }
  const Scalar inv = Scalar(1) / x;
  const Scalar inv2 = inv * inv;
  // Bernoulli-number series in 1/x².
  const Scalar tail =
      inv2 * (Scalar(1) / 12 -
              inv2 * (Scalar(1) / 120 -
                      inv2 * (Scalar(1) / 252 -
                              inv2 * (Scalar(1) / 240 -
                                      inv2 * (Scalar(1) / 132 - inv2 * (Scalar(691) / 32760 - inv2 / 12))))));
  return shift + std::log(x) - Scalar(0.5) * inv - tail;
}

/// Trigamma ψ₁(x) for x > 0 via ψ₁(x) = ψ₁(x+1) + 1/x² and the asymptotic series. Accurate to ~1e-15 relative.
template <typename Scalar>
Scalar trigamma(Scalar x) {
  Scalar shift(0);
  while (x < Scalar(10)) {
    shift += Scalar(1) / (x * x);
    x += Scalar(1);
  }
  const Scalar inv = Scalar(1) / x;
  const Scalar inv2 = inv * inv;
  const Scalar series =
      inv + inv2 / 2 +
      inv * inv2 *
          (Scalar(1) / 6 -
           inv2 * (Scalar(1) / 30 -
                   inv2 * (Scalar(1) / 42 -
                           inv2 * (Scalar(1) / 30 -
                                   inv2 * (Scalar(5) / 66 - inv2 * (Scalar(691) / 2730 - inv2 * Scalar(7) / 6))))));
  return shift + series;
}

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-x));
  const Scalar e = std::exp(x);
  return e / (Scalar(1) + e);
}

template <typename Scalar>
Scalar softplus(Scalar x) {
  return std::max(x, Scalar(0)) + std::log1p(std::exp(-std::abs(x)));
}

/// Inverse of softplus for y > 0.
template <typename Scalar>
Scalar softplus_inverse(Scalar y) {
  return y > Scalar(30) ? y : std::log(std::expm1(y));
}

/// Mean resultant length of the von Mises-Fisher law on S²: K(κ) = coth κ − 1/κ.
template <typename Scalar>
Scalar vmf_mean_length(Scalar kappa) {
  if (kappa < Scalar(0.1)) {
    const Scalar k2 = kappa * kappa;
    return kappa * (Scalar(1) / 3 -
                    k2 * (Scalar(1) / 45 - k2 * (Scalar(2) / 945 - k2 * (Scalar(1) / 4725 - k2 * Scalar(2) / 93555))));
  }
  return Scalar(1) / std::tanh(kappa) - Scalar(1) / kappa;
}

/// dK/dκ = 1/κ² − 1/sinh²κ.
template <typename Scalar>
Scalar vmf_mean_length_derivative(Scalar kappa) {
  if (kappa < Scalar(0.1)) {
    const Scalar k2 = kappa * kappa;
    return Scalar(1) / 3 - k2 * (Scalar(1) / 15 - k2 * (Scalar(2) / 189 - k2 / 675));
  }
  const Scalar s = kappa > Scalar(350) ? Scalar(0) : Scalar(1) / std::sinh(kappa);
  return Scalar(1) / (kappa * kappa) - s * s;
}

/// log(sinh κ / κ) for κ > 0.
template <typename Scalar>
Scalar log_sinhc(Scalar kappa) {
  if (kappa < Scalar(1e-4)) return kappa * kappa / 6;
  if (kappa > Scalar(20)) return kappa + std::log1p(-std::exp(-2 * kappa)) - std::log(Scalar(2) * kappa);
  return std::log(std::sinh(kappa) / kappa);
}

/// Log normalizer of the vMF density on S²: log(κ / (4π sinh κ)).
template <typename Scalar>
Scalar vmf_log_normalizer(Scalar kappa) {
  return -std::log(Scalar(4) * std::numbers::pi_v<Scalar>) - log_sinhc(kappa);
}

}  // namespace statgeo
