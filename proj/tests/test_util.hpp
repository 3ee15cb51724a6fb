#pragma once

#include "statgeo/decoder.hpp"
#include "statgeo/families.hpp"

#include <cmath>
#include <vector>

namespace statgeo::testing {

inline double rel_frobenius(const Mat& estimate, const Mat& truth) { return (estimate - truth).norm() / truth.norm(); }

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * rng.uniform(); }

inline Vec random_unit(Rng& rng, Eigen::Index n) {
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.normal();
  return v.normalized();
}

inline ParamPoint random_interior(FamilyKind family, Rng& rng) {
  switch (family) {
    case FamilyKind::Normal: return ParamPoint(family, Eigen::Vector2d(rng.normal(), uniform(rng, 0.5, 2.0)));
    case FamilyKind::Bernoulli: return ParamPoint(family, Vec::Constant(1, uniform(rng, 0.1, 0.9)));
    case FamilyKind::Categorical: {
      Vec t(3);
      for (int k = 0; k < 3; ++k) t[k] = uniform(rng, 0.2, 1.0);
      return ParamPoint(family, t / t.sum());
    }
    case FamilyKind::Gamma: return ParamPoint(family, Eigen::Vector2d(uniform(rng, 0.5, 5.0), uniform(rng, 0.5, 3.0)));
    case FamilyKind::Beta: return ParamPoint(family, Eigen::Vector2d(uniform(rng, 0.5, 5.0), uniform(rng, 0.5, 5.0)));
    case FamilyKind::Exponential: return ParamPoint(family, Vec::Constant(1, uniform(rng, 0.5, 3.0)));
    case FamilyKind::Dirichlet: {
      Vec a(3);
      for (int k = 0; k < 3; ++k) a[k] = uniform(rng, 0.5, 5.0);
      return ParamPoint(family, a);
    }
    case FamilyKind::VonMisesFisherS2: {
      Vec p(4);
      p.head(3) = random_unit(rng, 3);
      p[3] = uniform(rng, 0.5, 10.0);
      return ParamPoint(family, p);
    }
  }
  return ParamPoint(FamilyKind::Bernoulli, Vec::Constant(1, 0.5));
}

inline const std::vector<FamilyKind>& all_families() {
  static const std::vector<FamilyKind> f = {FamilyKind::Normal,    FamilyKind::Bernoulli,   FamilyKind::Categorical,
                                            FamilyKind::Gamma,     FamilyKind::Beta,        FamilyKind::Exponential,
                                            FamilyKind::Dirichlet, FamilyKind::VonMisesFisherS2};
  return f;
}

inline Layer linear(Mat w, Vec b, Activation act = {}) { return Layer{std::move(w), std::move(b), act}; }

/// Single-row linear map picking latent coordinate k.
inline Layer pick(Eigen::Index d, Eigen::Index k, Activation act = {}) {
  return linear(Mat(Vec::Unit(d, k).transpose()), Vec::Zero(1), act);
}

/// h(z) = z on a two-parameter family (first parameter = z₀, second = z₁).
inline DecoderMap identity_decoder(FamilyKind family) {
  const auto names = expected_head_names(family);
  return DecoderMap(2, 1, family, {Head{names[0], {pick(2, 0)}}, Head{names[1], {pick(2, 1)}}});
}

inline DecoderMap identity_normal_decoder() { return identity_decoder(FamilyKind::Normal); }

/// Central finite-difference Jacobian of forward_flat.
inline Mat fd_jacobian(const DecoderMap& dec, const Vec& z, double h = 1e-5) {
  Mat J(dec.output_dim(), z.size());
  for (Eigen::Index k = 0; k < z.size(); ++k) {
    Vec zp = z, zm = z;
    zp[k] += h;
    zm[k] -= h;
    J.col(k) = (forward_flat(dec, zp) - forward_flat(dec, zm)) / (2.0 * h);
  }
  return J;
}

}  // namespace statgeo::testing
