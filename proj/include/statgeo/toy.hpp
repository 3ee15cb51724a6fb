#pragma once

#include "statgeo/decoder.hpp"

#include <optional>

namespace statgeo {

/// n codes [cos θ, sin θ] + noise·ε with θ ~ U[0, 2π), ε ~ N(0, I).
Mat toy_circle_codes(Eigen::Index n, double noise, Rng& rng);

struct ToyDecoderOptions {
  /// Translated-sigmoid β; defaults to the per-family value of the toy experiment.
  std::optional<double> beta;
  double c = 7.0;
  Eigen::Index kmeans_k = 24;
  int kmeans_iters = 100;
  ExtrapolationLimits limits;
};

/// Default translated-sigmoid β for the toy decoders.
double toy_default_beta(FamilyKind family);

/// Randomly initialised, untrained toy decoder R² -> H (PyTorch-style uniform init).
///   Normal       mean = 10 f₃(z), variance = 10 Softplus(f₃(z))
///   Bernoulli    θ = Sigmoid(f₁₅(z))
///   Beta, Gamma  10 Softplus(f₃(z)) per parameter
///   Dirichlet    α = Softplus(f₃(z)), one feature with three categories
///   Exponential  λ = Softplus(f₃(z))
///   Categorical  Softmax(f₃(z)), one feature
///   vMF          μ = UnitNormalize(f₃(z)), κ = 10 Softplus(f₁(z))
/// When `codes` is given the decoder is wrapped with KMeans uncertainty regularization.
DecoderMap make_toy_decoder(FamilyKind family, Rng& rng, const Mat* codes = nullptr,
                            const ToyDecoderOptions& options = {});

/// Linear(in, out) with weights and bias drawn from U(-1/√in, 1/√in).
Layer random_linear(Eigen::Index in, Eigen::Index out, Activation act, Rng& rng);

/// Fits KMeans on `codes` and builds the regularization for `dec`.
UncertaintyReg fit_regularization(const DecoderMap& dec, const Mat& codes, Rng& rng, const ToyDecoderOptions& options);

}  // namespace statgeo
