#include "statgeo/toy.hpp"

#include <cmath>
#include <numbers>

namespace statgeo {

Mat toy_circle_codes(Eigen::Index n, double noise, Rng& rng) {
  Mat codes(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double theta = 2.0 * std::numbers::pi * rng.uniform();
    codes(i, 0) = std::cos(theta) + noise * rng.normal();
    codes(i, 1) = std::sin(theta) + noise * rng.normal();
  }
  return codes;
}

double toy_default_beta(FamilyKind family) {
  switch (family) {
    case FamilyKind::Normal: return -2.5;
    case FamilyKind::Bernoulli: return -3.5;
    case FamilyKind::VonMisesFisherS2: return -5.5;
    default: return -4.0;
  }
}

Layer random_linear(Eigen::Index in, Eigen::Index out, Activation act, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  Layer layer{Mat(out, in), Vec(out), act};
  for (Eigen::Index r = 0; r < out; ++r) {
    for (Eigen::Index c = 0; c < in; ++c) layer.weight(r, c) = bound * (2.0 * rng.uniform() - 1.0);
  }
  for (Eigen::Index r = 0; r < out; ++r) layer.bias[r] = bound * (2.0 * rng.uniform() - 1.0);
  return layer;
}

namespace {

Layer scale_layer(Eigen::Index width, double c) {
  return {Mat::Identity(width, width), Vec::Zero(width), Activation::scaled(c)};
}

Head softplus_head(const std::string& name, Eigen::Index out, double scale, Rng& rng) {
  Head h{name, {random_linear(2, out, {ActivationKind::Softplus}, rng)}};
  if (scale != 1.0) h.layers.push_back(scale_layer(out, scale));
  return h;
}

}  // namespace

DecoderMap make_toy_decoder(FamilyKind family, Rng& rng, const Mat* codes, const ToyDecoderOptions& options) {
  std::vector<Head> heads;
  Eigen::Index features = 3;
  switch (family) {
    case FamilyKind::Normal:
      heads.push_back({"mean", {random_linear(2, 3, Activation::scaled(10.0), rng)}});
      heads.push_back(softplus_head("variance", 3, 10.0, rng));
      break;
    case FamilyKind::Bernoulli:
      features = 15;
      heads.push_back({"theta", {random_linear(2, 15, {ActivationKind::Sigmoid}, rng)}});
      break;
    case FamilyKind::Gamma:
      heads.push_back(softplus_head("shape", 3, 10.0, rng));
      heads.push_back(softplus_head("rate", 3, 10.0, rng));
      break;
    case FamilyKind::Beta:
      heads.push_back(softplus_head("alpha", 3, 10.0, rng));
      heads.push_back(softplus_head("beta", 3, 10.0, rng));
      break;
    case FamilyKind::Exponential: heads.push_back(softplus_head("rate", 3, 1.0, rng)); break;
    case FamilyKind::Dirichlet:
      features = 1;
      heads.push_back(softplus_head("alpha", 3, 1.0, rng));
      break;
    case FamilyKind::Categorical:
      features = 1;
      heads.push_back({"probs", {random_linear(2, 3, {ActivationKind::Softmax}, rng)}});
      break;
    case FamilyKind::VonMisesFisherS2:
      features = 1;
      heads.push_back({"mu", {random_linear(2, 3, {ActivationKind::UnitNormalize}, rng)}});
      heads.push_back(softplus_head("kappa", 1, 10.0, rng));
      break;
  }
  DecoderMap dec(2, features, family, std::move(heads));
  if (!codes) return dec;
  return dec.with_regularization(fit_regularization(dec, *codes, rng, options));
}

UncertaintyReg fit_regularization(const DecoderMap& dec, const Mat& codes, Rng& rng, const ToyDecoderOptions& options) {
  UncertaintyReg reg;
  reg.centers = kmeans_fit(codes, options.kmeans_k, rng, options.kmeans_iters).centers;
  reg.beta = options.beta.value_or(toy_default_beta(dec.family()));
  reg.c = options.c;
  const auto extrapolate = max_uncertainty_params(dec.family(), dec.params_per_feature(), options.limits);
  reg.extrapolation.assign(static_cast<std::size_t>(dec.feature_count()), extrapolate);
  return reg;
}

}  // namespace statgeo
