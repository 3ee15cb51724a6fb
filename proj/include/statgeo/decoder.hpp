#pragma once

#include "statgeo/core.hpp"
#include "statgeo/families.hpp"

#include <optional>
#include <string>
#include <vector>

namespace statgeo {

enum class ActivationKind { Identity, Tanh, Sigmoid, Softplus, Softmax, UnitNormalize, Scale };

struct Activation {
  ActivationKind kind = ActivationKind::Identity;
  double scale = 1.0;  // only read by Scale

  static Activation scaled(double c) { return {ActivationKind::Scale, c}; }
};

std::string activation_name(const Activation& a);
Activation parse_activation(const std::string& name);

/// Affine map followed by an activation: y = act(W x + b).
struct Layer {
  Mat weight;
  Vec bias;
  Activation activation;
};

/// One parameter head. Its output holds `feature_count` consecutive groups, one per feature.
/// Softmax and UnitNormalize act group-wise.
struct Head {
  std::string name;
  std::vector<Layer> layers;
};

/// KMeans support proxy plus translated-sigmoid reweighting towards maximal uncertainty.
struct UncertaintyReg {
  Mat centers;  // k x d, one center per row
  double beta = 0.0;
  double c = 7.0;
  std::vector<ParamPoint> extrapolation;  // one per feature
};

/// Deterministic decoder z -> (η_1, ..., η_D) for a product likelihood of one family.
class DecoderMap {
 public:
  DecoderMap(Eigen::Index latent_dim, Eigen::Index feature_count, FamilyKind family, std::vector<Head> heads,
             std::optional<UncertaintyReg> regularization = std::nullopt);

  Eigen::Index latent_dim() const noexcept { return latent_dim_; }
  Eigen::Index feature_count() const noexcept { return feature_count_; }
  FamilyKind family() const noexcept { return family_; }
  const std::vector<Head>& heads() const noexcept { return heads_; }
  const std::optional<UncertaintyReg>& regularization() const noexcept { return reg_; }

  /// Parameters per feature (p).
  Eigen::Index params_per_feature() const noexcept { return params_per_feature_; }
  /// Width of each head's per-feature group.
  const std::vector<Eigen::Index>& head_blocks() const noexcept { return blocks_; }
  /// Total flat parameter length D * p.
  Eigen::Index output_dim() const noexcept { return feature_count_ * params_per_feature_; }

  /// Copy with regularization replaced (or removed).
  DecoderMap with_regularization(std::optional<UncertaintyReg> reg) const;

 private:
  Eigen::Index latent_dim_;
  Eigen::Index feature_count_;
  FamilyKind family_;
  std::vector<Head> heads_;
  std::optional<UncertaintyReg> reg_;
  std::vector<Eigen::Index> blocks_;
  Eigen::Index params_per_feature_ = 0;
};

/// Head names in the order a family's parameters are laid out.
std::vector<std::string> expected_head_names(FamilyKind family);

/// Flat decoded parameters, feature-blockwise: [η_1 | η_2 | ... | η_D].
/// Includes reweighting when the decoder is regularized.
Vec forward_flat(const DecoderMap& dec, const Vec& z);

/// Decoded parameter points (guarded against boundary values).
std::vector<ParamPoint> forward(const DecoderMap& dec, const Vec& z);

/// Exact chain-rule Jacobian of forward_flat, (D p) x d.
Mat jacobian(const DecoderMap& dec, const Vec& z);

/// Both at once; cheaper than calling forward_flat and jacobian separately.
void forward_with_jacobian(const DecoderMap& dec, const Vec& z, Vec& flat, Mat& jac);

/// Unregularized decoder output h(z).
Vec network_output(const DecoderMap& dec, const Vec& z);

/// Squared Euclidean distance to the nearest center.
double support_distance(const UncertaintyReg& reg, const Vec& z);

/// Sigmoid((d - c softplus(β)) / softplus(β)).
double translated_sigmoid(const UncertaintyReg& reg, double d);

/// Blend of h(z) and the extrapolation parameters; throws NoRegularization if absent.
std::vector<ParamPoint> reweight(const DecoderMap& dec, const Vec& z);

/// Indices within one feature's block that the reweighting blends.
std::vector<Eigen::Index> blended_coordinates(FamilyKind family, Eigen::Index param_size);

/// Block-diagonal Fisher-Rao matrix of a product likelihood.
Mat product_fisher(const std::vector<ParamPoint>& points);

/// Splits a flat feature-blockwise vector into parameter points.
std::vector<ParamPoint> split_features(FamilyKind family, Eigen::Index feature_count, const Vec& flat);

struct KMeansResult {
  Mat centers;                          // k x d
  std::vector<Eigen::Index> labels;     // one per point
  std::vector<double> inertia_history;  // after seeding and after every Lloyd iteration
};

/// Lloyd's algorithm with k-means++ seeding; points are rows.
KMeansResult kmeans_fit(const Mat& points, Eigen::Index k, Rng& rng, int iters = 100);

}  // namespace statgeo
