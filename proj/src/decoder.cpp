#include "statgeo/decoder.hpp"

#include "statgeo/special_functions.hpp"

#include <algorithm>
#include <cmath>

namespace statgeo {

namespace {

[[noreturn]] void shape_error(const std::string& what) { throw Error(ErrorCode::ShapeError, what); }

// Applies the activation in place and returns its Jacobian with respect to the pre-activation.
// Group-wise activations use `group` consecutive entries.
Mat activate(const Activation& act, Vec& a, Eigen::Index group, bool want_jacobian) {
  const Eigen::Index n = a.size();
  Mat d;
  if (want_jacobian) d = Mat::Zero(n, n);
  switch (act.kind) {
    case ActivationKind::Identity:
      if (want_jacobian) d.setIdentity();
      break;
    case ActivationKind::Scale:
      a *= act.scale;
      if (want_jacobian) d.diagonal().setConstant(act.scale);
      break;
    case ActivationKind::Tanh:
      for (Eigen::Index i = 0; i < n; ++i) {
        a[i] = std::tanh(a[i]);
        if (want_jacobian) d(i, i) = 1.0 - a[i] * a[i];
      }
      break;
    case ActivationKind::Sigmoid:
      for (Eigen::Index i = 0; i < n; ++i) {
        a[i] = sigmoid(a[i]);
        if (want_jacobian) d(i, i) = a[i] * (1.0 - a[i]);
      }
      break;
    case ActivationKind::Softplus:
      for (Eigen::Index i = 0; i < n; ++i) {
        if (want_jacobian) d(i, i) = sigmoid(a[i]);
        a[i] = softplus(a[i]);
      }
      break;
    case ActivationKind::Softmax:
      if (n % group != 0) shape_error("softmax width not divisible by group size");
      for (Eigen::Index g = 0; g < n; g += group) {
        auto seg = a.segment(g, group);
        seg.array() -= seg.maxCoeff();
        seg = seg.array().exp().matrix();
        seg /= seg.sum();
        if (want_jacobian) {
          d.block(g, g, group, group) = Mat(seg.asDiagonal()) - seg * seg.transpose();
        }
      }
      break;
    case ActivationKind::UnitNormalize:
      if (n % group != 0) shape_error("unit-normalize width not divisible by group size");
      for (Eigen::Index g = 0; g < n; g += group) {
        auto seg = a.segment(g, group);
        const double norm = seg.norm();
        if (!(norm > 0)) throw Error(ErrorCode::NonFinite, "unit-normalize of a zero vector");
        seg /= norm;
        if (want_jacobian) {
          d.block(g, g, group, group) = (Mat::Identity(group, group) - seg * seg.transpose()) / norm;
        }
      }
      break;
  }
  return d;
}

// Runs one head; fills its output and optionally the Jacobian with respect to z.
void run_head(const Head& head, Eigen::Index group, const Vec& z, Vec& out, Mat* jac) {
  Vec x = z;
  Mat j;
  if (jac) j = Mat::Identity(z.size(), z.size());
  for (const auto& layer : head.layers) {
    Vec a = layer.weight * x + layer.bias;
    Mat d = activate(layer.activation, a, group, jac != nullptr);
    if (jac) j = d * (layer.weight * j);
    x = std::move(a);
  }
  out = std::move(x);
  if (jac) *jac = std::move(j);
}

Eigen::Index blocks_per_family_head(FamilyKind f, std::size_t head_index, Eigen::Index width, Eigen::Index D) {
  if (has_variable_size(f)) return width / D;
  if (f == FamilyKind::VonMisesFisherS2 && head_index == 0) return 3;
  return 1;
}

// Assembles heads into the feature-blockwise flat layout (and Jacobian rows).
void assemble(const DecoderMap& dec, const std::vector<Vec>& outs, const std::vector<Mat>* jacs, Vec& flat,
              Mat* jac) {
  const Eigen::Index D = dec.feature_count();
  const Eigen::Index p = dec.params_per_feature();
  flat.resize(D * p);
  if (jac) jac->resize(D * p, dec.latent_dim());
  for (Eigen::Index f = 0; f < D; ++f) {
    Eigen::Index offset = f * p;
    for (std::size_t h = 0; h < outs.size(); ++h) {
      const Eigen::Index b = dec.head_blocks()[h];
      flat.segment(offset, b) = outs[h].segment(f * b, b);
      if (jac) jac->middleRows(offset, b) = (*jacs)[h].middleRows(f * b, b);
      offset += b;
    }
  }
}

void compute(const DecoderMap& dec, const Vec& z, Vec& flat, Mat* jac) {
  if (z.size() != dec.latent_dim()) {
    shape_error("latent vector has length " + std::to_string(z.size()) + ", decoder expects " +
                std::to_string(dec.latent_dim()));
  }
  std::vector<Vec> outs(dec.heads().size());
  std::vector<Mat> jacs(jac ? dec.heads().size() : 0);
  for (std::size_t h = 0; h < dec.heads().size(); ++h) {
    run_head(dec.heads()[h], dec.head_blocks()[h], z, outs[h], jac ? &jacs[h] : nullptr);
  }
  assemble(dec, outs, jac ? &jacs : nullptr, flat, jac);

  if (!dec.regularization()) return;
  const UncertaintyReg& reg = *dec.regularization();

  Eigen::Index nearest = 0;
  const double dist = ((reg.centers.rowwise() - z.transpose()).rowwise().squaredNorm()).minCoeff(&nearest);
  const double sp = softplus(reg.beta);
  const double s = translated_sigmoid(reg, dist);
  Vec grad_s;
  if (jac) grad_s = (s * (1.0 - s) / sp) * 2.0 * (z - reg.centers.row(nearest).transpose());

  const Eigen::Index p = dec.params_per_feature();
  const auto blended = blended_coordinates(dec.family(), p);
  for (Eigen::Index f = 0; f < dec.feature_count(); ++f) {
    const Vec& e = reg.extrapolation[static_cast<std::size_t>(f)].values();
    for (Eigen::Index i : blended) {
      const Eigen::Index r = f * p + i;
      const double h = flat[r];
      flat[r] = (1.0 - s) * h + s * e[i];
      if (jac) jac->row(r) = (1.0 - s) * jac->row(r) + (e[i] - h) * grad_s.transpose();
    }
  }
}

}  // namespace

std::string activation_name(const Activation& a) {
  switch (a.kind) {
    case ActivationKind::Identity: return "identity";
    case ActivationKind::Tanh: return "tanh";
    case ActivationKind::Sigmoid: return "sigmoid";
    case ActivationKind::Softplus: return "softplus";
    case ActivationKind::Softmax: return "softmax";
    case ActivationKind::UnitNormalize: return "unit_normalize";
    case ActivationKind::Scale: {
      char buf[64];
      std::snprintf(buf, sizeof buf, "scale:%.17g", a.scale);
      return buf;
    }
  }
  return "identity";
}

Activation parse_activation(const std::string& name) {
  if (name == "identity") return {ActivationKind::Identity};
  if (name == "tanh") return {ActivationKind::Tanh};
  if (name == "sigmoid") return {ActivationKind::Sigmoid};
  if (name == "softplus") return {ActivationKind::Softplus};
  if (name == "softmax") return {ActivationKind::Softmax};
  if (name == "unit_normalize") return {ActivationKind::UnitNormalize};
  if (name.rfind("scale:", 0) == 0) {
    try {
      return Activation::scaled(std::stod(name.substr(6)));
    } catch (const std::exception&) {
    }
  }
  throw Error(ErrorCode::ParseError, "unknown activation '" + name + "'");
}

std::vector<std::string> expected_head_names(FamilyKind family) {
  switch (family) {
    case FamilyKind::Normal: return {"mean", "variance"};
    case FamilyKind::Bernoulli: return {"theta"};
    case FamilyKind::Categorical: return {"probs"};
    case FamilyKind::Gamma: return {"shape", "rate"};
    case FamilyKind::Beta: return {"alpha", "beta"};
    case FamilyKind::Exponential: return {"rate"};
    case FamilyKind::Dirichlet: return {"alpha"};
    case FamilyKind::VonMisesFisherS2: return {"mu", "kappa"};
  }
  return {};
}

DecoderMap::DecoderMap(Eigen::Index latent_dim, Eigen::Index feature_count, FamilyKind family,
                       std::vector<Head> heads, std::optional<UncertaintyReg> regularization)
    : latent_dim_(latent_dim),
      feature_count_(feature_count),
      family_(family),
      heads_(std::move(heads)),
      reg_(std::move(regularization)) {
  if (latent_dim_ < 1 || feature_count_ < 1) shape_error("latent_dim and feature_count must be >= 1");
  const auto names = expected_head_names(family_);
  if (heads_.size() != names.size()) {
    shape_error(std::string(family_name(family_)) + " decoder needs " + std::to_string(names.size()) + " heads");
  }
  for (std::size_t h = 0; h < heads_.size(); ++h) {
    const Head& head = heads_[h];
    if (head.layers.empty()) shape_error("head '" + head.name + "' has no layers");
    Eigen::Index in = latent_dim_;
    for (const auto& layer : head.layers) {
      if (layer.weight.cols() != in || layer.bias.size() != layer.weight.rows()) {
        shape_error("head '" + head.name + "': layer dimensions do not chain");
      }
      in = layer.weight.rows();
    }
    if (in % feature_count_ != 0) shape_error("head '" + head.name + "' width not divisible by feature_count");
    const Eigen::Index block = blocks_per_family_head(family_, h, in, feature_count_);
    if (block * feature_count_ != in) {
      shape_error("head '" + head.name + "' has width " + std::to_string(in) + ", expected " +
                  std::to_string(block * feature_count_));
    }
    blocks_.push_back(block);
    params_per_feature_ += block;
  }
  if (has_variable_size(family_) && params_per_feature_ < 2) shape_error("simplex heads need >= 2 categories");
  if (reg_) {
    if (reg_->centers.rows() < 1 || reg_->centers.cols() != latent_dim_) shape_error("regularization centers");
    if (static_cast<Eigen::Index>(reg_->extrapolation.size()) != feature_count_) {
      shape_error("regularization needs one extrapolation point per feature");
    }
    for (const auto& e : reg_->extrapolation) {
      if (e.family() != family_ || e.size() != params_per_feature_) {
        throw Error(ErrorCode::FamilyMismatch, "extrapolation parameters do not match decoder family");
      }
    }
  }
}

DecoderMap DecoderMap::with_regularization(std::optional<UncertaintyReg> reg) const {
  return DecoderMap(latent_dim_, feature_count_, family_, heads_, std::move(reg));
}

std::vector<Eigen::Index> blended_coordinates(FamilyKind family, Eigen::Index param_size) {
  switch (family) {
    case FamilyKind::Normal: return {1};
    case FamilyKind::VonMisesFisherS2: return {3};
    default: {
      std::vector<Eigen::Index> all(static_cast<std::size_t>(param_size));
      for (Eigen::Index i = 0; i < param_size; ++i) all[static_cast<std::size_t>(i)] = i;
      return all;
    }
  }
}

Vec forward_flat(const DecoderMap& dec, const Vec& z) {
  Vec flat;
  compute(dec, z, flat, nullptr);
  return flat;
}

Vec network_output(const DecoderMap& dec, const Vec& z) {
  if (!dec.regularization()) return forward_flat(dec, z);
  return forward_flat(dec.with_regularization(std::nullopt), z);
}

std::vector<ParamPoint> split_features(FamilyKind family, Eigen::Index feature_count, const Vec& flat) {
  const Eigen::Index p = flat.size() / feature_count;
  std::vector<ParamPoint> out;
  out.reserve(static_cast<std::size_t>(feature_count));
  for (Eigen::Index f = 0; f < feature_count; ++f) out.push_back(ParamPoint::guarded(family, flat.segment(f * p, p)));
  return out;
}

std::vector<ParamPoint> forward(const DecoderMap& dec, const Vec& z) {
  return split_features(dec.family(), dec.feature_count(), forward_flat(dec, z));
}

Mat jacobian(const DecoderMap& dec, const Vec& z) {
  Vec flat;
  Mat jac;
  compute(dec, z, flat, &jac);
  return jac;
}

void forward_with_jacobian(const DecoderMap& dec, const Vec& z, Vec& flat, Mat& jac) { compute(dec, z, flat, &jac); }

double support_distance(const UncertaintyReg& reg, const Vec& z) {
  if (reg.centers.cols() != z.size()) shape_error("support_distance: dimension mismatch");
  return (reg.centers.rowwise() - z.transpose()).rowwise().squaredNorm().minCoeff();
}

double translated_sigmoid(const UncertaintyReg& reg, double d) {
  const double sp = softplus(reg.beta);
  return sigmoid((d - reg.c * sp) / sp);
}

std::vector<ParamPoint> reweight(const DecoderMap& dec, const Vec& z) {
  if (!dec.regularization()) throw Error(ErrorCode::NoRegularization, "decoder has no uncertainty regularization");
  return forward(dec, z);
}

Mat product_fisher(const std::vector<ParamPoint>& points) {
  Eigen::Index total = 0;
  for (const auto& p : points) {
    if (p.family() != points.front().family()) throw Error(ErrorCode::FamilyMismatch, "product_fisher: mixed families");
    total += p.size();
  }
  Mat I = Mat::Zero(total, total);
  Eigen::Index offset = 0;
  for (const auto& p : points) {
    I.block(offset, offset, p.size(), p.size()) = fisher_rao(p);
    offset += p.size();
  }
  return I;
}

}  // namespace statgeo
