#pragma once

#include "statgeo/core.hpp"

#include <optional>
#include <string>
#include <string_view>

namespace statgeo {

enum class FamilyKind {
  Normal,
  Bernoulli,
  Categorical,
  Gamma,
  Beta,
  Exponential,
  Dirichlet,
  VonMisesFisherS2,
};

std::string_view family_name(FamilyKind family);
FamilyKind parse_family(std::string_view name);

/// Parameter count per feature. `categories` is only read for Categorical and Dirichlet.
Eigen::Index param_count(FamilyKind family, Eigen::Index categories = 0);

/// Length of one observation vector.
Eigen::Index observation_dim(FamilyKind family, Eigen::Index param_size);

/// True for families whose parameter vector length is chosen by the caller.
bool has_variable_size(FamilyKind family);

/// A validated point of a family's parameter space.
///
/// Coordinates:
///   Normal       (mean, variance)
///   Bernoulli    (theta)
///   Categorical  (theta_1..theta_K), renormalized to the unit simplex on construction
///   Gamma        (shape alpha, rate beta)
///   Beta         (alpha, beta)
///   Exponential  (rate lambda)
///   Dirichlet    (alpha_1..alpha_K)
///   vMF on S²    (mu_x, mu_y, mu_z, kappa), |mu| = 1
class ParamPoint {
 public:
  /// Strict construction; throws InvalidParam on any invariant violation.
  ParamPoint(FamilyKind family, Vec values);

  /// Construction from raw decoder output: clamps Bernoulli theta to [1e-7, 1 - 1e-7],
  /// strictly-positive parameters to >= 1e-9 and renormalizes simplex / sphere parts.
  static ParamPoint guarded(FamilyKind family, Vec values);

  FamilyKind family() const noexcept { return family_; }
  const Vec& values() const noexcept { return values_; }
  Eigen::Index size() const noexcept { return values_.size(); }
  double operator[](Eigen::Index i) const { return values_[i]; }

 private:
  struct Unchecked {};
  ParamPoint(Unchecked, FamilyKind family, Vec values) : family_(family), values_(std::move(values)) {}

  FamilyKind family_;
  Vec values_;
};

struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;
};

/// Partial derivatives of KL(p1 || p2) in the coordinates of each argument.
struct KlGradient {
  Vec first;
  Vec second;
};

/// Limits used by the maximum-uncertainty ("extrapolation") parameters.
struct ExtrapolationLimits {
  double normal_variance_max = 1e3;
  double exponential_rate_min = 1e-3;
  double vmf_kappa_min = 1e-3;
};

double log_pdf(const ParamPoint& eta, const Eigen::Ref<const Vec>& x);

/// Score ∇_η log p(x | η) in the coordinates documented on ParamPoint.
Vec score(const ParamPoint& eta, const Eigen::Ref<const Vec>& x);

/// Closed-form Fisher-Rao information matrix.
Mat fisher_rao(const ParamPoint& eta);

/// Monte-Carlo Fisher-Rao estimate (1/n) Σ g gᵀ from n samples of p(·|η).
Mat mc_fisher_rao(const ParamPoint& eta, Rng& rng, Eigen::Index n);

/// Closed-form KL(p(·|a) || p(·|b)).
double kl(const ParamPoint& a, const ParamPoint& b);

/// Monte-Carlo KL: mean of log p(x|a) - log p(x|b) over x ~ p(·|a).
McEstimate kl_monte_carlo(const ParamPoint& a, const ParamPoint& b, Rng& rng, Eigen::Index n);

/// Analytic gradient of the closed-form KL.
KlGradient kl_gradient(const ParamPoint& a, const ParamPoint& b);

/// n i.i.d. draws, one observation per row.
Mat sample(const ParamPoint& eta, Rng& rng, Eigen::Index n);

/// Parameters of maximal uncertainty used when extrapolating away from data.
ParamPoint max_uncertainty_params(FamilyKind family, Eigen::Index param_size,
                                  const ExtrapolationLimits& limits = {});

namespace detail {
void require_same_family(const ParamPoint& a, const ParamPoint& b);
}

}  // namespace statgeo
