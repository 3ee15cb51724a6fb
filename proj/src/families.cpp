#include "statgeo/families.hpp"

#include "statgeo/special_functions.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

namespace statgeo {

namespace {

constexpr double kThetaGuard = 1e-7;
constexpr double kPositiveGuard = 1e-9;
constexpr double kSphereTol = 1e-9;

double pos(double v) { return std::max(v, kPositiveGuard); }
double prob(double v) { return std::clamp(v, kThetaGuard, 1.0 - kThetaGuard); }

[[noreturn]] void invalid(FamilyKind f, const std::string& what) {
  throw Error(ErrorCode::InvalidParam, std::string(family_name(f)) + ": " + what);
}

[[noreturn]] void off_support(FamilyKind f, const std::string& what) {
  throw Error(ErrorCode::DomainError, std::string(family_name(f)) + ": " + what);
}

void expect_size(FamilyKind f, const Vec& v, Eigen::Index n) {
  if (v.size() != n) invalid(f, "expected " + std::to_string(n) + " parameters, got " + std::to_string(v.size()));
}

void validate(FamilyKind f, const Vec& v) {
  if (!v.allFinite()) invalid(f, "non-finite parameter");
  switch (f) {
    case FamilyKind::Normal:
      expect_size(f, v, 2);
      if (!(v[1] > 0)) invalid(f, "variance must be > 0");
      break;
    case FamilyKind::Bernoulli:
      expect_size(f, v, 1);
      if (!(v[0] > 0 && v[0] < 1)) invalid(f, "theta must lie in (0, 1)");
      break;
    case FamilyKind::Categorical:
    case FamilyKind::Dirichlet:
      if (v.size() < 2) invalid(f, "needs at least two categories");
      if (!(v.minCoeff() > 0)) invalid(f, "components must be > 0");
      break;
    case FamilyKind::Gamma:
    case FamilyKind::Beta:
      expect_size(f, v, 2);
      if (!(v.minCoeff() > 0)) invalid(f, "alpha and beta must be > 0");
      break;
    case FamilyKind::Exponential:
      expect_size(f, v, 1);
      if (!(v[0] > 0)) invalid(f, "rate must be > 0");
      break;
    case FamilyKind::VonMisesFisherS2:
      expect_size(f, v, 4);
      if (std::abs(v.head<3>().norm() - 1.0) > kSphereTol) invalid(f, "mean direction must be a unit vector");
      if (!(v[3] > 0)) invalid(f, "kappa must be > 0");
      break;
  }
}

// Orthonormal pair spanning the plane orthogonal to the unit vector mu.
std::pair<Eigen::Vector3d, Eigen::Vector3d> tangent_basis(const Eigen::Vector3d& mu) {
  const Eigen::Vector3d helper =
      std::abs(mu.x()) < 0.9 ? Eigen::Vector3d::UnitX() : Eigen::Vector3d::UnitY();
  Eigen::Vector3d e1 = (helper - helper.dot(mu) * mu).normalized();
  Eigen::Vector3d e2 = mu.cross(e1);
  return {e1, e2};
}

// Per-point constants shared by sampling, scoring and log-density evaluation.
struct Kernel {
  FamilyKind family;
  Vec p;  // guarded parameters
  double c0 = 0.0, c1 = 0.0, c2 = 0.0;
  Vec cv;  // vector constants (Dirichlet digammas)
  Eigen::Vector3d mu, e1, e2;

  explicit Kernel(const ParamPoint& eta) : family(eta.family()), p(eta.values()) {
    switch (family) {
      case FamilyKind::Normal: p[1] = pos(p[1]); break;
      case FamilyKind::Bernoulli: p[0] = prob(p[0]); break;
      case FamilyKind::Categorical:
        for (auto& t : p) t = pos(t);
        p /= p.sum();
        break;
      case FamilyKind::Gamma:
        p = p.cwiseMax(kPositiveGuard);
        c0 = digamma(p[0]);
        c1 = std::lgamma(p[0]);
        break;
      case FamilyKind::Beta:
        p = p.cwiseMax(kPositiveGuard);
        c0 = digamma(p[0] + p[1]) - digamma(p[0]);
        c1 = digamma(p[0] + p[1]) - digamma(p[1]);
        c2 = std::lgamma(p[0] + p[1]) - std::lgamma(p[0]) - std::lgamma(p[1]);
        break;
      case FamilyKind::Exponential: p[0] = pos(p[0]); break;
      case FamilyKind::Dirichlet: {
        p = p.cwiseMax(kPositiveGuard);
        const double a0 = p.sum();
        c0 = digamma(a0);
        c1 = std::lgamma(a0);
        cv.resize(p.size());
        for (Eigen::Index k = 0; k < p.size(); ++k) {
          cv[k] = digamma(p[k]);
          c1 -= std::lgamma(p[k]);
        }
        break;
      }
      case FamilyKind::VonMisesFisherS2:
        p[3] = pos(p[3]);
        mu = p.head<3>().normalized();
        std::tie(e1, e2) = tangent_basis(mu);
        c0 = vmf_mean_length(p[3]);
        c1 = vmf_log_normalizer(p[3]);
        c2 = std::expm1(2.0 * p[3]);
        break;
    }
  }

  Eigen::Index obs_dim() const { return observation_dim(family, p.size()); }

  void draw(Rng& rng, Eigen::Ref<Vec> x) const {
    switch (family) {
      case FamilyKind::Normal: x[0] = p[0] + std::sqrt(p[1]) * rng.normal(); break;
      case FamilyKind::Bernoulli: x[0] = rng.uniform() < p[0] ? 1.0 : 0.0; break;
      case FamilyKind::Categorical: {
        const double u = rng.uniform();
        x.setZero();
        double acc = 0.0;
        Eigen::Index k = 0;
        for (; k + 1 < p.size(); ++k) {
          acc += p[k];
          if (u < acc) break;
        }
        x[k] = 1.0;
        break;
      }
      case FamilyKind::Gamma:
        x[0] = std::max(rng.gamma(p[0]) / p[1], std::numeric_limits<double>::min());
        break;
      case FamilyKind::Beta: {
        const double ga = rng.gamma(p[0]);
        const double gb = rng.gamma(p[1]);
        double v = ga / (ga + gb);
        if (!(v > 0.0)) v = std::numeric_limits<double>::min();
        if (!(v < 1.0)) v = std::nextafter(1.0, 0.0);
        x[0] = v;
        break;
      }
      case FamilyKind::Exponential: x[0] = -std::log(rng.uniform()) / p[0]; break;
      case FamilyKind::Dirichlet: {
        double total = 0.0;
        for (Eigen::Index k = 0; k < p.size(); ++k) {
          x[k] = std::max(rng.gamma(p[k]), std::numeric_limits<double>::min());
          total += x[k];
        }
        x /= total;
        break;
      }
      case FamilyKind::VonMisesFisherS2: {
        const double u = rng.uniform();
        const double phi = 2.0 * std::numbers::pi * rng.uniform();
        x.head<3>() = vmf_from_uniforms(u, phi);
        break;
      }
    }
  }

  // Exact inverse CDF of the axial cosine w = μᵀx on S², plus azimuth phi.
  Eigen::Vector3d vmf_from_uniforms(double u, double phi) const {
    const double kappa = p[3];
    double w = kappa < 1.0 ? -1.0 + std::log1p(u * c2) / kappa
                           : 1.0 + std::log(u + (1.0 - u) * std::exp(-2.0 * kappa)) / kappa;
    w = std::clamp(w, -1.0, 1.0);
    const double r = std::sqrt(std::max(0.0, 1.0 - w * w));
    return w * mu + r * (std::cos(phi) * e1 + std::sin(phi) * e2);
  }

  double log_density(const Eigen::Ref<const Vec>& x) const {
    switch (family) {
      case FamilyKind::Normal: {
        const double d = x[0] - p[0];
        return -0.5 * std::log(2.0 * std::numbers::pi * p[1]) - 0.5 * d * d / p[1];
      }
      case FamilyKind::Bernoulli: return x[0] > 0.5 ? std::log(p[0]) : std::log1p(-p[0]);
      case FamilyKind::Categorical: {
        Eigen::Index k;
        x.maxCoeff(&k);
        return std::log(p[k]);
      }
      case FamilyKind::Gamma:
        return p[0] * std::log(p[1]) - c1 + (p[0] - 1.0) * std::log(x[0]) - p[1] * x[0];
      case FamilyKind::Beta:
        return c2 + (p[0] - 1.0) * std::log(x[0]) + (p[1] - 1.0) * std::log1p(-x[0]);
      case FamilyKind::Exponential: return std::log(p[0]) - p[0] * x[0];
      case FamilyKind::Dirichlet: {
        double s = c1;
        for (Eigen::Index k = 0; k < p.size(); ++k) s += (p[k] - 1.0) * std::log(x[k]);
        return s;
      }
      case FamilyKind::VonMisesFisherS2: return c1 + p[3] * mu.dot(x.head<3>());
    }
    return 0.0;
  }

  void score_into(const Eigen::Ref<const Vec>& x, Eigen::Ref<Vec> g) const {
    switch (family) {
      case FamilyKind::Normal: {
        const double d = x[0] - p[0];
        g[0] = d / p[1];
        g[1] = -0.5 / p[1] + 0.5 * d * d / (p[1] * p[1]);
        break;
      }
      case FamilyKind::Bernoulli: g[0] = x[0] > 0.5 ? 1.0 / p[0] : -1.0 / (1.0 - p[0]); break;
      case FamilyKind::Categorical:
        for (Eigen::Index k = 0; k < p.size(); ++k) g[k] = x[k] > 0.5 ? 1.0 / p[k] : 0.0;
        break;
      case FamilyKind::Gamma:
        g[0] = -c0 + std::log(p[1]) + std::log(x[0]);
        g[1] = p[0] / p[1] - x[0];
        break;
      case FamilyKind::Beta:
        g[0] = c0 + std::log(x[0]);
        g[1] = c1 + std::log1p(-x[0]);
        break;
      case FamilyKind::Exponential: g[0] = 1.0 / p[0] - x[0]; break;
      case FamilyKind::Dirichlet:
        for (Eigen::Index k = 0; k < p.size(); ++k) g[k] = c0 - cv[k] + std::log(x[k]);
        break;
      case FamilyKind::VonMisesFisherS2:
        g.head<3>() = p[3] * x.head<3>();
        g[3] = mu.dot(x.head<3>()) - c0;
        break;
    }
  }
};

void check_observation(FamilyKind f, Eigen::Index psize, const Eigen::Ref<const Vec>& x) {
  if (x.size() != observation_dim(f, psize)) off_support(f, "observation has wrong length");
  if (!x.allFinite()) off_support(f, "non-finite observation");
  switch (f) {
    case FamilyKind::Normal: break;
    case FamilyKind::Bernoulli:
      if (x[0] != 0.0 && x[0] != 1.0) off_support(f, "observation must be 0 or 1");
      break;
    case FamilyKind::Categorical:
      if ((x.array() != 0.0 && x.array() != 1.0).any() || x.sum() != 1.0)
        off_support(f, "observation must be one-hot");
      break;
    case FamilyKind::Gamma:
      if (!(x[0] > 0)) off_support(f, "observation must be > 0");
      break;
    case FamilyKind::Beta:
      if (!(x[0] > 0 && x[0] < 1)) off_support(f, "observation must lie in (0, 1)");
      break;
    case FamilyKind::Exponential:
      if (!(x[0] >= 0)) off_support(f, "observation must be >= 0");
      break;
    case FamilyKind::Dirichlet:
      if (!(x.minCoeff() > 0) || std::abs(x.sum() - 1.0) > 1e-8) off_support(f, "observation must lie on the open simplex");
      break;
    case FamilyKind::VonMisesFisherS2:
      if (std::abs(x.norm() - 1.0) > 1e-8) off_support(f, "observation must lie on the unit sphere");
      break;
  }
}

// (r - 1) - log r, accurate near r = 1.
double ratio_divergence(double r) { return (r - 1.0) - std::log1p(r - 1.0); }

}  // namespace

std::string_view family_name(FamilyKind family) {
  switch (family) {
    case FamilyKind::Normal: return "normal";
    case FamilyKind::Bernoulli: return "bernoulli";
    case FamilyKind::Categorical: return "categorical";
    case FamilyKind::Gamma: return "gamma";
    case FamilyKind::Beta: return "beta";
    case FamilyKind::Exponential: return "exponential";
    case FamilyKind::Dirichlet: return "dirichlet";
    case FamilyKind::VonMisesFisherS2: return "vmf";
  }
  return "unknown";
}

FamilyKind parse_family(std::string_view name) {
  for (auto f : {FamilyKind::Normal, FamilyKind::Bernoulli, FamilyKind::Categorical, FamilyKind::Gamma,
                 FamilyKind::Beta, FamilyKind::Exponential, FamilyKind::Dirichlet, FamilyKind::VonMisesFisherS2}) {
    if (family_name(f) == name) return f;
  }
  throw Error(ErrorCode::ParseError, "unknown family '" + std::string(name) + "'");
}

Eigen::Index param_count(FamilyKind family, Eigen::Index categories) {
  switch (family) {
    case FamilyKind::Normal:
    case FamilyKind::Gamma:
    case FamilyKind::Beta: return 2;
    case FamilyKind::Bernoulli:
    case FamilyKind::Exponential: return 1;
    case FamilyKind::Categorical:
    case FamilyKind::Dirichlet: return categories;
    case FamilyKind::VonMisesFisherS2: return 4;
  }
  return 0;
}

Eigen::Index observation_dim(FamilyKind family, Eigen::Index param_size) {
  switch (family) {
    case FamilyKind::Categorical:
    case FamilyKind::Dirichlet: return param_size;
    case FamilyKind::VonMisesFisherS2: return 3;
    default: return 1;
  }
}

bool has_variable_size(FamilyKind family) {
  return family == FamilyKind::Categorical || family == FamilyKind::Dirichlet;
}

ParamPoint::ParamPoint(FamilyKind family, Vec values) : family_(family), values_(std::move(values)) {
  validate(family_, values_);
  if (family_ == FamilyKind::Categorical) values_ /= values_.sum();
}

ParamPoint ParamPoint::guarded(FamilyKind family, Vec v) {
  if (!v.allFinite()) invalid(family, "non-finite parameter");
  switch (family) {
    case FamilyKind::Normal:
      expect_size(family, v, 2);
      v[1] = pos(v[1]);
      break;
    case FamilyKind::Bernoulli:
      expect_size(family, v, 1);
      v[0] = prob(v[0]);
      break;
    case FamilyKind::Categorical:
      if (v.size() < 2) invalid(family, "needs at least two categories");
      v = v.cwiseMax(kPositiveGuard);
      v /= v.sum();
      break;
    case FamilyKind::Dirichlet:
      if (v.size() < 2) invalid(family, "needs at least two categories");
      v = v.cwiseMax(kPositiveGuard);
      break;
    case FamilyKind::Gamma:
    case FamilyKind::Beta:
      expect_size(family, v, 2);
      v = v.cwiseMax(kPositiveGuard);
      break;
    case FamilyKind::Exponential:
      expect_size(family, v, 1);
      v[0] = pos(v[0]);
      break;
    case FamilyKind::VonMisesFisherS2: {
      expect_size(family, v, 4);
      const double n = v.head<3>().norm();
      if (!(n > 0)) invalid(family, "zero mean direction");
      v.head<3>() /= n;
      v[3] = pos(v[3]);
      break;
    }
  }
  return ParamPoint(Unchecked{}, family, std::move(v));
}

namespace detail {
void require_same_family(const ParamPoint& a, const ParamPoint& b) {
  if (a.family() != b.family() || a.size() != b.size())
    throw Error(ErrorCode::FamilyMismatch, std::string(family_name(a.family())) + " vs " +
                                               std::string(family_name(b.family())));
}
}  // namespace detail

double log_pdf(const ParamPoint& eta, const Eigen::Ref<const Vec>& x) {
  check_observation(eta.family(), eta.size(), x);
  return Kernel(eta).log_density(x);
}

Vec score(const ParamPoint& eta, const Eigen::Ref<const Vec>& x) {
  check_observation(eta.family(), eta.size(), x);
  Vec g(eta.size());
  Kernel(eta).score_into(x, g);
  return g;
}

Mat fisher_rao(const ParamPoint& eta) {
  const Kernel k(eta);
  const Vec& p = k.p;
  const Eigen::Index n = p.size();
  Mat I = Mat::Zero(n, n);
  switch (eta.family()) {
    case FamilyKind::Normal:
      I(0, 0) = 1.0 / p[1];
      I(1, 1) = 0.5 / (p[1] * p[1]);
      break;
    case FamilyKind::Bernoulli: I(0, 0) = 1.0 / (p[0] * (1.0 - p[0])); break;
    case FamilyKind::Categorical: I.diagonal() = p.cwiseInverse(); break;
    case FamilyKind::Gamma:
      I(0, 0) = trigamma(p[0]);
      I(0, 1) = I(1, 0) = -1.0 / p[1];
      I(1, 1) = p[0] / (p[1] * p[1]);
      break;
    case FamilyKind::Beta: {
      const double t = trigamma(p[0] + p[1]);
      I(0, 0) = trigamma(p[0]) - t;
      I(1, 1) = trigamma(p[1]) - t;
      I(0, 1) = I(1, 0) = -t;
      break;
    }
    case FamilyKind::Exponential: I(0, 0) = 1.0 / (p[0] * p[0]); break;
    case FamilyKind::Dirichlet: {
      I.setConstant(-trigamma(p.sum()));
      for (Eigen::Index i = 0; i < n; ++i) I(i, i) += trigamma(p[i]);
      break;
    }
    case FamilyKind::VonMisesFisherS2: {
      const double kappa = p[3];
      const double K = k.c0;
      const Eigen::Matrix3d mmT = k.mu * k.mu.transpose();
      I.topLeftCorner<3, 3>() = kappa * K * Eigen::Matrix3d::Identity() + (kappa * kappa - 3.0 * kappa * K) * mmT;
      const Eigen::Vector3d cross = (kappa - 2.0 * K - kappa * K * K) * k.mu;
      I.block<3, 1>(0, 3) = cross;
      I.block<1, 3>(3, 0) = cross.transpose();
      I(3, 3) = 1.0 - 2.0 * K / kappa - K * K;
      break;
    }
  }
  return I;
}

namespace {
template <typename F>
void for_each_draw(const Kernel& k, Rng& rng, Eigen::Index n, F&& f) {
  Vec x(k.obs_dim());
  for (Eigen::Index i = 0; i < n; ++i) {
    k.draw(rng, x);
    f(x);
  }
}
}  // namespace

Mat mc_fisher_rao(const ParamPoint& eta, Rng& rng, Eigen::Index n) {
  if (n < 1) invalid(eta.family(), "sample count must be >= 1");
  const Kernel k(eta);
  const Eigen::Index p = eta.size();
  Mat acc = Mat::Zero(p, p);
  Vec g(p);
  for_each_draw(k, rng, n, [&](const Vec& x) {
    k.score_into(x, g);
    acc.selfadjointView<Eigen::Lower>().rankUpdate(g);
  });
  acc.triangularView<Eigen::StrictlyUpper>() = acc.transpose();
  return acc / static_cast<double>(n);
}

Mat sample(const ParamPoint& eta, Rng& rng, Eigen::Index n) {
  const Kernel k(eta);
  Mat out(n, k.obs_dim());
  Vec x(k.obs_dim());
  for (Eigen::Index i = 0; i < n; ++i) {
    k.draw(rng, x);
    out.row(i) = x.transpose();
  }
  return out;
}

double kl(const ParamPoint& a, const ParamPoint& b) {
  detail::require_same_family(a, b);
  const Kernel ka(a), kb(b);
  const Vec& p = ka.p;
  const Vec& q = kb.p;
  switch (a.family()) {
    case FamilyKind::Normal: {
      const double d = p[0] - q[0];
      return 0.5 * (ratio_divergence(p[1] / q[1]) + d * d / q[1]);
    }
    case FamilyKind::Bernoulli:
      return p[0] * std::log(p[0] / q[0]) + (1.0 - p[0]) * std::log((1.0 - p[0]) / (1.0 - q[0]));
    case FamilyKind::Categorical: {
      double s = 0.0;
      for (Eigen::Index k = 0; k < p.size(); ++k) s += p[k] * std::log(p[k] / q[k]);
      return s;
    }
    case FamilyKind::Gamma:
      return (p[0] - q[0]) * ka.c0 - ka.c1 + kb.c1 + q[0] * std::log(p[1] / q[1]) + p[0] * (q[1] - p[1]) / p[1];
    case FamilyKind::Beta: {
      const double s1 = p[0] + p[1];
      return ka.c2 - kb.c2 + (p[0] - q[0]) * digamma(p[0]) + (p[1] - q[1]) * digamma(p[1]) +
             (q[0] - p[0] + q[1] - p[1]) * digamma(s1);
    }
    case FamilyKind::Exponential: return ratio_divergence(q[0] / p[0]);
    case FamilyKind::Dirichlet: {
      double s = ka.c1 - kb.c1;
      for (Eigen::Index k = 0; k < p.size(); ++k) s += (p[k] - q[k]) * (ka.cv[k] - ka.c0);
      return s;
    }
    case FamilyKind::VonMisesFisherS2: {
      // 1 - μ₂ᵀμ₁ = ½‖μ₁ - μ₂‖² on the sphere, exact zero for equal directions.
      const double K1 = ka.c0;
      return ka.c1 - kb.c1 + K1 * (p[3] - q[3]) + K1 * q[3] * 0.5 * (ka.mu - kb.mu).squaredNorm();
    }
  }
  return 0.0;
}

McEstimate kl_monte_carlo(const ParamPoint& a, const ParamPoint& b, Rng& rng, Eigen::Index n) {
  detail::require_same_family(a, b);
  if (n < 2) invalid(a.family(), "Monte-Carlo KL needs at least two samples");
  const Kernel ka(a), kb(b);
  double mean = 0.0, m2 = 0.0;
  Eigen::Index count = 0;
  for_each_draw(ka, rng, n, [&](const Vec& x) {
    const double v = ka.log_density(x) - kb.log_density(x);
    ++count;
    const double delta = v - mean;
    mean += delta / static_cast<double>(count);
    m2 += delta * (v - mean);
  });
  const double var = m2 / static_cast<double>(n - 1);
  return {mean, std::sqrt(var / static_cast<double>(n))};
}

KlGradient kl_gradient(const ParamPoint& a, const ParamPoint& b) {
  detail::require_same_family(a, b);
  const Kernel ka(a), kb(b);
  const Vec& p = ka.p;
  const Vec& q = kb.p;
  KlGradient g{Vec::Zero(p.size()), Vec::Zero(q.size())};
  switch (a.family()) {
    case FamilyKind::Normal: {
      const double d = p[0] - q[0];
      g.first[0] = d / q[1];
      g.second[0] = -d / q[1];
      g.first[1] = 0.5 * (1.0 / q[1] - 1.0 / p[1]);
      g.second[1] = 0.5 * (1.0 / q[1] - (p[1] + d * d) / (q[1] * q[1]));
      break;
    }
    case FamilyKind::Bernoulli:
      g.first[0] = std::log(p[0] / q[0]) - std::log((1.0 - p[0]) / (1.0 - q[0]));
      g.second[0] = -p[0] / q[0] + (1.0 - p[0]) / (1.0 - q[0]);
      break;
    case FamilyKind::Categorical:
      for (Eigen::Index k = 0; k < p.size(); ++k) {
        g.first[k] = std::log(p[k] / q[k]) + 1.0;
        g.second[k] = -p[k] / q[k];
      }
      break;
    case FamilyKind::Gamma:
      g.first[0] = (p[0] - q[0]) * trigamma(p[0]) + q[1] / p[1] - 1.0;
      g.second[0] = -ka.c0 + kb.c0 + std::log(p[1] / q[1]);
      g.first[1] = q[0] / p[1] - p[0] * q[1] / (p[1] * p[1]);
      g.second[1] = -q[0] / q[1] + p[0] / p[1];
      break;
    case FamilyKind::Beta: {
      const double s1 = p[0] + p[1];
      const double s2 = q[0] + q[1];
      const double w = q[0] - p[0] + q[1] - p[1];
      g.first[0] = (p[0] - q[0]) * trigamma(p[0]) + w * trigamma(s1);
      g.first[1] = (p[1] - q[1]) * trigamma(p[1]) + w * trigamma(s1);
      g.second[0] = digamma(q[0]) - digamma(s2) - digamma(p[0]) + digamma(s1);
      g.second[1] = digamma(q[1]) - digamma(s2) - digamma(p[1]) + digamma(s1);
      break;
    }
    case FamilyKind::Exponential:
      g.first[0] = 1.0 / p[0] - q[0] / (p[0] * p[0]);
      g.second[0] = 1.0 / p[0] - 1.0 / q[0];
      break;
    case FamilyKind::Dirichlet: {
      const double a0 = p.sum();
      const double b0 = q.sum();
      const double t0 = trigamma(a0);
      for (Eigen::Index k = 0; k < p.size(); ++k) {
        g.first[k] = (p[k] - q[k]) * trigamma(p[k]) - (a0 - b0) * t0;
        g.second[k] = kb.cv[k] - kb.c0 - ka.cv[k] + ka.c0;
      }
      break;
    }
    case FamilyKind::VonMisesFisherS2: {
      // Ambient-coordinate gradient of log C(κ1) - log C(κ2) + K(κ1)(κ1 μ1ᵀμ1 - κ2 μ2ᵀμ1).
      const double K1 = ka.c0;
      const double K2 = kb.c0;
      const double dot = ka.mu.dot(kb.mu);
      g.first.head<3>() = K1 * (2.0 * p[3] * ka.mu - q[3] * kb.mu);
      g.second.head<3>() = -q[3] * K1 * ka.mu;
      g.first[3] = vmf_mean_length_derivative(p[3]) * (p[3] - q[3] * dot);
      g.second[3] = K2 - K1 * dot;
      break;
    }
  }
  return g;
}

ParamPoint max_uncertainty_params(FamilyKind family, Eigen::Index param_size, const ExtrapolationLimits& limits) {
  switch (family) {
    case FamilyKind::Normal: return ParamPoint(family, Eigen::Vector2d(0.0, limits.normal_variance_max));
    case FamilyKind::Bernoulli: return ParamPoint(family, Vec::Constant(1, 0.5));
    case FamilyKind::Categorical:
      return ParamPoint(family, Vec::Constant(param_size, 1.0 / static_cast<double>(param_size)));
    case FamilyKind::Gamma: return ParamPoint(family, Eigen::Vector2d(1.0, limits.exponential_rate_min));
    case FamilyKind::Beta: return ParamPoint(family, Eigen::Vector2d(1.0, 1.0));
    case FamilyKind::Exponential: return ParamPoint(family, Vec::Constant(1, limits.exponential_rate_min));
    case FamilyKind::Dirichlet: return ParamPoint(family, Vec::Ones(param_size));
    case FamilyKind::VonMisesFisherS2: {
      Vec v(4);
      v << 0.0, 0.0, 1.0, limits.vmf_kappa_min;
      return ParamPoint(family, v);
    }
  }
  throw Error(ErrorCode::InvalidParam, "unknown family");
}

}  // namespace statgeo
