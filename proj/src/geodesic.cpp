#include "statgeo/geodesic.hpp"

#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <memory>
#include <sstream>

namespace statgeo {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_steps(Eigen::Index N) {
  if (N < 2) throw Error(ErrorCode::ShapeError, "energy discretization needs N >= 2");
}

[[noreturn]] void throw_non_finite(double t, const std::string& what) {
  std::ostringstream msg;
  msg.precision(17);
  msg << "non-finite energy at t=" << t << ": " << what;
  throw Error(ErrorCode::NonFiniteEnergy, msg.str());
}

/// Decoded parameters along the curve at t_n = n/N, n = 0..N.
struct Decoded {
  std::vector<Vec> flat;
  std::vector<Mat> jac;  // filled only when requested
  std::vector<std::vector<ParamPoint>> points;
};

Decoded decode_curve(const SplineCurve& c, const DecoderMap& dec, Eigen::Index N, bool with_jacobian) {
  Decoded out;
  out.flat.resize(static_cast<std::size_t>(N + 1));
  if (with_jacobian) out.jac.resize(static_cast<std::size_t>(N + 1));
  out.points.reserve(static_cast<std::size_t>(N + 1));
  for (Eigen::Index n = 0; n <= N; ++n) {
    const double t = static_cast<double>(n) / static_cast<double>(N);
    const auto i = static_cast<std::size_t>(n);
    try {
      const Vec z = c.position(t);
      if (with_jacobian) {
        forward_with_jacobian(dec, z, out.flat[i], out.jac[i]);
      } else {
        out.flat[i] = forward_flat(dec, z);
      }
      if (!out.flat[i].allFinite()) throw_non_finite(t, "decoder output");
      out.points.push_back(split_features(dec.family(), dec.feature_count(), out.flat[i]));
    } catch (const Error& e) {
      if (e.code() == ErrorCode::NonFiniteEnergy) throw;
      throw_non_finite(t, e.what());
    }
  }
  return out;
}

Vec segment_kls_decoded(const Decoded& d, const McSettings* mc) {
  const auto N = static_cast<Eigen::Index>(d.points.size()) - 1;
  Vec out(N);
  for (Eigen::Index n = 0; n < N; ++n) {
    const auto i = static_cast<std::size_t>(n);
    out[n] = features_kl(d.points[i], d.points[i + 1], mc);
    if (!std::isfinite(out[n])) throw_non_finite(static_cast<double>(n) / static_cast<double>(N), "KL divergence");
  }
  return out;
}

/// dE/d(coefficients) from per-point latent gradients L_n = dE/dc(t_n).
Vec chain_to_coefficients(const SplineCurve& c, const std::vector<Vec>& latent_grad) {
  const auto N = static_cast<Eigen::Index>(latent_grad.size()) - 1;
  Mat G = Mat::Zero(c.dim(), 2 * c.segments());
  Vec b, db;
  for (Eigen::Index n = 0; n <= N; ++n) {
    c.basis(static_cast<double>(n) / static_cast<double>(N), b, db);
    G.noalias() += latent_grad[static_cast<std::size_t>(n)] * b.transpose();
  }
  return Eigen::Map<const Vec>(G.data(), G.size());
}

double kl_energy_with_gradient(const SplineCurve& c, const DecoderMap& dec, Eigen::Index N, Vec& grad) {
  const Decoded d = decode_curve(c, dec, N, true);
  const Eigen::Index p = dec.params_per_feature();
  const double scale = 2.0 * static_cast<double>(N);
  std::vector<Vec> flat_grad(static_cast<std::size_t>(N + 1), Vec::Zero(dec.output_dim()));
  double total = 0.0;
  for (Eigen::Index n = 0; n < N; ++n) {
    const auto i = static_cast<std::size_t>(n);
    for (Eigen::Index f = 0; f < dec.feature_count(); ++f) {
      const auto& a = d.points[i][static_cast<std::size_t>(f)];
      const auto& b = d.points[i + 1][static_cast<std::size_t>(f)];
      total += kl(a, b);
      const KlGradient g = kl_gradient(a, b);
      flat_grad[i].segment(f * p, p) += scale * g.first;
      flat_grad[i + 1].segment(f * p, p) += scale * g.second;
    }
  }
  const double energy = scale * total;
  if (!std::isfinite(energy)) throw_non_finite(0.0, "KL energy");
  std::vector<Vec> latent(static_cast<std::size_t>(N + 1));
  for (std::size_t i = 0; i < latent.size(); ++i) latent[i] = d.jac[i].transpose() * flat_grad[i];
  grad = chain_to_coefficients(c, latent);
  return energy;
}

void require_categorical(const DecoderMap& dec) {
  if (dec.family() != FamilyKind::Categorical) {
    throw Error(ErrorCode::FamilyMismatch, "categorical energy needs a Categorical decoder");
  }
}

double categorical_energy_impl(const SplineCurve& c, const DecoderMap& dec, Eigen::Index N, Vec* grad) {
  require_categorical(dec);
  require_steps(N);
  const Decoded d = decode_curve(c, dec, N, grad != nullptr);
  std::vector<Vec> roots(d.points.size());
  for (std::size_t i = 0; i < roots.size(); ++i) {
    Vec all(dec.output_dim());
    const Eigen::Index p = dec.params_per_feature();
    for (Eigen::Index f = 0; f < dec.feature_count(); ++f) {
      all.segment(f * p, p) = d.points[i][static_cast<std::size_t>(f)].values().cwiseSqrt();
    }
    roots[i] = all;
  }
  const double features = static_cast<double>(dec.feature_count());
  double total = 0.0;
  std::vector<Vec> flat_grad;
  if (grad) flat_grad.assign(roots.size(), Vec::Zero(dec.output_dim()));
  for (std::size_t n = 0; n + 1 < roots.size(); ++n) {
    total += 2.0 * features - 2.0 * roots[n].dot(roots[n + 1]);
    if (grad) {
      // ∂(-2 √a·√b)/∂a_k = -√b_k / √a_k
      flat_grad[n].array() -= roots[n + 1].array() / roots[n].array();
      flat_grad[n + 1].array() -= roots[n].array() / roots[n + 1].array();
    }
  }
  if (!std::isfinite(total)) throw_non_finite(0.0, "categorical energy");
  if (grad) {
    std::vector<Vec> latent(roots.size());
    for (std::size_t i = 0; i < latent.size(); ++i) latent[i] = d.jac[i].transpose() * flat_grad[i];
    *grad = chain_to_coefficients(c, latent);
  }
  return total;
}

/// Energy functional over the free spline coefficients.
struct Objective {
  std::function<double(const SplineCurve&)> value;
  std::function<double(const SplineCurve&, Vec&)> value_grad;  // empty when only FD is available
  std::function<void(int)> begin_iteration;                   // refreshes random numbers
};

double safe_value(const Objective& obj, const SplineCurve& c) {
  try {
    const double v = obj.value(c);
    return std::isfinite(v) ? v : kInf;
  } catch (const Error&) {
    return kInf;
  }
}

double value_and_gradient(const Objective& obj, const SplineCurve& c, double fd_step, Vec& grad) {
  if (obj.value_grad) return obj.value_grad(c, grad);
  const double f = obj.value(c);
  const Vec x = c.free_parameters();
  grad.resize(x.size());
  SplineCurve probe = c;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vec xp = x, xm = x;
    xp[i] += fd_step;
    xm[i] -= fd_step;
    probe.set_free_parameters(xp);
    const double fp = safe_value(obj, probe);
    probe.set_free_parameters(xm);
    const double fm = safe_value(obj, probe);
    if (std::isfinite(fp) && std::isfinite(fm)) {
      grad[i] = (fp - fm) / (2.0 * fd_step);
    } else if (std::isfinite(fp)) {
      grad[i] = (fp - f) / fd_step;
    } else if (std::isfinite(fm)) {
      grad[i] = (f - fm) / fd_step;
    } else {
      grad[i] = 0.0;
    }
  }
  return f;
}

Vec lbfgs_direction(const Vec& g, const std::deque<Vec>& S, const std::deque<Vec>& Y) {
  Vec q = -g;
  const std::size_t m = S.size();
  std::vector<double> alpha(m), rho(m);
  for (std::size_t j = m; j-- > 0;) {
    rho[j] = 1.0 / Y[j].dot(S[j]);
    alpha[j] = rho[j] * S[j].dot(q);
    q -= alpha[j] * Y[j];
  }
  if (m > 0) q *= S.back().dot(Y.back()) / Y.back().squaredNorm();
  for (std::size_t j = 0; j < m; ++j) {
    const double beta = rho[j] * Y[j].dot(q);
    q += (alpha[j] - beta) * S[j];
  }
  return q;
}

/// L-BFGS with Armijo backtracking. Energy is non-increasing across accepted steps.
GeodesicResult run_optimizer(const Vec& z0, const Vec& z1, const Objective& obj, const EnergyConfig& cfg, Rng& rng,
                             const std::function<double(const SplineCurve&)>& final_value) {
  require_steps(cfg.N);
  if (!z0.allFinite() || !z1.allFinite()) throw Error(ErrorCode::NonFinite, "geodesic endpoints must be finite");
  if (z0.size() != z1.size()) throw Error(ErrorCode::ShapeError, "geodesic endpoints differ in dimension");

  const SplineCurve straight(z0, z1, cfg.segments);
  const double straight_energy = final_value(straight);  // throws NonFiniteEnergy with t

  GeodesicResult result{straight, straight_energy, straight_energy, 0, true, {}};
  if ((z1 - z0).norm() == 0.0) {
    result.energy_history.push_back(straight_energy);
    return result;
  }

  SplineCurve curve = straight;
  {
    Vec x(curve.free_count());
    for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = cfg.jitter * rng.normal();
    curve.set_free_parameters(x);
    if (!std::isfinite(safe_value(obj, curve))) curve = straight;
  }

  const auto& opt = cfg.optimizer;
  std::deque<Vec> S, Y;
  Vec x = curve.free_parameters();
  Vec g;
  double f = 0.0;
  int stalls = 0;
  bool converged = false;
  int it = 0;
  for (; it < opt.max_iters; ++it) {
    if (obj.begin_iteration) obj.begin_iteration(it);
    curve.set_free_parameters(x);
    if (it == 0 || obj.begin_iteration) f = value_and_gradient(obj, curve, cfg.fd_step, g);
    if (it == 0) result.energy_history.push_back(f);
    if (!std::isfinite(f) || !g.allFinite()) break;
    if (g.lpNorm<Eigen::Infinity>() <= opt.grad_tol * std::max(1.0, f)) {
      converged = true;
      break;
    }

    bool accepted = false;
    for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
      Vec p = lbfgs_direction(g, S, Y);
      double slope = g.dot(p);
      if (!(slope < 0)) {
        S.clear();
        Y.clear();
        p = -g;
        slope = -g.squaredNorm();
      }
      double alpha = S.empty() ? std::min(opt.step, 0.1 / p.lpNorm<Eigen::Infinity>()) : 1.0;
      SplineCurve trial = curve;
      for (int k = 0; k < 60; ++k, alpha *= 0.5) {
        const Vec xn = x + alpha * p;
        trial.set_free_parameters(xn);
        const double fn = safe_value(obj, trial);
        if (fn <= f + 1e-4 * alpha * slope) {
          Vec gn;
          const double fv = value_and_gradient(obj, trial, cfg.fd_step, gn);
          const Vec s = xn - x, y = gn - g;
          if (s.dot(y) > 1e-12 * s.norm() * y.norm()) {
            S.push_back(s);
            Y.push_back(y);
            if (static_cast<int>(S.size()) > opt.memory) {
              S.pop_front();
              Y.pop_front();
            }
          }
          stalls = (f - fv <= 1e-15 * std::max(1.0, std::abs(f))) ? stalls + 1 : 0;
          x = xn;
          f = fv;
          g = gn;
          accepted = true;
          break;
        }
      }
      if (!accepted) {
        if (S.empty()) break;
        S.clear();
        Y.clear();
      }
    }
    if (!accepted) {
      // No descent possible at working precision.
      converged = g.lpNorm<Eigen::Infinity>() <= 1e-4 * std::max(1.0, f);
      break;
    }
    result.energy_history.push_back(f);
    if (stalls >= 3) {
      converged = true;
      ++it;
      break;
    }
  }
  curve.set_free_parameters(x);
  result.iterations = it;
  result.converged = converged;

  const double optimized = [&] {
    try {
      return final_value(curve);
    } catch (const Error&) {
      return kInf;
    }
  }();
  if (optimized < straight_energy - 1e-12 * std::max(1.0, straight_energy)) {
    result.curve = curve;
    result.energy = optimized;
  }
  return result;
}

Objective decoder_objective(const DecoderMap& dec, const EnergyConfig& cfg, std::shared_ptr<McSettings> mc) {
  const bool categorical = cfg.energy == EnergyKind::Categorical;
  if (categorical) require_categorical(dec);
  bool analytic = false;
  switch (cfg.gradient) {
    case GradientMode::Auto: analytic = categorical || !cfg.mc; break;
    case GradientMode::Analytic:
      if (cfg.mc && !categorical) throw Error(ErrorCode::InvalidParam, "analytic gradients need closed-form KL");
      analytic = true;
      break;
    case GradientMode::FiniteDifference: analytic = false; break;
  }
  const Eigen::Index N = cfg.N;
  Objective obj;
  if (categorical) {
    obj.value = [&dec, N](const SplineCurve& c) { return categorical_energy_impl(c, dec, N, nullptr); };
    if (analytic) obj.value_grad = [&dec, N](const SplineCurve& c, Vec& g) { return categorical_energy_impl(c, dec, N, &g); };
    return obj;
  }
  obj.value = [&dec, N, mc](const SplineCurve& c) { return kl_energy(c, dec, N, mc.get()); };
  if (analytic) obj.value_grad = [&dec, N](const SplineCurve& c, Vec& g) { return kl_energy_with_gradient(c, dec, N, g); };
  if (mc) {
    const McSettings base = *mc;
    obj.begin_iteration = [mc, base](int it) {
      mc->seed = Rng(base.seed).split(static_cast<std::uint64_t>(it)).next_u64();
    };
  }
  return obj;
}

}  // namespace

Vec segment_kls(const SplineCurve& c, const DecoderMap& dec, Eigen::Index N, const McSettings* mc) {
  require_steps(N);
  return segment_kls_decoded(decode_curve(c, dec, N, false), mc);
}

double kl_energy(const SplineCurve& c, const DecoderMap& dec, Eigen::Index N, const McSettings* mc) {
  return 2.0 * static_cast<double>(N) * segment_kls(c, dec, N, mc).sum();
}

double categorical_energy(const SplineCurve& c, const DecoderMap& dec, Eigen::Index N) {
  return categorical_energy_impl(c, dec, N, nullptr);
}

double curve_length(const SplineCurve& c, const DecoderMap& dec, Eigen::Index N, const McSettings* mc) {
  return (2.0 * segment_kls(c, dec, N, mc).array().max(0.0)).sqrt().sum();
}

namespace {

template <typename F>
void for_each_metric_segment(const SplineCurve& c, const LatentMetric& metric, Eigen::Index N, F&& fn) {
  require_steps(N);
  Vec prev = c.position(0.0);
  for (Eigen::Index n = 0; n < N; ++n) {
    const double t1 = static_cast<double>(n + 1) / static_cast<double>(N);
    const double tm = (static_cast<double>(n) + 0.5) / static_cast<double>(N);
    const Vec next = c.position(t1);
    const Vec delta = next - prev;
    const Mat M = metric(c.position(tm));
    const double q = delta.dot(M * delta);
    if (!std::isfinite(q)) throw_non_finite(tm, "metric quadratic form");
    fn(q);
    prev = next;
  }
}

/// N Σ Δcᵀ M(mid) Δc with its gradient over the free coefficients, using metric derivatives.
double metric_energy_with_gradient(const SplineCurve& c, const LatentMetric& metric, Eigen::Index N, double fd_step,
                                   Vec& grad) {
  require_steps(N);
  const double scale = static_cast<double>(N);
  Mat G = Mat::Zero(c.dim(), 2 * c.segments());
  Vec b, db;
  auto add = [&](double t, const Vec& g) {
    c.basis(t, b, db);
    G.noalias() += g * b.transpose();
  };
  Mat M;
  std::vector<Mat> dM;
  double total = 0.0;
  Vec prev = c.position(0.0);
  for (Eigen::Index n = 0; n < N; ++n) {
    const double t0 = static_cast<double>(n) / scale;
    const double t1 = static_cast<double>(n + 1) / scale;
    const double tm = (static_cast<double>(n) + 0.5) / scale;
    const Vec next = c.position(t1);
    const Vec delta = next - prev;
    metric.jet(c.position(tm), fd_step, M, dM);
    const Vec Md = M * delta;
    const double q = delta.dot(Md);
    if (!std::isfinite(q)) throw_non_finite(tm, "metric quadratic form");
    total += q;
    add(t1, 2.0 * scale * Md);
    add(t0, -2.0 * scale * Md);
    Vec gm(c.dim());
    for (Eigen::Index k = 0; k < c.dim(); ++k) gm[k] = scale * delta.dot(dM[static_cast<std::size_t>(k)] * delta);
    add(tm, gm);
    prev = next;
  }
  grad = Eigen::Map<const Vec>(G.data(), G.size());
  return scale * total;
}

}  // namespace

double metric_energy(const SplineCurve& c, const LatentMetric& metric, Eigen::Index N) {
  double total = 0.0;
  for_each_metric_segment(c, metric, N, [&](double q) { total += q; });
  return static_cast<double>(N) * total;
}

double metric_length(const SplineCurve& c, const LatentMetric& metric, Eigen::Index N) {
  double total = 0.0;
  for_each_metric_segment(c, metric, N, [&](double q) { total += std::sqrt(std::max(q, 0.0)); });
  return total;
}

GeodesicResult minimize_energy(const Vec& z0, const Vec& z1, const DecoderMap& dec, const EnergyConfig& cfg, Rng& rng) {
  if (z0.size() != dec.latent_dim() || z1.size() != dec.latent_dim()) {
    throw Error(ErrorCode::ShapeError, "geodesic endpoints must match the latent dimension");
  }
  std::shared_ptr<McSettings> mc = cfg.mc ? std::make_shared<McSettings>(*cfg.mc) : nullptr;
  const Objective obj = decoder_objective(dec, cfg, mc);
  const Eigen::Index N = cfg.N;
  const bool categorical = cfg.energy == EnergyKind::Categorical;
  const std::optional<McSettings> base = cfg.mc;
  auto final_value = [&](const SplineCurve& c) {
    if (categorical) return categorical_energy(c, dec, N);
    return kl_energy(c, dec, N, base ? &*base : nullptr);
  };
  return run_optimizer(z0, z1, obj, cfg, rng, final_value);
}

GeodesicResult minimize_energy(const Vec& z0, const Vec& z1, const LatentMetric& metric, const EnergyConfig& cfg,
                               Rng& rng) {
  if (z0.size() != metric.dim() || z1.size() != metric.dim()) {
    throw Error(ErrorCode::ShapeError, "geodesic endpoints must match the latent dimension");
  }
  const Eigen::Index N = cfg.N;
  const double fd_step = cfg.fd_step;
  Objective obj;
  obj.value = [&metric, N](const SplineCurve& c) { return metric_energy(c, metric, N); };
  if (cfg.gradient != GradientMode::FiniteDifference) {
    obj.value_grad = [&metric, N, fd_step](const SplineCurve& c, Vec& g) {
      return metric_energy_with_gradient(c, metric, N, fd_step, g);
    };
  }
  return run_optimizer(z0, z1, obj, cfg, rng, obj.value);
}

Vec ode_rhs(const LatentMetric& metric, const Vec& z, const Vec& zdot, double fd_step) {
  const Eigen::Index d = z.size();
  if (zdot.size() != d) throw Error(ErrorCode::ShapeError, "ode_rhs: velocity dimension");
  if (!(fd_step > 0)) throw Error(ErrorCode::InvalidParam, "ode_rhs: finite-difference step must be > 0");
  Mat M;
  std::vector<Mat> dM;
  if (zdot.isZero(0.0)) {
    M = metric(z);
  } else {
    metric.jet(z, fd_step, M, dM);
  }
  if (!M.allFinite()) throw Error(ErrorCode::SingularMetric, "metric is not finite");
  if (zdot.isZero(0.0)) return Vec::Zero(d);

  Vec term = Vec::Zero(d);
  Mat directional = Mat::Zero(d, d);  // Σ_k ż_k ∂_k M
  for (Eigen::Index k = 0; k < d; ++k) {
    const Mat& D = dM[static_cast<std::size_t>(k)];
    directional.noalias() += zdot[k] * D;
    term[k] = zdot.dot(D * zdot);
  }
  const Vec rhs = 2.0 * directional * zdot - term;

  Eigen::LLT<Mat> llt(M);
  Vec acc;
  if (llt.info() == Eigen::Success) {
    acc = llt.solve(rhs);
  } else {
    Eigen::LDLT<Mat> ldlt(M);
    const Vec D = ldlt.vectorD();
    if (ldlt.info() != Eigen::Success || !(D.minCoeff() > 1e-14 * D.cwiseAbs().maxCoeff()))
      throw Error(ErrorCode::SingularMetric, "metric not positive definite");
    acc = ldlt.solve(rhs);
  }
  acc *= -0.5;
  if (!acc.allFinite()) throw Error(ErrorCode::SingularMetric, "metric solve produced non-finite values");
  return acc;
}

ExpResult exp_map(const LatentMetric& metric, const Vec& z, const Vec& v, int steps, double fd_step) {
  if (steps < 1) throw Error(ErrorCode::InvalidParam, "exp_map needs at least one step");
  if (z.size() != v.size() || z.size() != metric.dim()) throw Error(ErrorCode::ShapeError, "exp_map: dimension mismatch");
  const Eigen::Index d = z.size();
  const double h = 1.0 / steps;
  ExpResult out;
  out.t = Vec::LinSpaced(steps + 1, 0.0, 1.0);
  out.path.resize(steps + 1, d);
  out.velocity.resize(steps + 1, d);
  Vec x = z, u = v;
  out.path.row(0) = x.transpose();
  out.velocity.row(0) = u.transpose();
  for (int s = 0; s < steps; ++s) {
    const Vec k1x = u, k1u = ode_rhs(metric, x, u, fd_step);
    const Vec k2x = u + 0.5 * h * k1u, k2u = ode_rhs(metric, x + 0.5 * h * k1x, k2x, fd_step);
    const Vec k3x = u + 0.5 * h * k2u, k3u = ode_rhs(metric, x + 0.5 * h * k2x, k3x, fd_step);
    const Vec k4x = u + h * k3u, k4u = ode_rhs(metric, x + h * k3x, k4x, fd_step);
    x += h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
    u += h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
    if (!x.allFinite() || !u.allFinite()) throw Error(ErrorCode::NonFinite, "exp_map trajectory diverged");
    out.path.row(s + 1) = x.transpose();
    out.velocity.row(s + 1) = u.transpose();
  }
  out.endpoint = x;
  return out;
}

namespace {

LogResult rescale_initial_velocity(GeodesicResult geo, double length, const Mat& Mz) {
  LogResult out;
  const Vec cdot = geo.curve.eval(0.0).second;
  const double norm = std::sqrt(std::max(cdot.dot(Mz * cdot), 0.0));
  out.v = norm > 0 ? Vec(cdot * (length / norm)) : Vec(Vec::Zero(cdot.size()));
  out.length = length;
  out.geodesic = std::move(geo);
  return out;
}

bool shoot(const LatentMetric& metric, const Vec& z, const Vec& v, int steps, Vec& end) {
  try {
    end = exp_map(metric, z, v, steps).endpoint;
  } catch (const Error&) {
    return false;
  }
  return end.allFinite();
}

/// Damped Newton on Exp_z(v) = y with a central-difference Jacobian; steps must shrink the miss.
Vec refine_by_shooting(const LatentMetric& metric, const Vec& z, const Vec& y, Vec v, const EnergyConfig& cfg) {
  if (cfg.shooting_iters <= 0) return v;
  Vec end;
  if (!shoot(metric, z, v, cfg.shooting_steps, end)) return v;
  double miss = (y - end).norm();
  const double tol = 1e-12 * std::max(1.0, (y - z).norm());
  const Eigen::Index d = v.size();
  for (int it = 0; it < cfg.shooting_iters && miss > tol; ++it) {
    const double h = 1e-6 * std::max(1.0, v.norm());
    Mat J(d, d);
    for (Eigen::Index k = 0; k < d; ++k) {
      Vec vp = v, vm = v, ep, em;
      vp[k] += h;
      vm[k] -= h;
      if (!shoot(metric, z, vp, cfg.shooting_steps, ep) || !shoot(metric, z, vm, cfg.shooting_steps, em)) return v;
      J.col(k) = (ep - em) / (2.0 * h);
    }
    const Eigen::FullPivLU<Mat> lu(J);
    if (!lu.isInvertible()) break;
    const Vec step = lu.solve(Vec(y - end));
    bool accepted = false;
    for (double a = 1.0; a > 1e-3 && !accepted; a *= 0.5) {
      const Vec trial = v + a * step;
      Vec trial_end;
      if (shoot(metric, z, trial, cfg.shooting_steps, trial_end) && (y - trial_end).norm() < miss) {
        v = trial;
        end = trial_end;
        miss = (y - end).norm();
        accepted = true;
      }
    }
    if (!accepted) break;
  }
  return v;
}

}  // namespace

LogResult log_map(const LatentMetric& metric, const Vec& z, const Vec& y, const EnergyConfig& cfg, Rng& rng) {
  GeodesicResult geo = minimize_energy(z, y, metric, cfg, rng);
  if ((y - z).norm() == 0.0) return LogResult{Vec::Zero(z.size()), 0.0, std::move(geo)};
  const double length = metric_length(geo.curve, metric, cfg.N);
  LogResult out = rescale_initial_velocity(std::move(geo), length, metric(z));
  out.v = refine_by_shooting(metric, z, y, std::move(out.v), cfg);
  return out;
}

LogResult log_map(const DecoderMap& dec, const Vec& z, const Vec& y, const EnergyConfig& cfg, Rng& rng) {
  GeodesicResult geo = minimize_energy(z, y, dec, cfg, rng);
  if ((y - z).norm() == 0.0) return LogResult{Vec::Zero(z.size()), 0.0, std::move(geo)};
  const McSettings* mc = cfg.mc ? &*cfg.mc : nullptr;
  const double length = curve_length(geo.curve, dec, cfg.N, mc);
  LogResult out = rescale_initial_velocity(std::move(geo), length, pullback(dec, z));
  // Non-owning handle; the metric does not outlive this call.
  const LatentMetric metric = LatentMetric::exact(std::shared_ptr<const DecoderMap>(&dec, [](const DecoderMap*) {}));
  out.v = refine_by_shooting(metric, z, y, std::move(out.v), cfg);
  return out;
}

}  // namespace statgeo
