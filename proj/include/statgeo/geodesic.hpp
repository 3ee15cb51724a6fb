#pragma once

#include "statgeo/core.hpp"
#include "statgeo/decoder.hpp"
#include "statgeo/metric.hpp"
#include "statgeo/spline.hpp"

#include <optional>
#include <vector>

namespace statgeo {

enum class GradientMode {
  Auto,            // chain rule when available (closed-form KL, metric derivatives), finite differences otherwise
  Analytic,        // chain rule (throws InvalidParam for sampled KL)
  FiniteDifference // central differences on the spline coefficients
};

enum class EnergyKind {
  Kl,          // 2N Σ KL between consecutive decoded points
  Categorical  // Σ (2 - 2 √h·√h'), Categorical decoders only
};

struct OptimizerConfig {
  double step = 1.0;        // initial trial step of the first line search
  int max_iters = 500;
  double grad_tol = 1e-8;   // on ‖∇E‖∞ / max(1, E)
  int memory = 8;           // L-BFGS history
};

struct EnergyConfig {
  Eigen::Index N = 64;
  int segments = 4;
  OptimizerConfig optimizer;
  GradientMode gradient = GradientMode::Auto;
  double fd_step = 1e-6;
  std::optional<McSettings> mc;
  double jitter = 1e-4;
  EnergyKind energy = EnergyKind::Kl;
  int shooting_iters = 20;   // Newton refinements of a log map through exp, 0 keeps the spline velocity
  int shooting_steps = 100;  // RK4 steps of those exp maps
};

struct GeodesicResult {
  SplineCurve curve;
  double energy = 0.0;
  double straight_energy = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> energy_history;  // accepted iterates, non-increasing
};

/// KL divergences between consecutive decoded points c(n/N), c((n+1)/N), n = 0..N-1.
Vec segment_kls(const SplineCurve& c, const DecoderMap& dec, Eigen::Index N, const McSettings* mc = nullptr);

/// 2N Σ_n KL(c(n/N), c((n+1)/N)); approximates ∫ ċᵀ M ċ dt.
double kl_energy(const SplineCurve& c, const DecoderMap& dec, Eigen::Index N, const McSettings* mc = nullptr);

/// Σ_n Σ_features (2 - 2 √h(c(n/N))·√h(c((n+1)/N))). Throws FamilyMismatch for non-Categorical decoders.
double categorical_energy(const SplineCurve& c, const DecoderMap& dec, Eigen::Index N);

/// Σ_n √(2 KL(c(n/N), c((n+1)/N))).
double curve_length(const SplineCurve& c, const DecoderMap& dec, Eigen::Index N, const McSettings* mc = nullptr);

/// N Σ_n Δcᵀ M(midpoint) Δc.
double metric_energy(const SplineCurve& c, const LatentMetric& metric, Eigen::Index N);

/// Σ_n √(Δcᵀ M(midpoint) Δc).
double metric_length(const SplineCurve& c, const LatentMetric& metric, Eigen::Index N);

/// Minimizes the discretized energy over spline coefficients, starting from the jittered
/// straight line. The result never has higher energy than the straight line.
GeodesicResult minimize_energy(const Vec& z0, const Vec& z1, const DecoderMap& dec, const EnergyConfig& cfg, Rng& rng);

/// Same for a latent metric, using metric_energy.
GeodesicResult minimize_energy(const Vec& z0, const Vec& z1, const LatentMetric& metric, const EnergyConfig& cfg,
                               Rng& rng);

/// Geodesic acceleration z̈ = -½ M⁻¹ [2 (Σ_k ż_k ∂_k M) ż - (żᵀ ∂_k M ż)_k], with ∂_k M by central
/// differences of step fd_step.
Vec ode_rhs(const LatentMetric& metric, const Vec& z, const Vec& zdot, double fd_step = 1e-5);

struct ExpResult {
  Vec endpoint;
  Vec t;           // steps + 1 times
  Mat path;        // (steps + 1) x d positions
  Mat velocity;    // (steps + 1) x d velocities
};

/// Fixed-step RK4 integration of the geodesic ODE from (z, v) over [0, 1].
ExpResult exp_map(const LatentMetric& metric, const Vec& z, const Vec& v, int steps = 100, double fd_step = 1e-5);

struct LogResult {
  Vec v;
  double length = 0.0;
  GeodesicResult geodesic;
};

/// Initial velocity of the minimizing spline from z to y, rescaled so ‖v‖_{M(z)} equals its length,
/// then refined by shooting while that shrinks ‖Exp_z(v) − y‖.
LogResult log_map(const LatentMetric& metric, const Vec& z, const Vec& y, const EnergyConfig& cfg, Rng& rng);

/// Decoder variant: KL energy and KL length, rescaled and shot with the exact pullback.
LogResult log_map(const DecoderMap& dec, const Vec& z, const Vec& y, const EnergyConfig& cfg, Rng& rng);

}  // namespace statgeo
