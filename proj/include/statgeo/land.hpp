#pragma once

#include "statgeo/core.hpp"
#include "statgeo/geodesic.hpp"
#include "statgeo/metric.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace statgeo {

/// Log maps used by the LAND: short discretization, a single spline segment.
EnergyConfig land_log_config();

struct LandConfig {
  EnergyConfig log_map = land_log_config();
  int exp_steps = 20;                // RK4 steps of the normalizer exp maps
  Eigen::Index mc_samples = 512;     // tangent samples of the normalizer
  int max_iters = 50;
  double tol = 1e-8;                 // relative NLL decrease that counts as converged
  double fd_step = 1e-4;             // step of the finite-difference mean gradient
  unsigned threads = 1;
  std::uint64_t seed = 0;
};

/// ρ(z) = C exp(-½ Log_μ(z)ᵀ Γ Log_μ(z)).
struct LandModel {
  Vec mean;
  Mat precision;
  double norm_const = 1.0;
  double norm_std_error = 0.0;
  LatentMetric metric;
  LandConfig config;
};

struct NormalizerEstimate {
  double norm_const = 0.0;
  double std_error = 0.0;
  double ess = 0.0;
  Mat tangents;  // n x d tangent samples v_j
  Vec weights;   // √det M(Exp_μ v_j) / √det M(μ)
};

/// Tangent-space importance estimate of C with proposal N(0, Γ⁻¹): antithetic standard normal
/// draws, whitened to unit second moment, mapped through exp_map for the volume correction.
/// Throws DegenerateEstimate when the effective sample size is below 10.
NormalizerEstimate land_normalizer(const Vec& mean, const Mat& precision, const LatentMetric& metric, Rng& rng,
                                   Eigen::Index n, int exp_steps = 20, unsigned threads = 1);

/// log C - ½ vᵀ Γ v with v = Log_μ(z).
double land_logpdf(const LandModel& model, const Vec& z);

/// Tangent vectors Log_μ(x_i), one row per point.
Mat land_log_maps(const LatentMetric& metric, const Vec& mean, const Mat& points, const LandConfig& cfg);

struct LandInit {
  Vec mean;
  Mat precision;
};

struct LandFitResult {
  LandModel model;
  double nll = 0.0;
  double initial_nll = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> nll_history;  // accepted iterates, non-increasing
};

/// Negative log-likelihood Σ ½ v_iᵀ Γ v_i - n log C for fixed normalizer random numbers.
double land_nll(const LatentMetric& metric, const Vec& mean, const Mat& precision, const Mat& points,
                const LandConfig& cfg, std::uint64_t normalizer_seed);

/// Maximum likelihood by backtracking gradient descent on (μ, log-Cholesky factor of Γ).
/// Without `init` the fit starts from the Euclidean mean and the inverse covariance of the
/// tangent vectors there. Points are rows.
LandFitResult land_fit(const Mat& points, const LatentMetric& metric, const std::optional<LandInit>& init,
                       const LandConfig& cfg, Rng& rng);

}  // namespace statgeo
