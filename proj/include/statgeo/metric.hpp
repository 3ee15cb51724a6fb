#pragma once

#include "statgeo/core.hpp"
#include "statgeo/decoder.hpp"

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <variant>
#include <vector>

namespace statgeo {

/// Monte-Carlo settings for sampled KL divergences. The same seed is reused for every
/// evaluation, so nearby probes share random numbers.
struct McSettings {
  std::uint64_t seed = 0;
  Eigen::Index samples = 1000;
};

/// Σ_features KL(p(·|h(z1)) || p(·|h(z2))), closed form unless `mc` is given.
double latent_kl(const DecoderMap& dec, const Vec& z1, const Vec& z2, const McSettings* mc = nullptr);

/// Same, with the decoded parameters of z1 / z2 already available.
double features_kl(const std::vector<ParamPoint>& a, const std::vector<ParamPoint>& b, const McSettings* mc = nullptr);

/// Exact pullback Jᵀ I_H(h(z)) J, symmetrized.
Mat pullback(const DecoderMap& dec, const Vec& z);

/// KL-probe estimate from coordinate perturbations ε·e_i and ε·(e_i + e_j).
/// Eigenvalues below 1e-8·trace/d are clamped; `clamped` reports whether that happened.
Mat kl_probe(const DecoderMap& dec, const Vec& z, double epsilon, const std::optional<McSettings>& mc = std::nullopt,
             bool* clamped = nullptr);

/// Raw KL-probe matrix before eigenvalue clamping (symmetric by construction).
Mat kl_probe_raw(const DecoderMap& dec, const Vec& z, double epsilon, const std::optional<McSettings>& mc = std::nullopt);

/// Clamps eigenvalues of a symmetric matrix to >= 1e-8·trace/d.
Mat clamp_spd(const Mat& m, bool* clamped = nullptr);

/// Maps K-1 free simplex coordinates to a Categorical point by appending 1 - Σ.
ParamPoint simplex_chart(const Vec& free);

/// Jacobian [I; -1ᵀ] of the simplex chart, K x (K-1).
Mat simplex_chart_jacobian(Eigen::Index categories);

/// Categorical Fisher-Rao pulled back through the simplex chart.
Mat simplex_pullback(const Vec& free);

/// Metric tensors on a uniform lattice, interpolated with a normalized Gaussian kernel.
struct MetricGrid {
  Vec lower;
  Vec upper;
  std::vector<Eigen::Index> resolution;
  Mat points;                // S x d, last axis varies fastest
  std::vector<Mat> tensors;  // S tensors
  double bandwidth = 1.0;

  Eigen::Index dim() const { return lower.size(); }
  Eigen::Index size() const { return points.rows(); }
};

class LatentMetric;

/// Lattice points of a box, last axis fastest.
Mat lattice_points(const Vec& lower, const Vec& upper, const std::vector<Eigen::Index>& resolution);

MetricGrid grid_build(const LatentMetric& metric, const Vec& lower, const Vec& upper,
                      const std::vector<Eigen::Index>& resolution, double bandwidth, unsigned threads = 1);

/// Normalized kernel weights w̃_s(z).
Vec grid_weights(const MetricGrid& grid, const Vec& z);

/// Σ_s w̃_s(z) M_s.
Mat grid_eval(const MetricGrid& grid, const Vec& z);

/// Σ_s w̃_s(z) M_s and its partial derivatives ∂M/∂z_k.
void grid_eval_with_derivatives(const MetricGrid& grid, const Vec& z, Mat& M, std::vector<Mat>& dM);

/// Any source of SPD tensors over the latent space.
class LatentMetric {
 public:
  struct ExactPullback {
    std::shared_ptr<const DecoderMap> decoder;
  };
  struct KlProbe {
    std::shared_ptr<const DecoderMap> decoder;
    double epsilon = 1e-2;
    std::optional<McSettings> mc;
  };
  struct Grid {
    std::shared_ptr<const MetricGrid> grid;
  };
  struct Analytic {
    Eigen::Index dim = 0;
    std::function<Mat(const Vec&)> fn;
  };
  using Variant = std::variant<ExactPullback, KlProbe, Grid, Analytic>;

  static LatentMetric exact(std::shared_ptr<const DecoderMap> dec);
  static LatentMetric probe(std::shared_ptr<const DecoderMap> dec, double epsilon = 1e-2,
                            std::optional<McSettings> mc = std::nullopt);
  static LatentMetric grid(MetricGrid grid);
  static LatentMetric analytic(Eigen::Index dim, std::function<Mat(const Vec&)> fn);
  static LatentMetric constant(Mat m);

  Mat operator()(const Vec& z) const;
  Eigen::Index dim() const;
  const Variant& source() const noexcept { return source_; }

  /// M(z) and ∂M/∂z_k: exact for grids, central differences of step fd_step otherwise.
  void jet(const Vec& z, double fd_step, Mat& M, std::vector<Mat>& dM) const;

  /// Number of KL-probe evaluations whose eigenvalues had to be clamped.
  long clamp_events() const noexcept { return clamps_->load(); }

 private:
  explicit LatentMetric(Variant v) : source_(std::move(v)), clamps_(std::make_shared<std::atomic<long>>(0)) {}

  Variant source_;
  std::shared_ptr<std::atomic<long>> clamps_;
};

}  // namespace statgeo
