#include "statgeo/metric.hpp"

#include <limits>

#include "statgeo/parallel.hpp"

#include <cmath>

namespace statgeo {

double features_kl(const std::vector<ParamPoint>& a, const std::vector<ParamPoint>& b, const McSettings* mc) {
  double total = 0.0;
  for (std::size_t f = 0; f < a.size(); ++f) {
    if (mc) {
      Rng rng = Rng(mc->seed).split(f);
      total += kl_monte_carlo(a[f], b[f], rng, mc->samples).mean;
    } else {
      total += kl(a[f], b[f]);
    }
  }
  return total;
}

double latent_kl(const DecoderMap& dec, const Vec& z1, const Vec& z2, const McSettings* mc) {
  return features_kl(forward(dec, z1), forward(dec, z2), mc);
}

Mat pullback(const DecoderMap& dec, const Vec& z) {
  Vec flat;
  Mat J;
  forward_with_jacobian(dec, z, flat, J);
  const Mat I = product_fisher(split_features(dec.family(), dec.feature_count(), flat));
  return symmetrize(J.transpose() * I * J);
}

Mat kl_probe_raw(const DecoderMap& dec, const Vec& z, double epsilon, const std::optional<McSettings>& mc) {
  if (!(epsilon > 0) || !std::isfinite(epsilon)) {
    throw Error(ErrorCode::InvalidEpsilon, "KL-probe step must be > 0");
  }
  const McSettings* settings = mc ? &*mc : nullptr;
  const Eigen::Index d = dec.latent_dim();
  const auto base = forward(dec, z);
  auto probe = [&](const Vec& delta) { return features_kl(base, forward(dec, z + delta), settings); };

  Vec single(d);
  for (Eigen::Index i = 0; i < d; ++i) single[i] = probe(epsilon * Vec::Unit(d, i));

  const double eps2 = epsilon * epsilon;
  Mat M(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    M(i, i) = 2.0 * single[i] / eps2;
    for (Eigen::Index j = i + 1; j < d; ++j) {
      const double pair = probe(epsilon * (Vec::Unit(d, i) + Vec::Unit(d, j)));
      M(i, j) = M(j, i) = (pair - single[i] - single[j]) / eps2;
    }
  }
  return M;
}

Mat clamp_spd(const Mat& m, bool* clamped) {
  const Eigen::Index d = m.rows();
  Eigen::SelfAdjointEigenSolver<Mat> eig(symmetrize(m));
  Vec lambda = eig.eigenvalues();
  double floor = 1e-8 * m.trace() / static_cast<double>(d);
  if (!(floor > 0)) floor = std::max(1e-8 * lambda.cwiseAbs().maxCoeff(), 1e-300);
  const bool hit = (lambda.array() < floor).any();
  if (clamped) *clamped = hit;
  if (!hit) return symmetrize(m);
  lambda = lambda.cwiseMax(floor);
  return symmetrize(eig.eigenvectors() * lambda.asDiagonal() * eig.eigenvectors().transpose());
}

Mat kl_probe(const DecoderMap& dec, const Vec& z, double epsilon, const std::optional<McSettings>& mc, bool* clamped) {
  return clamp_spd(kl_probe_raw(dec, z, epsilon, mc), clamped);
}

ParamPoint simplex_chart(const Vec& free) {
  if (free.size() < 1 || !free.allFinite() || !(free.minCoeff() > 0) || !(free.sum() < 1.0)) {
    throw Error(ErrorCode::OffSimplex, "free simplex coordinates must be positive with sum < 1");
  }
  Vec full(free.size() + 1);
  full.head(free.size()) = free;
  full[free.size()] = 1.0 - free.sum();
  return ParamPoint(FamilyKind::Categorical, full);
}

Mat simplex_chart_jacobian(Eigen::Index categories) {
  Mat A = Mat::Zero(categories, categories - 1);
  A.topRows(categories - 1).setIdentity();
  A.row(categories - 1).setConstant(-1.0);
  return A;
}

Mat simplex_pullback(const Vec& free) {
  const ParamPoint eta = simplex_chart(free);
  const Mat A = simplex_chart_jacobian(eta.size());
  return symmetrize(A.transpose() * fisher_rao(eta) * A);
}

Mat lattice_points(const Vec& lower, const Vec& upper, const std::vector<Eigen::Index>& resolution) {
  const Eigen::Index d = lower.size();
  if (upper.size() != d || static_cast<Eigen::Index>(resolution.size()) != d) {
    throw Error(ErrorCode::ShapeError, "grid bounds and resolution must share the latent dimension");
  }
  Eigen::Index total = 1;
  for (auto r : resolution) {
    if (r < 2) throw Error(ErrorCode::ShapeError, "grid resolution must be >= 2 per axis");
    total *= r;
  }
  Mat pts(total, d);
  for (Eigen::Index s = 0; s < total; ++s) {
    Eigen::Index rest = s;
    for (Eigen::Index k = d - 1; k >= 0; --k) {
      const Eigen::Index n = resolution[static_cast<std::size_t>(k)];
      const Eigen::Index i = rest % n;
      rest /= n;
      pts(s, k) = lower[k] + (upper[k] - lower[k]) * static_cast<double>(i) / static_cast<double>(n - 1);
    }
  }
  return pts;
}

MetricGrid grid_build(const LatentMetric& metric, const Vec& lower, const Vec& upper,
                      const std::vector<Eigen::Index>& resolution, double bandwidth, unsigned threads) {
  if (!(bandwidth > 0)) throw Error(ErrorCode::InvalidParam, "grid bandwidth must be > 0");
  MetricGrid grid;
  grid.lower = lower;
  grid.upper = upper;
  grid.resolution = resolution;
  grid.points = lattice_points(lower, upper, resolution);
  grid.bandwidth = bandwidth;
  grid.tensors.resize(static_cast<std::size_t>(grid.points.rows()));
  parallel_for(grid.tensors.size(), threads, [&](std::size_t s) {
    grid.tensors[s] = symmetrize(metric(grid.points.row(static_cast<Eigen::Index>(s)).transpose()));
  });
  return grid;
}

Vec grid_weights(const MetricGrid& grid, const Vec& z) {
  if (z.size() != grid.dim()) throw Error(ErrorCode::ShapeError, "grid_eval: dimension mismatch");
  if (!z.allFinite()) throw Error(ErrorCode::DegenerateWeights, "grid_eval at a non-finite point");
  const Vec d2 = (grid.points.rowwise() - z.transpose()).rowwise().squaredNorm();
  // Shifting by the nearest distance keeps the largest weight at 1; far queries tend to the
  // nearest tensor instead of underflowing.
  const double inv = 1.0 / (2.0 * grid.bandwidth * grid.bandwidth);
  Vec w = (-(d2.array() - d2.minCoeff()) * inv).exp().matrix();
  return w / w.sum();
}

Mat grid_eval(const MetricGrid& grid, const Vec& z) {
  if (z.size() != grid.dim()) throw Error(ErrorCode::ShapeError, "grid_eval: dimension mismatch");
  if (!z.allFinite()) throw Error(ErrorCode::DegenerateWeights, "grid_eval at a non-finite point");
  const Eigen::Index d = grid.dim();
  const Eigen::Index S = grid.size();
  thread_local std::vector<double> d2;
  d2.resize(static_cast<std::size_t>(S));
  double nearest = std::numeric_limits<double>::infinity();
  for (Eigen::Index s = 0; s < S; ++s) {
    double acc = 0.0;
    for (Eigen::Index k = 0; k < d; ++k) {
      const double diff = grid.points(s, k) - z[k];
      acc += diff * diff;
    }
    d2[static_cast<std::size_t>(s)] = acc;
    nearest = std::min(nearest, acc);
  }
  const double inv = 1.0 / (2.0 * grid.bandwidth * grid.bandwidth);
  Mat M = Mat::Zero(d, d);
  double total = 0.0;
  for (Eigen::Index s = 0; s < S; ++s) {
    const double w = std::exp(-(d2[static_cast<std::size_t>(s)] - nearest) * inv);
    if (w > 0) {
      M.noalias() += w * grid.tensors[static_cast<std::size_t>(s)];
      total += w;
    }
  }
  return M / total;
}

LatentMetric LatentMetric::exact(std::shared_ptr<const DecoderMap> dec) { return LatentMetric(ExactPullback{std::move(dec)}); }

LatentMetric LatentMetric::probe(std::shared_ptr<const DecoderMap> dec, double epsilon, std::optional<McSettings> mc) {
  if (!(epsilon > 0)) throw Error(ErrorCode::InvalidEpsilon, "KL-probe step must be > 0");
  return LatentMetric(KlProbe{std::move(dec), epsilon, mc});
}

LatentMetric LatentMetric::grid(MetricGrid grid) {
  return LatentMetric(Grid{std::make_shared<const MetricGrid>(std::move(grid))});
}

LatentMetric LatentMetric::analytic(Eigen::Index dim, std::function<Mat(const Vec&)> fn) {
  return LatentMetric(Analytic{dim, std::move(fn)});
}

LatentMetric LatentMetric::constant(Mat m) {
  const Eigen::Index d = m.rows();
  return analytic(d, [m = std::move(m)](const Vec&) { return m; });
}

Mat LatentMetric::operator()(const Vec& z) const {
  return std::visit(
      [&](const auto& src) -> Mat {
        using T = std::decay_t<decltype(src)>;
        if constexpr (std::is_same_v<T, ExactPullback>) {
          return pullback(*src.decoder, z);
        } else if constexpr (std::is_same_v<T, KlProbe>) {
          bool clamped = false;
          Mat m = kl_probe(*src.decoder, z, src.epsilon, src.mc, &clamped);
          if (clamped) ++*clamps_;
          return m;
        } else if constexpr (std::is_same_v<T, Grid>) {
          return grid_eval(*src.grid, z);
        } else {
          if (z.size() != src.dim) throw Error(ErrorCode::ShapeError, "metric: dimension mismatch");
          return src.fn(z);
        }
      },
      source_);
}

void grid_eval_with_derivatives(const MetricGrid& grid, const Vec& z, Mat& M, std::vector<Mat>& dM) {
  if (z.size() != grid.dim()) throw Error(ErrorCode::ShapeError, "grid_eval: dimension mismatch");
  if (!z.allFinite()) throw Error(ErrorCode::DegenerateWeights, "grid_eval at a non-finite point");
  const Eigen::Index d = grid.dim();
  const Eigen::Index S = grid.size();
  thread_local std::vector<double> d2;
  d2.resize(static_cast<std::size_t>(S));
  double nearest = std::numeric_limits<double>::infinity();
  for (Eigen::Index s = 0; s < S; ++s) {
    double acc = 0.0;
    for (Eigen::Index k = 0; k < d; ++k) {
      const double diff = grid.points(s, k) - z[k];
      acc += diff * diff;
    }
    d2[static_cast<std::size_t>(s)] = acc;
    nearest = std::min(nearest, acc);
  }
  const double inv_var = 1.0 / (grid.bandwidth * grid.bandwidth);
  M = Mat::Zero(d, d);
  dM.assign(static_cast<std::size_t>(d), Mat::Zero(d, d));
  Vec dtotal = Vec::Zero(d);
  double total = 0.0;
  for (Eigen::Index s = 0; s < S; ++s) {
    const double w = std::exp(-0.5 * (d2[static_cast<std::size_t>(s)] - nearest) * inv_var);
    if (!(w > 0)) continue;
    const Mat& T = grid.tensors[static_cast<std::size_t>(s)];
    M.noalias() += w * T;
    total += w;
    for (Eigen::Index k = 0; k < d; ++k) {
      // ∂w_s/∂z_k = -w_s (z_k - z_{s,k}) / σ²
      const double dw = -w * (z[k] - grid.points(s, k)) * inv_var;
      dM[static_cast<std::size_t>(k)].noalias() += dw * T;
      dtotal[k] += dw;
    }
  }
  M /= total;
  for (Eigen::Index k = 0; k < d; ++k) {
    Mat& D = dM[static_cast<std::size_t>(k)];
    D = (D - dtotal[k] * M) / total;
  }
}

void LatentMetric::jet(const Vec& z, double fd_step, Mat& M, std::vector<Mat>& dM) const {
  if (const auto* g = std::get_if<Grid>(&source_)) {
    grid_eval_with_derivatives(*g->grid, z, M, dM);
    return;
  }
  if (!(fd_step > 0)) throw Error(ErrorCode::InvalidParam, "metric derivative step must be > 0");
  M = (*this)(z);
  const Eigen::Index d = z.size();
  dM.resize(static_cast<std::size_t>(d));
  for (Eigen::Index k = 0; k < d; ++k) {
    Vec zp = z, zm = z;
    zp[k] += fd_step;
    zm[k] -= fd_step;
    dM[static_cast<std::size_t>(k)] = ((*this)(zp) - (*this)(zm)) / (2.0 * fd_step);
  }
}

Eigen::Index LatentMetric::dim() const {
  return std::visit(
      [](const auto& src) -> Eigen::Index {
        using T = std::decay_t<decltype(src)>;
        if constexpr (std::is_same_v<T, Grid>) {
          return src.grid->dim();
        } else if constexpr (std::is_same_v<T, Analytic>) {
          return src.dim;
        } else {
          return src.decoder->latent_dim();
        }
      },
      source_);
}

}  // namespace statgeo
