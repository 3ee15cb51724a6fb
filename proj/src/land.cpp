#include "statgeo/land.hpp"

#include "statgeo/parallel.hpp"

#include <cmath>
#include <numbers>

namespace statgeo {

namespace {

double half_log_det(const Mat& m) {
  Eigen::LLT<Mat> llt(symmetrize(m));
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::SingularMetric, "metric not positive definite");
  return llt.matrixLLT().diagonal().array().log().sum();
}

Mat cholesky_factor(const Mat& precision) {
  Eigen::LLT<Mat> llt(symmetrize(precision));
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::InvalidParam, "precision must be positive definite");
  return llt.matrixL();
}

/// (μ, log-Cholesky lower triangle) packed into one vector.
Vec pack(const Vec& mean, const Mat& L) {
  const Eigen::Index d = mean.size();
  Vec x(d + d * (d + 1) / 2);
  x.head(d) = mean;
  Eigen::Index k = d;
  for (Eigen::Index j = 0; j < d; ++j) {
    for (Eigen::Index i = j; i < d; ++i) x[k++] = i == j ? std::log(L(i, i)) : L(i, j);
  }
  return x;
}

void unpack(const Vec& x, Eigen::Index d, Vec& mean, Mat& L) {
  mean = x.head(d);
  L = Mat::Zero(d, d);
  Eigen::Index k = d;
  for (Eigen::Index j = 0; j < d; ++j) {
    for (Eigen::Index i = j; i < d; ++i) L(i, j) = i == j ? std::exp(x[k++]) : x[k++];
  }
}

struct Evaluation {
  double nll = 0.0;
  Mat tangents;  // Log_μ(x_i)
  NormalizerEstimate normalizer;
};

Evaluation evaluate(const LatentMetric& metric, const Vec& mean, const Mat& precision, const Mat& points,
                    const LandConfig& cfg, std::uint64_t normalizer_seed) {
  Evaluation e;
  e.tangents = land_log_maps(metric, mean, points, cfg);
  Rng rng(normalizer_seed);
  e.normalizer = land_normalizer(mean, precision, metric, rng, cfg.mc_samples, cfg.exp_steps, cfg.threads);
  const double quad = (e.tangents * precision).cwiseProduct(e.tangents).sum();
  e.nll = 0.5 * quad - static_cast<double>(points.rows()) * std::log(e.normalizer.norm_const);
  return e;
}

double safe_nll(const LatentMetric& metric, const Vec& mean, const Mat& precision, const Mat& points,
                const LandConfig& cfg, std::uint64_t seed, Evaluation& out) {
  try {
    out = evaluate(metric, mean, precision, points, cfg, seed);
    return std::isfinite(out.nll) ? out.nll : std::numeric_limits<double>::infinity();
  } catch (const Error&) {
    return std::numeric_limits<double>::infinity();
  }
}

}  // namespace

EnergyConfig land_log_config() {
  EnergyConfig cfg;
  cfg.N = 16;
  cfg.segments = 1;
  cfg.optimizer.max_iters = 100;
  cfg.optimizer.grad_tol = 1e-7;
  cfg.shooting_iters = 0;
  return cfg;
}

NormalizerEstimate land_normalizer(const Vec& mean, const Mat& precision, const LatentMetric& metric, Rng& rng,
                                   Eigen::Index n, int exp_steps, unsigned threads) {
  const Eigen::Index d = mean.size();
  if (precision.rows() != d || precision.cols() != d) throw Error(ErrorCode::ShapeError, "precision must be d x d");
  if (n < 2) throw Error(ErrorCode::DegenerateEstimate, "normalizer needs at least two samples");
  const Mat L = cholesky_factor(precision);

  const Eigen::Index pairs = (n + 1) / 2;
  Mat xi(pairs, d);
  for (Eigen::Index p = 0; p < pairs; ++p) {
    for (Eigen::Index k = 0; k < d; ++k) xi(p, k) = rng.normal();
  }
  if (pairs >= d) {
    Eigen::LLT<Mat> second((xi.transpose() * xi) / static_cast<double>(pairs));
    if (second.info() == Eigen::Success) {
      xi = second.matrixL().solve(xi.transpose()).transpose();
    }
  }

  NormalizerEstimate est;
  est.tangents.resize(2 * pairs, d);
  // v = L⁻ᵀ ξ has covariance Γ⁻¹.
  const Mat upper = L.transpose();
  for (Eigen::Index p = 0; p < pairs; ++p) {
    const Vec v = upper.triangularView<Eigen::Upper>().solve(Vec(xi.row(p).transpose()));
    est.tangents.row(2 * p) = v.transpose();
    est.tangents.row(2 * p + 1) = -v.transpose();
  }

  const double base = half_log_det(metric(mean));
  est.weights.resize(2 * pairs);
  parallel_for(static_cast<std::size_t>(2 * pairs), threads, [&](std::size_t j) {
    const auto row = static_cast<Eigen::Index>(j);
    const Vec v = est.tangents.row(row).transpose();
    const Vec landing = exp_map(metric, mean, v, exp_steps).endpoint;
    est.weights[row] = std::exp(half_log_det(metric(landing)) - base);
  });

  const double sum = est.weights.sum();
  est.ess = sum * sum / est.weights.squaredNorm();
  if (!std::isfinite(est.ess) || est.ess < 10.0) {
    throw Error(ErrorCode::DegenerateEstimate, "normalizer effective sample size below 10");
  }

  Vec pair_means(pairs);
  for (Eigen::Index p = 0; p < pairs; ++p) pair_means[p] = 0.5 * (est.weights[2 * p] + est.weights[2 * p + 1]);
  const double rho = pair_means.mean();
  const double var = pairs > 1 ? (pair_means.array() - rho).square().sum() / static_cast<double>(pairs - 1) : 0.0;
  const double rho_se = std::sqrt(var / static_cast<double>(pairs));

  const double log_gauss = L.diagonal().array().log().sum() - 0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi);
  est.norm_const = std::exp(log_gauss) / rho;
  est.std_error = est.norm_const * rho_se / rho;
  return est;
}

Mat land_log_maps(const LatentMetric& metric, const Vec& mean, const Mat& points, const LandConfig& cfg) {
  Mat out(points.rows(), mean.size());
  parallel_for(static_cast<std::size_t>(points.rows()), cfg.threads, [&](std::size_t i) {
    const auto row = static_cast<Eigen::Index>(i);
    Rng rng = Rng(cfg.seed).split(i);
    out.row(row) = log_map(metric, mean, points.row(row).transpose(), cfg.log_map, rng).v.transpose();
  });
  return out;
}

double land_logpdf(const LandModel& model, const Vec& z) {
  Rng rng(model.config.seed);
  const Vec v = log_map(model.metric, model.mean, z, model.config.log_map, rng).v;
  return std::log(model.norm_const) - 0.5 * v.dot(model.precision * v);
}

double land_nll(const LatentMetric& metric, const Vec& mean, const Mat& precision, const Mat& points,
                const LandConfig& cfg, std::uint64_t normalizer_seed) {
  return evaluate(metric, mean, precision, points, cfg, normalizer_seed).nll;
}

LandFitResult land_fit(const Mat& points, const LatentMetric& metric, const std::optional<LandInit>& init,
                       const LandConfig& cfg, Rng& rng) {
  const Eigen::Index d = metric.dim();
  const Eigen::Index n = points.rows();
  if (points.cols() != d) throw Error(ErrorCode::ShapeError, "LAND points must match the latent dimension");
  if (n < d + 1) throw Error(ErrorCode::ShapeError, "LAND fit needs at least d + 1 points");
  if (!points.allFinite()) throw Error(ErrorCode::NonFinite, "LAND points must be finite");
  const std::uint64_t seed = rng.next_u64();
  const double count = static_cast<double>(n);

  Vec mean;
  Mat precision;
  if (init) {
    mean = init->mean;
    precision = symmetrize(init->precision);
  } else {
    mean = points.colwise().mean().transpose();
    const Mat v = land_log_maps(metric, mean, points, cfg);
    Mat cov = v.transpose() * v / count;
    cov += 1e-6 * std::max(1.0, cov.trace() / static_cast<double>(d)) * Mat::Identity(d, d);
    precision = symmetrize(cov.inverse());
  }
  Mat L = cholesky_factor(precision);

  Evaluation current = evaluate(metric, mean, precision, points, cfg, seed);
  LandFitResult result{LandModel{mean, precision, current.normalizer.norm_const, current.normalizer.std_error, metric, cfg},
                       current.nll, current.nll, 0, false, {current.nll}};

  Vec x = pack(mean, L);
  double alpha = 1.0;
  int it = 0;
  for (; it < cfg.max_iters; ++it) {
    // Γ gradient from the weighted second moment of the normalizer samples.
    const auto& nz = current.normalizer;
    const Mat weighted = (nz.tangents.array().colwise() * nz.weights.array()).matrix().transpose() * nz.tangents / nz.weights.sum();
    const Mat G = 0.5 * current.tangents.transpose() * current.tangents - 0.5 * count * weighted;
    const Mat dL = 2.0 * G * L;

    Vec grad(x.size());
    for (Eigen::Index k = 0; k < d; ++k) {
      Vec up = mean, down = mean;
      up[k] += cfg.fd_step;
      down[k] -= cfg.fd_step;
      grad[k] = (land_nll(metric, up, precision, points, cfg, seed) - land_nll(metric, down, precision, points, cfg, seed)) /
                (2.0 * cfg.fd_step);
    }
    Eigen::Index k = d;
    for (Eigen::Index j = 0; j < d; ++j) {
      for (Eigen::Index i = j; i < d; ++i) grad[k++] = i == j ? dL(i, i) * L(i, i) : dL(i, j);
    }
    const Vec direction = -grad / count;
    const double slope = grad.dot(direction);
    if (!grad.allFinite() || direction.lpNorm<Eigen::Infinity>() <= 1e-12) {
      result.converged = true;
      break;
    }

    bool accepted = false;
    double next_nll = current.nll;
    for (int attempt = 0; attempt < 40; ++attempt, alpha *= 0.5) {
      const Vec xn = x + alpha * direction;
      Vec mn;
      Mat Ln;
      unpack(xn, d, mn, Ln);
      const Mat pn = Ln * Ln.transpose();
      Evaluation trial;
      const double f = safe_nll(metric, mn, pn, points, cfg, seed, trial);
      if (f <= current.nll + 1e-4 * alpha * slope) {
        next_nll = f;
        x = xn;
        mean = mn;
        L = Ln;
        precision = pn;
        current = std::move(trial);
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      result.converged = true;
      break;
    }
    const double decrease = result.nll_history.back() - next_nll;
    result.nll_history.push_back(next_nll);
    alpha = std::min(2.0 * alpha, 4.0);
    if (decrease <= cfg.tol * std::max(1.0, std::abs(next_nll))) {
      result.converged = true;
      ++it;
      break;
    }
  }
  result.iterations = it;
  result.nll = current.nll;
  result.model.mean = mean;
  result.model.precision = precision;
  result.model.norm_const = current.normalizer.norm_const;
  result.model.norm_std_error = current.normalizer.std_error;
  return result;
}

}  // namespace statgeo
