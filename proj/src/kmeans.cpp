#include "statgeo/decoder.hpp"

#include <algorithm>
#include <limits>
#include <set>

namespace statgeo {

namespace {

Eigen::Index distinct_rows(const Mat& points) {
  std::set<std::vector<double>> seen;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(points.cols()));
    for (Eigen::Index j = 0; j < points.cols(); ++j) row[static_cast<std::size_t>(j)] = points(i, j);
    seen.insert(std::move(row));
  }
  return static_cast<Eigen::Index>(seen.size());
}

// Squared distance from every point to its nearest center; labels written alongside.
Vec assign(const Mat& points, const Mat& centers, std::vector<Eigen::Index>& labels) {
  Vec best(points.rows());
  labels.assign(static_cast<std::size_t>(points.rows()), 0);
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    Eigen::Index arg = 0;
    best[i] = (centers.rowwise() - points.row(i)).rowwise().squaredNorm().minCoeff(&arg);
    labels[static_cast<std::size_t>(i)] = arg;
  }
  return best;
}

}  // namespace

KMeansResult kmeans_fit(const Mat& points, Eigen::Index k, Rng& rng, int iters) {
  const Eigen::Index n = points.rows();
  if (k < 1 || n == 0 || k > distinct_rows(points)) {
    throw Error(ErrorCode::InvalidK, "k = " + std::to_string(k) + " exceeds the number of distinct points");
  }

  // k-means++ seeding.
  Mat centers(k, points.cols());
  centers.row(0) = points.row(static_cast<Eigen::Index>(rng.next_u64() % static_cast<std::uint64_t>(n)));
  Vec d2 = (points.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (Eigen::Index c = 1; c < k; ++c) {
    const double total = d2.sum();
    Eigen::Index pick = 0;
    if (total > 0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      for (pick = 0; pick + 1 < n; ++pick) {
        acc += d2[pick];
        if (acc >= target && d2[pick] > 0) break;
      }
      // Never pick an existing center.
      while (d2[pick] == 0) pick = (pick + 1) % n;
    }
    centers.row(c) = points.row(pick);
    d2 = d2.cwiseMin((points.rowwise() - centers.row(c)).rowwise().squaredNorm());
  }

  KMeansResult result;
  Vec dist = assign(points, centers, result.labels);
  result.inertia_history.push_back(dist.sum());

  for (int it = 0; it < iters; ++it) {
    Mat sums = Mat::Zero(k, points.cols());
    Vec counts = Vec::Zero(k);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto l = result.labels[static_cast<std::size_t>(i)];
      sums.row(l) += points.row(i);
      counts[l] += 1.0;
    }
    for (Eigen::Index c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        centers.row(c) = sums.row(c) / counts[c];
      } else {
        // Empty cluster: reseed at the point farthest from its center.
        Eigen::Index far = 0;
        dist.maxCoeff(&far);
        centers.row(c) = points.row(far);
        dist[far] = 0.0;
      }
    }
    const auto previous = result.labels;
    dist = assign(points, centers, result.labels);
    result.inertia_history.push_back(dist.sum());
    if (result.labels == previous) break;
  }
  result.centers = std::move(centers);
  return result;
}

}  // namespace statgeo
