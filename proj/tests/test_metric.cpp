#include "statgeo/geodesic.hpp"
#include "statgeo/metric.hpp"
#include "statgeo/toy.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace statgeo;
using namespace statgeo::testing;

namespace {

std::shared_ptr<const DecoderMap> shared(DecoderMap dec) { return std::make_shared<const DecoderMap>(std::move(dec)); }

/// dec ∘ g⁻¹ for g(z) = A z: every head's first layer weight becomes W A⁻¹.
DecoderMap relabeled(const DecoderMap& dec, const Mat& A) {
  const Mat Ainv = A.inverse();
  std::vector<Head> heads = dec.heads();
  for (Head& h : heads) h.layers.front().weight = h.layers.front().weight * Ainv;
  return DecoderMap(dec.latent_dim(), dec.feature_count(), dec.family(), heads);
}

double mean_probe_error(FamilyKind family, Rng& rng) {
  const DecoderMap dec = identity_decoder(family);
  double total = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Vec z = random_interior(family, rng).values();
    total += rel_frobenius(kl_probe(dec, z, 1e-3), pullback(dec, z));
  }
  return total / 100.0;
}

}  // namespace

TEST(Pullback, IdentityNormal) {
  const Mat M = pullback(identity_normal_decoder(), Eigen::Vector2d(0.0, 1.0));
  EXPECT_TRUE(M.isApprox(Eigen::Vector2d(1.0, 0.5).asDiagonal().toDenseMatrix(), 1e-15));
}

TEST(Pullback, SigmoidBernoulli) {
  const DecoderMap dec(1, 1, FamilyKind::Bernoulli, {Head{"theta", {linear(Mat::Ones(1, 1), Vec::Zero(1), {ActivationKind::Sigmoid})}}});
  EXPECT_NEAR(pullback(dec, Vec::Zero(1))(0, 0), 0.25, 1e-15);
}

TEST(Pullback, PositiveDefiniteOnToyDecoders) {
  Rng rng(1);
  for (auto f : all_families()) {
    const DecoderMap dec = make_toy_decoder(f, rng);
    for (int i = 0; i < 20; ++i) {
      const Mat M = pullback(dec, 2.0 * random_unit(rng, 2) * rng.uniform());
      EXPECT_LT((M - M.transpose()).norm(), 1e-12);
      EXPECT_GT(Eigen::SelfAdjointEigenSolver<Mat>(M).eigenvalues().minCoeff(), 0.0) << family_name(f);
    }
  }
}

TEST(Pullback, ShapeError) {
  EXPECT_THROW(pullback(identity_normal_decoder(), Vec::Zero(5)), Error);
}

TEST(KlProbe, IdentityNormalExample) {
  const Mat M = kl_probe(identity_normal_decoder(), Eigen::Vector2d(0.0, 1.0), 1e-3);
  EXPECT_LT((M - Eigen::Vector2d(1.0, 0.5).asDiagonal().toDenseMatrix()).cwiseAbs().maxCoeff(), 1e-3);
  EXPECT_EQ(M(0, 1), M(1, 0));
}

TEST(KlProbe, NormalAndBetaParameterSpaces) {
  Rng rng(2);
  EXPECT_LT(mean_probe_error(FamilyKind::Normal, rng), 1e-2);
  EXPECT_LT(mean_probe_error(FamilyKind::Beta, rng), 1e-2);
}

TEST(KlProbe, InvalidEpsilon) {
  for (double eps : {0.0, -1e-3}) {
    try {
      kl_probe(identity_normal_decoder(), Eigen::Vector2d(0.0, 1.0), eps);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::InvalidEpsilon);
    }
  }
}

TEST(KlProbe, ErrorShrinksWithEpsilon) {
  Rng rng(3);
  for (auto f : {FamilyKind::Normal, FamilyKind::Gamma, FamilyKind::Beta, FamilyKind::Bernoulli}) {
    const DecoderMap dec = make_toy_decoder(f, rng);
    const Vec z(Eigen::Vector2d(0.3, -0.4));
    const Mat M = pullback(dec, z);
    const double e1 = rel_frobenius(kl_probe_raw(dec, z, 1e-1), M);
    const double e2 = rel_frobenius(kl_probe_raw(dec, z, 1e-2), M);
    const double e3 = rel_frobenius(kl_probe_raw(dec, z, 1e-3), M);
    EXPECT_LT(e2, e1) << family_name(f);
    EXPECT_LT(e3, e2) << family_name(f);
  }
}

TEST(KlProbe, ClampingReportsAndRestoresDefiniteness) {
  Mat m(2, 2);
  m << 1.0, 2.0, 2.0, 1.0;
  bool clamped = false;
  const Mat c = clamp_spd(m, &clamped);
  EXPECT_TRUE(clamped);
  EXPECT_GT(Eigen::SelfAdjointEigenSolver<Mat>(c).eigenvalues().minCoeff(), 0.0);
  clamped = true;
  EXPECT_TRUE(clamp_spd(Mat::Identity(2, 2), &clamped).isApprox(Mat::Identity(2, 2)));
  EXPECT_FALSE(clamped);
}

TEST(Simplex, ChartExamples) {
  const ParamPoint p = simplex_chart(Vec::Constant(1, 0.3));
  EXPECT_NEAR(p[0], 0.3, 1e-15);
  EXPECT_NEAR(p[1], 0.7, 1e-15);
  Mat expected(2, 2);
  expected << 6, 3, 3, 6;
  EXPECT_TRUE(simplex_pullback(Vec::Constant(2, 1.0 / 3.0)).isApprox(expected, 1e-12));
  Mat J(3, 2);
  J << 1, 0, 0, 1, -1, -1;
  EXPECT_TRUE((simplex_chart_jacobian(3).array() == J.array()).all());
  for (const Vec& bad : {Vec(Eigen::Vector2d(0.6, 0.4)), Vec(Eigen::Vector2d(0.7, 0.5)), Vec(Eigen::Vector2d(-0.1, 0.5))}) {
    try {
      simplex_chart(bad);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::OffSimplex);
    }
  }
}

TEST(Grid, CornersOfUnitSquare) {
  const LatentMetric id = LatentMetric::constant(Mat::Identity(2, 2));
  const MetricGrid g = grid_build(id, Vec::Zero(2), Vec::Ones(2), {2, 2}, 0.5);
  ASSERT_EQ(g.size(), 4);
  Mat corners(4, 2);
  corners << 0, 0, 0, 1, 1, 0, 1, 1;
  EXPECT_TRUE((g.points.array() == corners.array()).all());
  for (const Mat& m : g.tensors) EXPECT_TRUE((m.array() == Mat::Identity(2, 2).array()).all());
}

TEST(Grid, KlProbeTensorsSymmetric) {
  Rng rng(4);
  const auto dec = shared(make_toy_decoder(FamilyKind::Normal, rng));
  const MetricGrid g = grid_build(LatentMetric::probe(dec), Vec::Constant(2, -1.5), Vec::Constant(2, 1.5), {20, 20}, 0.15);
  ASSERT_EQ(g.size(), 400);
  for (const Mat& m : g.tensors) EXPECT_LT((m - m.transpose()).norm(), 1e-10 * m.norm());
}

TEST(Grid, EvalConcentratesAndAverages) {
  const LatentMetric src = LatentMetric::analytic(2, [](const Vec& z) {
    return Eigen::Vector2d(1.0 + z[0], 2.0 + z[1] * z[1]).asDiagonal().toDenseMatrix();
  });
  MetricGrid g = grid_build(src, Vec::Zero(2), Vec::Ones(2), {5, 5}, 1e-3 * 0.25);
  for (Eigen::Index s = 0; s < g.size(); ++s) {
    EXPECT_LT((grid_eval(g, g.points.row(s).transpose()) - g.tensors[s]).norm(), 1e-9);
  }
  g.bandwidth = 0.1;
  const LatentMetric line = LatentMetric::analytic(1, [](const Vec& z) { return Mat::Constant(1, 1, 1.0 + z[0] * z[0]); });
  const MetricGrid two = grid_build(line, Vec::Zero(1), Vec::Ones(1), {2}, 0.3);
  EXPECT_NEAR(grid_eval(two, Vec::Constant(1, 0.5))(0, 0), 1.5, 1e-14);
  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    const Vec z(Eigen::Vector2d(uniform(rng, -2, 3), uniform(rng, -2, 3)));
    EXPECT_NEAR(grid_weights(g, z).sum(), 1.0, 1e-12);
    // Convex combination of commuting diagonal tensors stays inside their range.
    const Vec d = grid_eval(g, z).diagonal();
    EXPECT_GE(d[0], 1.0 - 1e-12);
    EXPECT_LE(d[0], 2.0 + 1e-12);
    EXPECT_GE(d[1], 2.0 - 1e-12);
    EXPECT_LE(d[1], 3.0 + 1e-12);
  }
}

TEST(Grid, FarQueryFallsBackToNearestTensor) {
  const LatentMetric src = LatentMetric::analytic(1, [](const Vec& z) { return Mat::Constant(1, 1, 1.0 + z[0]); });
  const MetricGrid g = grid_build(src, Vec::Zero(1), Vec::Ones(1), {3}, 1e-3);
  EXPECT_NEAR(grid_eval(g, Vec::Constant(1, 50.0))(0, 0), 2.0, 1e-15);
  EXPECT_NEAR(grid_eval(g, Vec::Constant(1, -50.0))(0, 0), 1.0, 1e-15);
}

TEST(LatentMetricVariants, AgreeWithFreeFunctions) {
  Rng rng(6);
  const auto dec = shared(make_toy_decoder(FamilyKind::Gamma, rng));
  const Vec z(Eigen::Vector2d(0.2, 0.1));
  EXPECT_TRUE(LatentMetric::exact(dec)(z).isApprox(pullback(*dec, z), 1e-15));
  EXPECT_TRUE(LatentMetric::probe(dec, 1e-2)(z).isApprox(kl_probe(*dec, z, 1e-2), 1e-15));
  EXPECT_EQ(LatentMetric::exact(dec).dim(), 2);
}

TEST(Equivalence, PullbackMatchesLatentScoreOuterProduct) {
  Rng rng(7);
  const Eigen::Index n = 1000000;
  int checked = 0;
  for (auto f : all_families()) {
    if (checked >= 10) break;
    for (int rep = 0; rep < (f == FamilyKind::Normal || f == FamilyKind::Gamma ? 2 : 1); ++rep, ++checked) {
      const DecoderMap dec = make_toy_decoder(f, rng);
      const Vec z = random_unit(rng, 2) * rng.uniform();
      const auto pts = forward(dec, z);
      const Mat J = jacobian(dec, z);
      const Eigen::Index p = dec.params_per_feature();
      std::vector<Mat> xs;
      for (const auto& pt : pts) xs.push_back(sample(pt, rng, n));
      Mat acc = Mat::Zero(2, 2);
      for (Eigen::Index i = 0; i < n; ++i) {
        Vec g = Vec::Zero(2);
        for (std::size_t k = 0; k < pts.size(); ++k) {
          const Eigen::Index off = static_cast<Eigen::Index>(k) * p;
          g += J.middleRows(off, p).transpose() * score(pts[k], xs[k].row(i).transpose());
        }
        acc += g * g.transpose();
      }
      EXPECT_LT(rel_frobenius(acc / static_cast<double>(n), pullback(dec, z)), 0.05) << family_name(f);
    }
  }
  EXPECT_EQ(checked, 10);
}

TEST(Reparametrization, EnergyIsInvariantUnderLinearRelabeling) {
  Rng rng(8);
  Mat A(2, 2);
  A << 2.0, 0.5, -0.3, 1.2;
  for (auto f : {FamilyKind::Normal, FamilyKind::Beta, FamilyKind::VonMisesFisherS2}) {
    const DecoderMap dec = make_toy_decoder(f, rng);
    const DecoderMap moved = relabeled(dec, A);
    Mat coeffs(2, 8);
    for (Eigen::Index i = 0; i < coeffs.size(); ++i) coeffs(i) = 0.1 * rng.normal();
    const SplineCurve c(Eigen::Vector2d(-0.5, 0.2), Eigen::Vector2d(0.6, 0.4), 4, coeffs);
    const SplineCurve gc(A * c.start(), A * c.end(), 4, A * coeffs);
    const double e = metric_energy(c, LatentMetric::exact(shared(dec)), 64);
    const double eg = metric_energy(gc, LatentMetric::exact(shared(moved)), 64);
    EXPECT_NEAR(eg, e, 1e-8 * std::max(1.0, e)) << family_name(f);
    EXPECT_NEAR(kl_energy(gc, moved, 64), kl_energy(c, dec, 64), 1e-8 * std::max(1.0, e));
  }
}

TEST(Grid, DerivativesMatchFiniteDifferences) {
  const LatentMetric src = LatentMetric::analytic(2, [](const Vec& z) {
    Mat m(2, 2);
    m << 2.0 + std::sin(z[0]), 0.3 * z[1], 0.3 * z[1], 1.5 + z[0] * z[0];
    return m;
  });
  const MetricGrid g = grid_build(src, Vec::Constant(2, -1.0), Vec::Constant(2, 1.0), {6, 6}, 0.4);
  const LatentMetric m = LatentMetric::grid(g);
  Rng rng(9);
  for (int i = 0; i < 20; ++i) {
    const Vec z(Eigen::Vector2d(uniform(rng, -1.5, 1.5), uniform(rng, -1.5, 1.5)));
    Mat M;
    std::vector<Mat> dM;
    m.jet(z, 1e-5, M, dM);
    EXPECT_LT((M - grid_eval(g, z)).norm(), 1e-14);
    for (Eigen::Index k = 0; k < 2; ++k) {
      Vec zp = z, zm = z;
      zp[k] += 1e-6;
      zm[k] -= 1e-6;
      const Mat fd = (grid_eval(g, zp) - grid_eval(g, zm)) / 2e-6;
      EXPECT_LT((dM[static_cast<std::size_t>(k)] - fd).norm(), 1e-7 * (1.0 + fd.norm()));
    }
  }
}
