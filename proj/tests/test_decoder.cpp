#include "statgeo/decoder.hpp"
#include "statgeo/special_functions.hpp"
#include "statgeo/toy.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace statgeo;
using namespace statgeo::testing;

namespace {

double max_rel_error(const Mat& J, const Mat& ref) {
  return ((J - ref).array().abs() / (1.0 + ref.array().abs())).maxCoeff();
}

UncertaintyReg single_center_reg(const Vec& center, double beta, std::vector<ParamPoint> extrapolation) {
  UncertaintyReg reg;
  reg.centers = center.transpose();
  reg.beta = beta;
  reg.c = 7.0;
  reg.extrapolation = std::move(extrapolation);
  return reg;
}

}  // namespace

TEST(Decoder, IdentityAndSoftplusHeads) {
  const Mat I = Mat::Identity(1, 1);
  const DecoderMap dec(1, 1, FamilyKind::Normal,
                       {Head{"mean", {linear(I, Vec::Zero(1))}},
                        Head{"variance", {linear(I, Vec::Zero(1), {ActivationKind::Softplus})}}});
  for (double z : {-2.0, 0.0, 0.7}) {
    const auto out = forward(dec, Vec::Constant(1, z));
    EXPECT_DOUBLE_EQ(out[0][0], z);
    EXPECT_DOUBLE_EQ(out[0][1], softplus(z));
  }
}

TEST(Decoder, ZeroWeightSigmoidHead) {
  const DecoderMap dec(2, 15, FamilyKind::Bernoulli,
                       {Head{"theta", {linear(Mat::Zero(15, 2), Vec::Zero(15), {ActivationKind::Sigmoid})}}});
  for (const auto& p : forward(dec, Eigen::Vector2d(0.3, -4.0))) EXPECT_EQ(p[0], 0.5);
}

TEST(Decoder, ToyBetaHeadsArePositive) {
  Rng rng(1);
  const DecoderMap dec = make_toy_decoder(FamilyKind::Beta, rng);
  for (int i = 0; i < 200; ++i) {
    const Vec z = 5.0 * random_unit(rng, 2) * rng.uniform();
    const Vec flat = forward_flat(dec, z);
    EXPECT_GT(flat.minCoeff(), 0.0);
  }
}

TEST(Decoder, ShapeErrors) {
  const DecoderMap dec = identity_normal_decoder();
  try {
    forward(dec, Vec::Zero(3));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ShapeError);
  }
  EXPECT_THROW(DecoderMap(2, 1, FamilyKind::Normal, {Head{"mean", {pick(2, 0)}}}), Error);
  EXPECT_THROW(DecoderMap(2, 1, FamilyKind::Normal, {Head{"mean", {pick(3, 0)}}, Head{"variance", {pick(2, 1)}}}), Error);
}

TEST(Decoder, LinearJacobianIsWeight) {
  Mat W(2, 2);
  W << 1.0, 2.0, -0.5, 0.25;
  const DecoderMap dec(2, 1, FamilyKind::Normal,
                       {Head{"mean", {linear(W.topRows(1), Vec::Zero(1))}}, Head{"variance", {linear(W.bottomRows(1), Vec::Ones(1))}}});
  for (const Vec& z : {Vec(Eigen::Vector2d(0, 0)), Vec(Eigen::Vector2d(1, -3))}) EXPECT_TRUE(jacobian(dec, z).isApprox(W, 1e-15));
}

TEST(Decoder, TanhJacobianAtOrigin) {
  const Mat I = Mat::Identity(2, 2);
  const DecoderMap dec(2, 1, FamilyKind::Normal,
                       {Head{"mean", {linear(I.topRows(1), Vec::Zero(1), {ActivationKind::Tanh})}},
                        Head{"variance", {linear(I.bottomRows(1), Vec::Zero(1), {ActivationKind::Tanh})}}});
  EXPECT_TRUE(jacobian(dec, Vec::Zero(2)).isApprox(I, 1e-15));
}

TEST(Decoder, RandomJacobianMatchesFiniteDifferences) {
  Rng rng(2);
  // 2 -> 6 with a hidden layer.
  const DecoderMap dec(2, 3, FamilyKind::Normal,
                       {Head{"mean", {random_linear(2, 4, {ActivationKind::Tanh}, rng), random_linear(4, 3, {}, rng)}},
                        Head{"variance", {random_linear(2, 3, {ActivationKind::Softplus}, rng)}}});
  for (int i = 0; i < 20; ++i) {
    const Vec z = 2.0 * random_unit(rng, 2);
    EXPECT_LT(max_rel_error(jacobian(dec, z), fd_jacobian(dec, z, 1e-5)), 1e-6);
  }
}

TEST(Decoder, ToyJacobiansMatchFiniteDifferences) {
  Rng rng(3);
  const Mat codes = toy_circle_codes(200, 0.1, rng);
  for (auto f : all_families()) {
    for (int r = 0; r < 20; ++r) {
      const bool regularized = r % 2 == 1;
      const DecoderMap dec = make_toy_decoder(f, rng, regularized ? &codes : nullptr);
      const Vec z = 1.5 * random_unit(rng, 2) * rng.uniform();
      EXPECT_LT(max_rel_error(jacobian(dec, z), fd_jacobian(dec, z, 1e-6)), 1e-5) << family_name(f) << " reg=" << regularized;
    }
  }
}

TEST(Decoder, ForwardWithJacobianConsistent) {
  Rng rng(4);
  const DecoderMap dec = make_toy_decoder(FamilyKind::VonMisesFisherS2, rng);
  const Vec z(Eigen::Vector2d(0.3, -0.2));
  Vec flat;
  Mat J;
  forward_with_jacobian(dec, z, flat, J);
  EXPECT_TRUE(flat.isApprox(forward_flat(dec, z), 1e-15));
  EXPECT_TRUE(J.isApprox(jacobian(dec, z), 1e-15));
}

TEST(Decoder, ActivationsPreserveConstraints) {
  Rng rng(5);
  const Mat I3 = Mat::Identity(3, 3);
  const DecoderMap cat(3, 1, FamilyKind::Categorical, {Head{"probs", {linear(I3, Vec::Zero(3), {ActivationKind::Softmax})}}});
  const DecoderMap vm(3, 1, FamilyKind::VonMisesFisherS2,
                      {Head{"mu", {linear(I3, Vec::Zero(3), {ActivationKind::UnitNormalize})}},
                       Head{"kappa", {linear(Mat::Ones(1, 3), Vec::Zero(1), {ActivationKind::Softplus})}}});
  for (int i = 0; i < 1000; ++i) {
    Vec z(3);
    for (int k = 0; k < 3; ++k) z[k] = 10.0 * rng.normal();
    const Vec pc = network_output(cat, z);
    EXPECT_NEAR(pc.sum(), 1.0, 1e-12);
    EXPECT_GT(pc.minCoeff(), 0.0);
    const Vec pv = network_output(vm, z);
    EXPECT_NEAR(pv.head(3).norm(), 1.0, 1e-12);
    EXPECT_GT(pv[3], 0.0);
  }
}

TEST(Decoder, ActivationNamesRoundTrip) {
  for (const Activation& a : {Activation{ActivationKind::Identity}, Activation{ActivationKind::Tanh},
                              Activation{ActivationKind::Sigmoid}, Activation{ActivationKind::Softplus},
                              Activation{ActivationKind::Softmax}, Activation{ActivationKind::UnitNormalize},
                              Activation::scaled(2.5)}) {
    const Activation b = parse_activation(activation_name(a));
    EXPECT_EQ(b.kind, a.kind);
    EXPECT_EQ(b.scale, a.scale);
  }
  EXPECT_THROW(parse_activation("relu6"), Error);
}

TEST(KMeans, SingleClusterIsMean) {
  Rng rng(6);
  Mat pts(50, 2);
  for (Eigen::Index i = 0; i < pts.rows(); ++i) pts.row(i) = random_unit(rng, 2).transpose() * rng.uniform();
  const KMeansResult r = kmeans_fit(pts, 1, rng);
  EXPECT_TRUE(r.centers.row(0).isApprox(pts.colwise().mean(), 1e-12));
}

TEST(KMeans, TwoSeparatedClusters) {
  Rng rng(7);
  Mat pts(40, 2);
  for (Eigen::Index i = 0; i < 40; ++i) {
    const double base = i < 20 ? 0.0 : 10.0;
    pts(i, 0) = base + 0.01 * (2 * rng.uniform() - 1);
    pts(i, 1) = base + 0.01 * (2 * rng.uniform() - 1);
  }
  const KMeansResult r = kmeans_fit(pts, 2, rng);
  const Eigen::RowVector2d a(0, 0), b(10, 10);
  const bool ordered = (r.centers.row(0) - a).norm() < (r.centers.row(1) - a).norm();
  EXPECT_LT((r.centers.row(ordered ? 0 : 1) - a).norm(), 0.05);
  EXPECT_LT((r.centers.row(ordered ? 1 : 0) - b).norm(), 0.05);
}

TEST(KMeans, KEqualsPointCount) {
  Rng rng(8);
  Mat pts(6, 2);
  for (Eigen::Index i = 0; i < 6; ++i) pts.row(i) = Eigen::RowVector2d(i, i * i);
  const KMeansResult r = kmeans_fit(pts, 6, rng);
  EXPECT_NEAR(r.inertia_history.back(), 0.0, 1e-24);
  for (Eigen::Index i = 0; i < 6; ++i) EXPECT_LT((r.centers.rowwise() - pts.row(i)).rowwise().norm().minCoeff(), 1e-12);
}

TEST(KMeans, InertiaNonIncreasingAndDeterministic) {
  Rng rng(9);
  const Mat codes = toy_circle_codes(300, 0.1, rng);
  Rng a(1), b(1);
  const KMeansResult r = kmeans_fit(codes, 24, a);
  const KMeansResult s = kmeans_fit(codes, 24, b);
  EXPECT_TRUE((r.centers.array() == s.centers.array()).all());
  for (std::size_t i = 1; i < r.inertia_history.size(); ++i) EXPECT_LE(r.inertia_history[i], r.inertia_history[i - 1] + 1e-12);
}

TEST(KMeans, InvalidK) {
  Rng rng(10);
  Mat pts = Mat::Zero(5, 2);
  pts(4, 0) = 1.0;
  try {
    kmeans_fit(pts, 3, rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidK);
  }
  EXPECT_THROW(kmeans_fit(pts, 0, rng), Error);
}

TEST(Regularization, SupportDistance) {
  UncertaintyReg reg;
  reg.centers = Mat::Zero(1, 2);
  EXPECT_EQ(support_distance(reg, Eigen::Vector2d(3, 4)), 25.0);
  EXPECT_EQ(support_distance(reg, Eigen::Vector2d(0, 0)), 0.0);
  Rng rng(11);
  reg.centers.resize(50, 2);
  for (Eigen::Index i = 0; i < 50; ++i) reg.centers.row(i) = 3.0 * random_unit(rng, 2).transpose() * rng.uniform();
  const Vec z(Eigen::Vector2d(0.4, -1.1));
  const double d = support_distance(reg, z);
  for (Eigen::Index i = 0; i < 50; ++i) EXPECT_LE(d, (reg.centers.row(i).transpose() - z).squaredNorm());
  EXPECT_EQ(support_distance(reg, reg.centers.row(7).transpose()), 0.0);
}

TEST(Regularization, TranslatedSigmoid) {
  UncertaintyReg reg;
  reg.centers = Mat::Zero(1, 2);
  reg.beta = 0.0;
  reg.c = 7.0;
  EXPECT_NEAR(translated_sigmoid(reg, 0.0), 9.1105119440064e-4, 1e-15);
  EXPECT_NEAR(translated_sigmoid(reg, 7.0 * softplus(0.0)), 0.5, 1e-15);
  reg.beta = -2.5;
  double prev = 0.0;
  for (double d = 0.0; d < 1.0; d += 0.01) {
    const double s = translated_sigmoid(reg, d);
    EXPECT_GT(s, prev);
    prev = s;
  }
}

TEST(Regularization, ReweightLimits) {
  Rng rng(12);
  DecoderMap base = make_toy_decoder(FamilyKind::Bernoulli, rng);
  EXPECT_THROW(reweight(base, Vec::Zero(2)), Error);
  const Vec center(Eigen::Vector2d(0.5, 0.5));
  std::vector<ParamPoint> ex(15, max_uncertainty_params(FamilyKind::Bernoulli, 1));
  const DecoderMap reg = base.with_regularization(single_center_reg(center, -20.0, ex));
  // At a center the weight is sigmoid(-c) for every β.
  const double s0 = sigmoid(-7.0);
  const auto near = reweight(reg, center);
  const Vec h = network_output(base, center);
  for (std::size_t f = 0; f < near.size(); ++f)
    EXPECT_NEAR(near[f][0], (1.0 - s0) * h[static_cast<Eigen::Index>(f)] + s0 * 0.5, 1e-14);
  for (const auto& p : reweight(reg, Eigen::Vector2d(40.0, -30.0))) EXPECT_NEAR(p[0], 0.5, 1e-3);
}

TEST(Regularization, ReweightBlendsSelectedCoordinates) {
  Rng rng(13);
  const DecoderMap normal = make_toy_decoder(FamilyKind::Normal, rng);
  std::vector<ParamPoint> ex(3, max_uncertainty_params(FamilyKind::Normal, 2));
  const DecoderMap reg = normal.with_regularization(single_center_reg(Vec::Zero(2), -2.5, ex));
  const Vec far(Eigen::Vector2d(30.0, 0.0));
  const auto out = reweight(reg, far);
  const Vec h = network_output(normal, far);
  for (std::size_t f = 0; f < out.size(); ++f) {
    EXPECT_NEAR(out[f][0], h[static_cast<Eigen::Index>(2 * f)], 1e-9);  // mean kept
    EXPECT_NEAR(out[f][1], 1e3, 1e-3);                                  // variance blended
  }
  EXPECT_EQ(blended_coordinates(FamilyKind::Normal, 2), std::vector<Eigen::Index>{1});
  EXPECT_EQ(blended_coordinates(FamilyKind::VonMisesFisherS2, 4), std::vector<Eigen::Index>{3});
  EXPECT_EQ(blended_coordinates(FamilyKind::Beta, 2), (std::vector<Eigen::Index>{0, 1}));
}

TEST(Regularization, ReweightIsContinuous) {
  Rng rng(14);
  const Mat codes = toy_circle_codes(200, 0.1, rng);
  for (auto f : all_families()) {
    const DecoderMap dec = make_toy_decoder(f, rng, &codes);
    for (int i = 0; i < 10; ++i) {
      const Vec z = 2.0 * random_unit(rng, 2) * rng.uniform();
      const Vec dz = 1e-6 * random_unit(rng, 2);
      EXPECT_LT((forward_flat(dec, z) - forward_flat(dec, z + dz)).norm(), 1e-6 * (1.0 + jacobian(dec, z).norm()) * 2)
          << family_name(f);
    }
  }
}

TEST(ProductFisher, Examples) {
  const ParamPoint b(FamilyKind::Bernoulli, Vec::Constant(1, 0.5));
  EXPECT_TRUE(product_fisher({b, b}).isApprox(Eigen::Vector2d(4, 4).asDiagonal().toDenseMatrix(), 1e-15));
  const ParamPoint g(FamilyKind::Gamma, Eigen::Vector2d(2.0, 3.0));
  EXPECT_TRUE((product_fisher({g}).array() == fisher_rao(g).array()).all());
  const ParamPoint g2(FamilyKind::Gamma, Eigen::Vector2d(0.7, 1.3));
  const Mat P = product_fisher({g, g2, g});
  for (int i = 0; i < 6; ++i) {
    for (int j = 0; j < 6; ++j) {
      if (i / 2 != j / 2) EXPECT_EQ(P(i, j), 0.0);
    }
  }
  EXPECT_THROW(product_fisher({g, b}), Error);
}
