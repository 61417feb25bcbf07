#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "nmnet/error.hpp"
#include "nmnet/geom.hpp"
#include "nmnet/synth.hpp"

using namespace nmnet;

namespace {

Correspondence make(double kx, double ky, double a, double kpx, double kpy, double ap) {
  Correspondence c;
  c.kp = {kx, ky};
  c.frame = {a, 0, 0, a};
  c.kp_prime = {kpx, kpy};
  c.frame_prime = {ap, 0, 0, ap};
  return c;
}

void expect_mat(const Mat3& got, std::initializer_list<double> want, double tol = 1e-12) {
  auto it = want.begin();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(got(r, c), *it++, tol) << "entry " << r << "," << c;
}

}  // namespace

TEST(FrameMatrix, BlockPlacement) {
  expect_mat(frame_matrix(AffineFrame::identity(), {0, 0}), {1, 0, 0, 0, 1, 0, 0, 0, 1});
  expect_mat(frame_matrix({2, 0, 0, 2}, {1, 1}), {2, 0, 1, 0, 2, 1, 0, 0, 1});
  expect_mat(frame_matrix({1, 2, 3, 4}, {5, 6}), {1, 2, 5, 3, 4, 6, 0, 0, 1});
}

TEST(FrameMatrix, RejectsDegenerateFrame) {
  try {
    frame_matrix({1, 2, 2, 4}, {0, 0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateFrame);
  }
  EXPECT_THROW(frame_matrix({1e-5, 0, 0, 1e-5}, {0, 0}), Error);
}

TEST(LocalTransform, HandInverses) {
  expect_mat(local_transform(make(0.3, -0.2, 1.7, 0.3, -0.2, 1.7)), {1, 0, 0, 0, 1, 0, 0, 0, 1});
  expect_mat(local_transform(make(0, 0, 1, 1, 1, 2)), {2, 0, 1, 0, 2, 1, 0, 0, 1});
  expect_mat(local_transform(make(1, 0, 1, 0, 0, 1)), {1, 0, -1, 0, 1, 0, 0, 0, 1});
}

TEST(LocalTransform, IdenticalSidesGiveIdentityForRandomFrames) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int t = 0; t < 100; ++t) {
    Correspondence c;
    c.kp = {u(rng), u(rng)};
    c.frame = {u(rng) + 3, u(rng), u(rng), u(rng) + 3};
    c.kp_prime = c.kp;
    c.frame_prime = c.frame;
    EXPECT_TRUE(local_transform(c).isApprox(Mat3::Identity(), 1e-12) ||
                (local_transform(c) - Mat3::Identity()).norm() < 1e-12);
  }
}

TEST(Project, Examples) {
  Mat3 h = Mat3::Identity();
  EXPECT_EQ(project(h, {3, -2}), (Point2{3, -2}));
  h = Eigen::Vector3d(2, 4, 2).asDiagonal();
  const Point2 p = project(h, {1, 1});
  EXPECT_DOUBLE_EQ(p.x, 1);
  EXPECT_DOUBLE_EQ(p.y, 2);
  h << 1, 0, -1, 0, 1, 0, 0, 0, 1;
  EXPECT_EQ(project(h, {0, 0}), (Point2{-1, 0}));
}

TEST(Project, AtInfinity) {
  Mat3 h = Mat3::Identity();
  h(2, 2) = 0;
  try {
    project(h, {1, 1});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ProjectionAtInfinity);
  }
}

TEST(ReprojectionError, HandOracle) {
  const auto ci = make(0, 0, 1, 1, 1, 2);
  const auto cj_same_map = make(1, 0, 1, 3, 1, 2);
  const auto cj_other = make(1, 0, 1, 0, 0, 1);
  EXPECT_EQ(reprojection_error(ci, ci), 0.0);
  EXPECT_NEAR(reprojection_error(ci, cj_same_map), 0.0, 1e-12);
  EXPECT_NEAR(reprojection_error(cj_same_map, ci), 0.0, 1e-12);
  // e_j(c_i): |rho(H_j k_i) - rho(H_i k_i)| with H_j a shift by (-1, 0), H_i = 2x + 1.
  EXPECT_NEAR(reprojection_error(ci, cj_other), std::sqrt(5.0), 1e-12);
  EXPECT_NEAR(reprojection_error(cj_other, ci), std::sqrt(10.0), 1e-12);
}

TEST(ReprojectionError, GlobalAffineMapIsConsistent) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1, 1);
  Eigen::Matrix2d m;
  m << 1.3, 0.2, -0.4, 0.9;
  const Eigen::Vector2d b(0.3, -0.1);
  std::vector<Correspondence> set;
  for (int i = 0; i < 20; ++i) {
    Eigen::Vector2d k(u(rng), u(rng));
    Eigen::Vector2d kp = m * k + b;
    set.push_back({{k.x(), k.y()}, AffineFrame::identity(), {kp.x(), kp.y()}, AffineFrame::from_matrix(m)});
  }
  for (const auto& a : set)
    for (const auto& c : set) EXPECT_LT(reprojection_error(a, c), 1e-10);
}

namespace {

// Direct evaluation of the symmetric distance without Eigen products.
double naive_symmetric(const Mat3& e, const Correspondence& c) {
  const double x[3] = {c.kp.x, c.kp.y, 1};
  const double xp[3] = {c.kp_prime.x, c.kp_prime.y, 1};
  double l[3] = {0, 0, 0}, lp[3] = {0, 0, 0};
  for (int r = 0; r < 3; ++r)
    for (int k = 0; k < 3; ++k) {
      l[r] += e(r, k) * x[k];
      lp[r] += e(k, r) * xp[k];
    }
  double res = 0;
  for (int r = 0; r < 3; ++r) res += xp[r] * l[r];
  return res * res * (1.0 / (l[0] * l[0] + l[1] * l[1]) + 1.0 / (lp[0] * lp[0] + lp[1] * lp[1]));
}

}  // namespace

TEST(SymmetricEpipolarDistance, NoiselessInliersAreOnTheirLines) {
  GeneratorConfig cfg;
  cfg.n_correspondences = 50;
  cfg.inlier_ratio = 1.0;
  cfg.keypoint_noise_sigma = 0;
  cfg.frame_noise_sigma = 0;
  cfg.seed = 5;
  const auto scene = generate(cfg);
  for (const auto& c : scene.correspondences) {
    EXPECT_LT(symmetric_epipolar_distance(scene.e_gt, c), 1e-12);
  }
}

TEST(SymmetricEpipolarDistance, MatchesDirectEvaluation) {
  GeneratorConfig cfg;
  cfg.n_correspondences = 60;
  cfg.seed = 8;
  const auto scene = generate(cfg);
  for (const auto& c : scene.correspondences) {
    const double d = symmetric_epipolar_distance(scene.e_gt, c);
    const double ref = naive_symmetric(scene.e_gt.matrix(), c);
    EXPECT_GE(d, 0.0);
    EXPECT_NEAR(d, ref, 1e-12 * std::max(1.0, ref));
  }
}

TEST(SymmetricEpipolarDistance, PointOnEpipolarLineIsZero) {
  // Pure x-translation: E = [t]x with t = (1,0,0), epipolar lines are rows y = const.
  Mat3 e;
  e << 0, 0, 0, 0, 0, -1, 0, 1, 0;
  const auto em = EssentialMatrix::normalized(e);
  Correspondence c;
  c.kp = {0.2, 0.35};
  c.kp_prime = {-0.4, 0.35};
  EXPECT_NEAR(symmetric_epipolar_distance(em, c), 0.0, 1e-15);
  c.kp_prime.y = 0.36;
  EXPECT_GT(symmetric_epipolar_distance(em, c), 0.0);
}

TEST(LabelSet, ThresholdBoundaryIsExclusive) {
  Mat3 e;
  e << 0, 0, 0, 0, 0, -1, 0, 1, 0;
  const auto em = EssentialMatrix::normalized(e);
  Correspondence c;
  c.kp = {0.0, 0.0};
  c.kp_prime = {0.0, 0.01};
  const double d = symmetric_epipolar_distance(em, c);
  std::vector<Correspondence> set{c};
  EXPECT_EQ(label_set(set, em, d)[0], 0);
  EXPECT_EQ(label_set(set, em, std::nextafter(d, 1.0))[0], 1);
}

TEST(LabelSet, MatchesGeneratorBookkeepingOnNoiselessData) {
  GeneratorConfig cfg;
  cfg.n_correspondences = 300;
  cfg.inlier_ratio = 0.3;
  cfg.keypoint_noise_sigma = 0;
  cfg.frame_noise_sigma = 0;
  cfg.seed = 12;
  const auto scene = generate(cfg);
  EXPECT_EQ(label_set(scene.correspondences, scene.e_gt), scene.labels_gt);
}

TEST(LabelSet, MonotoneInThreshold) {
  GeneratorConfig cfg;
  cfg.n_correspondences = 200;
  cfg.seed = 4;
  const auto scene = generate(cfg);
  LabelVector prev = label_set(scene.correspondences, scene.e_gt, 1e-7);
  for (double t : {1e-6, 1e-5, 1e-4, 1e-3, 1e-2}) {
    const LabelVector cur = label_set(scene.correspondences, scene.e_gt, t);
    for (std::size_t i = 0; i < cur.size(); ++i) EXPECT_GE(cur[i], prev[i]);
    prev = cur;
  }
}

TEST(EssentialMatrixType, NormalizesAndRejectsZero) {
  Mat3 m = Mat3::Identity() * 3;
  EXPECT_NEAR(EssentialMatrix::normalized(m).matrix().norm(), 1.0, 1e-15);
  EXPECT_THROW(EssentialMatrix::normalized(Mat3::Zero()), Error);
}
