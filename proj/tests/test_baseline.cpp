#include <gtest/gtest.h>

#include <Eigen/LU>
#include <Eigen/SVD>

#include "nmnet/error.hpp"
#include "nmnet/eval.hpp"
#include "nmnet/ransac.hpp"
#include "nmnet/synth.hpp"

using namespace nmnet;

namespace {

ScenePair noiseless(std::size_t n, double ratio, std::uint64_t seed) {
  GeneratorConfig cfg;
  cfg.n_correspondences = n;
  cfg.inlier_ratio = ratio;
  cfg.keypoint_noise_sigma = 0;
  cfg.frame_noise_sigma = 0;
  cfg.seed = seed;
  return generate(cfg);
}

std::vector<Correspondence> inliers_of(const ScenePair& s) {
  std::vector<Correspondence> out;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (s.labels_gt[i]) out.push_back(s.correspondences[i]);
  return out;
}

}  // namespace

TEST(EightPoint, RecoversNoiselessEssential) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto s = noiseless(40, 1.0, seed);
    const auto e = eight_point(s.correspondences);
    EXPECT_LT(essential_deviation(e, s.e_gt), 1e-6) << "seed " << seed;
    const auto first8 = std::span(s.correspondences).first(8);
    EXPECT_LT(essential_deviation(eight_point(first8), s.e_gt), 1e-6);
  }
}

TEST(EightPoint, ManifoldProjection) {
  GeneratorConfig cfg;
  cfg.n_correspondences = 30;
  cfg.inlier_ratio = 0.5;
  cfg.seed = 3;
  const auto e = eight_point(generate(cfg).correspondences).matrix();
  Eigen::JacobiSVD<Mat3> svd(e);
  EXPECT_LT(std::abs(e.determinant()), 1e-9);
  EXPECT_NEAR(svd.singularValues()(0), svd.singularValues()(1), 1e-9);
  EXPECT_NEAR(e.norm(), 1.0, 1e-12);
}

TEST(EightPoint, Degenerate) {
  Correspondence c;
  c.kp = {0.1, 0.2};
  c.kp_prime = {0.3, 0.1};
  const std::vector<Correspondence> same(10, c);
  try {
    eight_point(same);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateConfiguration);
  }
  const auto s = noiseless(7, 1.0, 1);
  EXPECT_THROW(eight_point(s.correspondences), Error);
}

TEST(Ransac, NoiselessSixtyPercent) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto s = noiseless(200, 0.6, seed);
    const auto r = ransac(s.correspondences, {.seed = seed});
    const auto m = prf(r.labels, s.labels_gt);
    EXPECT_GE(m.precision, 0.99);
    EXPECT_GE(m.recall, 0.99);
  }
}

TEST(Ransac, AllInliers) {
  const auto s = noiseless(50, 1.0, 8);
  EXPECT_EQ(ransac(s.correspondences).labels, LabelVector(50, 1));
}

TEST(Ransac, DeterministicAndSeedSensitive) {
  GeneratorConfig cfg;
  cfg.n_correspondences = 150;
  cfg.inlier_ratio = 0.3;
  cfg.seed = 2;
  const auto s = generate(cfg);
  const auto a = ransac(s.correspondences, {.iterations = 300, .seed = 1});
  const auto b = ransac(s.correspondences, {.iterations = 300, .seed = 1});
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.model, b.model);
}

TEST(Ransac, DuplicateInlierDoesNotReduceConsensus) {
  auto s = noiseless(120, 0.6, 4);
  const auto base = ransac(s.correspondences, {.seed = 2});
  const auto in = inliers_of(s);
  auto more = s.correspondences;
  more.push_back(in.front());
  const auto r = ransac(more, {.seed = 2});
  EXPECT_GE(r.inliers, base.inliers);
}

TEST(Ransac, LowInlierRatioHurtsPrecision) {
  double p40 = 0, p75 = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    GeneratorConfig cfg;
    cfg.n_correspondences = 400;
    cfg.seed = seed;
    cfg.inlier_ratio = 0.4;
    const auto a = generate(cfg);
    p40 += prf(ransac(a.correspondences, {.seed = seed}).labels, a.labels_gt).precision;
    cfg.inlier_ratio = 0.075;
    const auto b = generate(cfg);
    try {
      p75 += prf(ransac(b.correspondences, {.seed = seed}).labels, b.labels_gt).precision;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::NoConsensus);
    }
  }
  EXPECT_LT(p75, 0.8 * p40);
}

TEST(Ransac, Errors) {
  const auto s = noiseless(7, 1.0, 1);
  try {
    ransac(s.correspondences);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InsufficientCorrespondences);
  }
  Correspondence c;
  c.kp = {0.1, 0.2};
  try {
    ransac(std::vector<Correspondence>(20, c), {.iterations = 10});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoConsensus);
  }
  const auto ok = noiseless(20, 1.0, 1);
  EXPECT_THROW(ransac(ok.correspondences, {.iterations = 0}), Error);
  EXPECT_THROW(ransac(ok.correspondences, {.inlier_threshold = 0}), Error);
}
