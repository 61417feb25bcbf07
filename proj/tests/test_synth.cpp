#include <gtest/gtest.h>

#include <Eigen/LU>
#include <Eigen/SVD>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "nmnet/compat.hpp"
#include "nmnet/error.hpp"
#include "nmnet/synth.hpp"

using namespace nmnet;

namespace {

GeneratorConfig noiseless(std::size_t n, double ratio, std::uint64_t seed) {
  GeneratorConfig cfg;
  cfg.n_correspondences = n;
  cfg.inlier_ratio = ratio;
  cfg.keypoint_noise_sigma = 0;
  cfg.frame_noise_sigma = 0;
  cfg.seed = seed;
  return cfg;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("nmnet_synth_" + name);
}

}  // namespace

TEST(Generate, AllInlierSceneSatisfiesEpipolarConstraint) {
  const auto scene = generate(noiseless(10, 1.0, 1));
  ASSERT_EQ(scene.size(), 10u);
  for (const auto& c : scene.correspondences) EXPECT_LT(symmetric_epipolar_distance(scene.e_gt, c), 1e-12);
  EXPECT_EQ(scene.labels_gt, LabelVector(10, 1));
}

TEST(Generate, ExactInlierCount) {
  const auto scene = generate(noiseless(1000, 0.4, 77));
  EXPECT_EQ(std::count(scene.labels_gt.begin(), scene.labels_gt.end(), 1), 400);
  EXPECT_DOUBLE_EQ(scene.inlier_ratio(), 0.4);
}

TEST(Generate, AffineGlobalInliersAreMutuallyCompatible) {
  auto cfg = noiseless(60, 0.5, 3);
  cfg.scene_kind = SceneKind::AffineGlobal;
  const auto scene = generate(cfg);
  std::vector<Correspondence> inliers;
  for (std::size_t i = 0; i < scene.size(); ++i)
    if (scene.labels_gt[i]) inliers.push_back(scene.correspondences[i]);
  const auto m = score_matrix(inliers);
  for (std::size_t i = 0; i < inliers.size(); ++i)
    for (std::size_t j = 0; j < inliers.size(); ++j) EXPECT_NEAR(m(i, j), 1.0, 1e-10);
  for (const auto& c : inliers) EXPECT_LT(symmetric_epipolar_distance(scene.e_gt, c), 1e-12);
}

TEST(Generate, EssentialMatrixStructure) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto scene = generate(noiseless(20, 0.5, seed));
    const Mat3& e = scene.e_gt.matrix();
    EXPECT_NEAR(e.norm(), 1.0, 1e-12);
    EXPECT_LT(std::abs(e.determinant()), 1e-9);
    Eigen::JacobiSVD<Mat3> svd(e);
    EXPECT_NEAR(svd.singularValues()(0), svd.singularValues()(1), 1e-9);
  }
}

TEST(Generate, Deterministic) {
  GeneratorConfig cfg;
  cfg.seed = 99;
  EXPECT_EQ(generate(cfg), generate(cfg));
  auto other = cfg;
  other.seed = 100;
  EXPECT_FALSE(generate(cfg) == generate(other));
}

TEST(Generate, NoisyLabelsAreFixedBeforeNoise) {
  GeneratorConfig cfg;
  cfg.n_correspondences = 200;
  cfg.seed = 4;
  const auto noisy = generate(cfg);
  EXPECT_EQ(std::count(noisy.labels_gt.begin(), noisy.labels_gt.end(), 1), 80);
  // Noise of 1e-3 keeps inliers far below the labeling threshold.
  std::size_t agree = 0;
  const auto relabeled = label_set(noisy.correspondences, noisy.e_gt);
  for (std::size_t i = 0; i < relabeled.size(); ++i) agree += relabeled[i] == noisy.labels_gt[i];
  EXPECT_GE(agree, 190u);
}

TEST(Generate, UniformOutliersRarelyLookLikeInliers) {
  auto cfg = noiseless(1000, 0.01, 0);
  cfg.reject_epipolar_outliers = false;
  std::size_t outliers = 0, mislabeled = 0;
  for (std::uint64_t s = 0; s < 12; ++s) {
    cfg.seed = s;
    const auto scene = generate(cfg);
    const auto labels = label_set(scene.correspondences, scene.e_gt);
    for (std::size_t i = 0; i < scene.size(); ++i) {
      if (scene.labels_gt[i]) continue;
      ++outliers;
      mislabeled += labels[i];
    }
  }
  EXPECT_GE(outliers, 10000u);
  EXPECT_LT(static_cast<double>(mislabeled) / static_cast<double>(outliers), 0.05);
}

TEST(Generate, BucketsArePopulatedBySweepingTheRatio) {
  for (double r : {0.1, 0.3, 0.4, 0.7}) {
    const auto scene = generate(noiseless(200, r, 1));
    EXPECT_EQ(bucket_of(scene.inlier_ratio()), bucket_of(r));
  }
}

TEST(Generate, ConfigErrors) {
  GeneratorConfig cfg;
  cfg.inlier_ratio = 0;
  EXPECT_THROW(generate(cfg), Error);
  cfg.inlier_ratio = 0.001;
  cfg.n_correspondences = 100;
  try {
    generate(cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoInliers);
  }
  cfg.inlier_ratio = 1.5;
  EXPECT_THROW(cfg.validate(), Error);
}

TEST(Dataset, SeedsAreDerived) {
  GeneratorConfig cfg;
  cfg.n_correspondences = 30;
  cfg.seed = 5;
  const auto ds = generate_dataset(cfg, 3);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    EXPECT_EQ(ds[i].seed, derive_seed(5, i));
    auto one = cfg;
    one.seed = derive_seed(5, i);
    EXPECT_EQ(ds[i], generate(one));
  }
  EXPECT_NE(derive_seed(5, 0), derive_seed(5, 1));
  EXPECT_NE(derive_seed(5, 0), derive_seed(6, 0));
}

TEST(Dataset, EmptyRoundTrip) {
  const auto p = temp_file("empty.jsonl");
  write_dataset(p, {});
  EXPECT_TRUE(read_dataset(p).empty());
  std::filesystem::remove(p);
}

TEST(Dataset, SingleSceneRoundTripIsExact) {
  GeneratorConfig cfg;
  cfg.n_correspondences = 40;
  cfg.seed = 123;
  const auto scene = generate(cfg);
  EXPECT_EQ(parse_scene(serialize_scene(scene)), scene);
  const auto p = temp_file("one.jsonl");
  write_dataset(p, std::vector<ScenePair>{scene});
  const auto back = read_dataset(p);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0], scene);
  std::filesystem::remove(p);
}

TEST(Dataset, RewriteIsByteStable) {
  GeneratorConfig cfg;
  cfg.n_correspondences = 20;
  cfg.seed = 8;
  const auto ds = generate_dataset(cfg, 100);
  const auto a = temp_file("a.jsonl"), b = temp_file("b.jsonl");
  write_dataset(a, ds);
  write_dataset(b, read_dataset(a));
  EXPECT_EQ(slurp(a), slurp(b));
  std::filesystem::remove(a);
  std::filesystem::remove(b);
}

TEST(Dataset, ParseErrors) {
  try {
    parse_scene("{not json", 7);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ParseError);
    EXPECT_NE(std::string(e.what()).find('7'), std::string::npos);
  }
  GeneratorConfig cfg;
  cfg.n_correspondences = 10;
  std::string text = serialize_scene(generate(cfg));
  text.replace(text.find("\"version\":1"), 11, "\"version\":9");
  try {
    parse_scene(text);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::VersionError);
  }
}
