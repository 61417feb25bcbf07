#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nmnet/geom.hpp"

namespace nmnet {

enum class SceneKind {
  AffineGlobal,  ///< one global similarity (fronto-parallel plane); inlier frames are its linear part
  TwoView3d,     ///< calibrated two-view capture of a piecewise-planar scene
};

const char* to_string(SceneKind kind);
SceneKind scene_kind_from_string(const std::string& s);

struct GeneratorConfig {
  std::size_t n_correspondences = 500;
  double inlier_ratio = 0.4;
  double keypoint_noise_sigma = 1e-3;
  /// Relative std of the multiplicative (1 + eps) noise on frame entries.
  double frame_noise_sigma = 0.02;
  SceneKind scene_kind = SceneKind::TwoView3d;
  double rotation_max = 0.3;  ///< radians
  double translation_scale = 1.0;
  std::pair<double, double> depth_range = {2.0, 8.0};
  /// Number of planar surfaces the inlier points are drawn from; 0 gives
  /// independent depths with independent patch normals.
  std::size_t surface_planes = 4;
  /// Half-width of the square keypoint domain in normalized coordinates.
  double image_half_extent = 0.6;
  /// Re-draw outliers that happen to satisfy the epipolar constraint within
  /// the labeling threshold, so that bookkeeping and label_set agree.
  bool reject_epipolar_outliers = true;
  std::uint64_t seed = 0;

  /// Throws ConfigError on invalid fields.
  void validate() const;
};

struct ScenePair {
  std::vector<Correspondence> correspondences;
  LabelVector labels_gt;
  EssentialMatrix e_gt;
  std::uint64_t seed = 0;
  SceneKind kind = SceneKind::TwoView3d;

  std::size_t size() const { return correspondences.size(); }
  double inlier_ratio() const;

  friend bool operator==(const ScenePair&, const ScenePair&) = default;
};

/// Deterministic in config (including seed). Throws NoInliers when
/// inlier_ratio * n < 1 and GenerationFailed when pose or point sampling
/// keeps failing.
ScenePair generate(const GeneratorConfig& config);

/// Seed of the index-th scene of a dataset built from one base seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

/// Generates `count` scenes with seeds derive_seed(config.seed, i).
std::vector<ScenePair> generate_dataset(const GeneratorConfig& config, std::size_t count);

inline constexpr int kDatasetVersion = 1;

/// One JSON object per scene per line.
std::string serialize_scene(const ScenePair& scene);
/// Throws ParseError (with `line` in the message) or VersionError.
ScenePair parse_scene(const std::string& text, std::size_t line = 1);

void write_dataset(const std::filesystem::path& path, std::span<const ScenePair> scenes);
std::vector<ScenePair> read_dataset(const std::filesystem::path& path);

}  // namespace nmnet
