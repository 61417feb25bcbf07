#include "nmnet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>

#include <Eigen/Geometry>
#include <json.hpp>

#include "nmnet/error.hpp"

namespace nmnet {

namespace {

using Rng = std::mt19937_64;

constexpr int kMaxPoseAttempts = 50;
constexpr int kMaxPointAttempts = 2000;
constexpr double kMinCameraDepth = 0.1;
constexpr double kMaxSurfaceTilt = 0.9;  // radians from the optical axis

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

double gaussian(Rng& rng, double sigma) {
  if (sigma == 0.0) return 0.0;
  return std::normal_distribution<double>(0.0, sigma)(rng);
}

Eigen::Vector3d random_unit_vector(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Vector3d v;
  do {
    v = Eigen::Vector3d(n(rng), n(rng), n(rng));
  } while (v.norm() < 1e-9);
  return v.normalized();
}

Eigen::Matrix2d rotation2(double angle) {
  Eigen::Matrix2d r;
  r << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
  return r;
}

// Random local shape: scale log-uniform in [0.01, 0.05], condition number
// log-uniform in [1, 10].
Eigen::Matrix2d random_frame(Rng& rng) {
  const double scale = std::exp(uniform(rng, std::log(0.01), std::log(0.05)));
  const double cond = std::exp(uniform(rng, 0.0, std::log(10.0)));
  const double theta = uniform(rng, -std::numbers::pi, std::numbers::pi);
  const double phi = uniform(rng, -std::numbers::pi, std::numbers::pi);
  const Eigen::Vector2d sv(std::sqrt(cond), 1.0 / std::sqrt(cond));
  return scale * rotation2(theta) * sv.asDiagonal() * rotation2(phi);
}

// Normal tilted at most `max_tilt` away from the optical axis, facing the camera.
Eigen::Vector3d random_surface_normal(Rng& rng, double max_tilt) {
  const double tilt = std::acos(uniform(rng, std::cos(max_tilt), 1.0));
  const double azimuth = uniform(rng, -std::numbers::pi, std::numbers::pi);
  return {std::sin(tilt) * std::cos(azimuth), std::sin(tilt) * std::sin(azimuth), -std::cos(tilt)};
}

Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d s;
  s << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return s;
}

bool in_image(const Point2& p, double half_extent) {
  return std::abs(p.x) <= half_extent && std::abs(p.y) <= half_extent;
}

Point2 random_keypoint(Rng& rng, double half_extent) {
  return {uniform(rng, -half_extent, half_extent), uniform(rng, -half_extent, half_extent)};
}

void perturb_frame(AffineFrame& f, Rng& rng, double sigma) {
  f.a11 *= 1.0 + gaussian(rng, sigma);
  f.a12 *= 1.0 + gaussian(rng, sigma);
  f.a21 *= 1.0 + gaussian(rng, sigma);
  f.a22 *= 1.0 + gaussian(rng, sigma);
}

// Surface through the scene: n^T X = d in first-camera coordinates.
struct Plane {
  Eigen::Vector3d normal;
  double offset = 0.0;
};

struct Pose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::UnitX();
};

// Projects X into both views and builds the inlier with frames given by the
// Jacobian of the homography induced by the local patch plane.
std::optional<Correspondence> make_inlier(const Pose& pose, const Eigen::Vector3d& x,
                                          const Eigen::Vector3d& patch_normal, const GeneratorConfig& cfg,
                                          Rng& rng) {
  const Eigen::Vector3d x2 = pose.rotation * x + pose.translation;
  if (x2.z() < kMinCameraDepth) return std::nullopt;
  const Point2 kp{x.x() / x.z(), x.y() / x.z()};
  const Point2 kp2{x2.x() / x2.z(), x2.y() / x2.z()};
  if (!in_image(kp2, cfg.image_half_extent)) return std::nullopt;

  const double d = patch_normal.dot(x);
  if (std::abs(d) < 1e-9) return std::nullopt;
  const Eigen::Matrix3d h = pose.rotation + pose.translation * patch_normal.transpose() / d;
  const Eigen::Vector3d q = h * Eigen::Vector3d(kp.x, kp.y, 1.0);
  Eigen::Matrix2d jac;
  for (int a = 0; a < 2; ++a) {
    const double proj = a == 0 ? kp2.x : kp2.y;
    for (int b = 0; b < 2; ++b) jac(a, b) = (h(a, b) - proj * h(2, b)) / q.z();
  }
  if (std::abs(jac.determinant()) < 1e-6) return std::nullopt;

  const Eigen::Matrix2d a1 = random_frame(rng);
  return Correspondence{kp, AffineFrame::from_matrix(a1), kp2, AffineFrame::from_matrix(jac * a1)};
}

Correspondence make_outlier(Rng& rng, const GeneratorConfig& cfg, const EssentialMatrix& e) {
  for (int attempt = 0; attempt < kMaxPointAttempts; ++attempt) {
    Correspondence c{random_keypoint(rng, cfg.image_half_extent), AffineFrame::from_matrix(random_frame(rng)),
                     random_keypoint(rng, cfg.image_half_extent), AffineFrame::from_matrix(random_frame(rng))};
    if (!cfg.reject_epipolar_outliers) return c;
    double dist = 0.0;
    try {
      dist = symmetric_epipolar_distance(e, c);
    } catch (const Error&) {
      continue;
    }
    if (dist >= kDefaultLabelThreshold) return c;
  }
  throw Error(ErrorCode::GenerationFailed, "could not draw an outlier off the epipolar geometry");
}

struct Inliers {
  std::vector<Correspondence> corrs;
  EssentialMatrix e;
};

std::optional<Inliers> sample_two_view(const GeneratorConfig& cfg, std::size_t count, Rng& rng) {
  Pose pose;
  const double angle = uniform(rng, 0.0, cfg.rotation_max);
  pose.rotation = Eigen::AngleAxisd(angle, random_unit_vector(rng)).toRotationMatrix();
  pose.translation = cfg.translation_scale * random_unit_vector(rng);

  const auto [z_min, z_max] = cfg.depth_range;
  std::vector<Plane> planes;
  for (std::size_t p = 0; p < cfg.surface_planes; ++p) {
    const Eigen::Vector3d n = random_surface_normal(rng, kMaxSurfaceTilt);
    const Point2 anchor = random_keypoint(rng, cfg.image_half_extent);
    const Eigen::Vector3d x0 = uniform(rng, z_min, z_max) * Eigen::Vector3d(anchor.x, anchor.y, 1.0);
    planes.push_back({n, n.dot(x0)});
  }

  Inliers out;
  out.corrs.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxPointAttempts && !placed; ++attempt) {
      const Point2 kp = random_keypoint(rng, cfg.image_half_extent);
      const Eigen::Vector3d ray(kp.x, kp.y, 1.0);
      Eigen::Vector3d normal;
      double depth = 0.0;
      if (planes.empty()) {
        depth = uniform(rng, z_min, z_max);
        normal = random_surface_normal(rng, kMaxSurfaceTilt);
      } else {
        const Plane& plane = planes[std::uniform_int_distribution<std::size_t>(0, planes.size() - 1)(rng)];
        const double denom = plane.normal.dot(ray);
        if (std::abs(denom) < 1e-9) continue;
        depth = plane.offset / denom;
        normal = plane.normal;
        if (depth < z_min || depth > z_max) continue;
      }
      if (auto c = make_inlier(pose, depth * ray, normal, cfg, rng)) {
        out.corrs.push_back(*c);
        placed = true;
      }
    }
    if (!placed) return std::nullopt;
  }
  out.e = EssentialMatrix::normalized(skew(pose.translation) * pose.rotation);
  return out;
}

// Fronto-parallel plane, rotation about the optical axis: the image motion is
// one global similarity k' = M k + b.
std::optional<Inliers> sample_affine_global(const GeneratorConfig& cfg, std::size_t count, Rng& rng) {
  const double angle = uniform(rng, -cfg.rotation_max, cfg.rotation_max);
  const Eigen::Vector3d t = cfg.translation_scale * random_unit_vector(rng);
  const double depth = cfg.depth_range.second;
  if (depth + t.z() < kMinCameraDepth) return std::nullopt;
  const Eigen::Matrix2d m = depth / (depth + t.z()) * rotation2(angle);
  const Eigen::Vector2d b = t.head<2>() / (depth + t.z());

  Eigen::Matrix3d r = Eigen::Matrix3d::Identity();
  r.topLeftCorner<2, 2>() = rotation2(angle);

  Inliers out;
  for (std::size_t i = 0; i < count; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxPointAttempts && !placed; ++attempt) {
      const Point2 kp = random_keypoint(rng, cfg.image_half_extent);
      const Eigen::Vector2d k2 = m * Eigen::Vector2d(kp.x, kp.y) + b;
      const Point2 kp2{k2.x(), k2.y()};
      if (!in_image(kp2, cfg.image_half_extent)) continue;
      out.corrs.push_back({kp, AffineFrame::identity(), kp2, AffineFrame::from_matrix(m)});
      placed = true;
    }
    if (!placed) return std::nullopt;
  }
  out.e = EssentialMatrix::normalized(skew(t) * r);
  return out;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

const char* to_string(SceneKind kind) {
  return kind == SceneKind::AffineGlobal ? "affine-global" : "two-view-3d";
}

SceneKind scene_kind_from_string(const std::string& s) {
  if (s == "affine-global") return SceneKind::AffineGlobal;
  if (s == "two-view-3d") return SceneKind::TwoView3d;
  throw Error(ErrorCode::ConfigError, "unknown scene kind '" + s + "'");
}

void GeneratorConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::ConfigError, what); };
  if (n_correspondences < 2) fail("n_correspondences must be >= 2");
  if (!(inlier_ratio > 0.0 && inlier_ratio <= 1.0)) fail("inlier_ratio must lie in (0, 1]");
  if (!(keypoint_noise_sigma >= 0.0) || !(frame_noise_sigma >= 0.0)) fail("noise sigmas must be >= 0");
  if (!(depth_range.first > 0.0) || !(depth_range.second >= depth_range.first)) {
    fail("depth range must be positive and ordered");
  }
  if (!(rotation_max >= 0.0)) fail("rotation_max must be >= 0");
  if (!(translation_scale > 0.0)) fail("translation_scale must be positive");
  if (!(image_half_extent > 0.0)) fail("image_half_extent must be positive");
}

double ScenePair::inlier_ratio() const {
  if (labels_gt.empty()) return 0.0;
  const auto inliers = std::count(labels_gt.begin(), labels_gt.end(), std::uint8_t{1});
  return static_cast<double>(inliers) / static_cast<double>(labels_gt.size());
}

ScenePair generate(const GeneratorConfig& config) {
  config.validate();
  const double expected = config.inlier_ratio * static_cast<double>(config.n_correspondences);
  if (expected < 1.0) {
    throw Error(ErrorCode::NoInliers, "inlier_ratio * n < 1");
  }
  const auto n_in = std::min<std::size_t>(config.n_correspondences,
                                          static_cast<std::size_t>(std::llround(expected)));

  Rng rng(config.seed);
  std::optional<Inliers> inliers;
  for (int attempt = 0; attempt < kMaxPoseAttempts && !inliers; ++attempt) {
    inliers = config.scene_kind == SceneKind::TwoView3d ? sample_two_view(config, n_in, rng)
                                                         : sample_affine_global(config, n_in, rng);
  }
  if (!inliers) {
    throw Error(ErrorCode::GenerationFailed, "no valid pose after " + std::to_string(kMaxPoseAttempts) + " attempts");
  }

  ScenePair scene;
  scene.seed = config.seed;
  scene.kind = config.scene_kind;
  scene.e_gt = inliers->e;
  scene.correspondences = std::move(inliers->corrs);
  scene.labels_gt.assign(n_in, 1);
  for (std::size_t i = n_in; i < config.n_correspondences; ++i) {
    scene.correspondences.push_back(make_outlier(rng, config, scene.e_gt));
    scene.labels_gt.push_back(0);
  }

  std::vector<std::size_t> order(scene.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Correspondence> corrs(scene.size());
  LabelVector labels(scene.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    corrs[i] = scene.correspondences[order[i]];
    labels[i] = scene.labels_gt[order[i]];
  }

  // Labels are fixed above; noise models detector error only.
  for (auto& c : corrs) {
    c.kp.x += gaussian(rng, config.keypoint_noise_sigma);
    c.kp.y += gaussian(rng, config.keypoint_noise_sigma);
    c.kp_prime.x += gaussian(rng, config.keypoint_noise_sigma);
    c.kp_prime.y += gaussian(rng, config.keypoint_noise_sigma);
    perturb_frame(c.frame, rng, config.frame_noise_sigma);
    perturb_frame(c.frame_prime, rng, config.frame_noise_sigma);
  }
  scene.correspondences = std::move(corrs);
  scene.labels_gt = std::move(labels);
  return scene;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  return splitmix64(splitmix64(base) ^ index);
}

std::vector<ScenePair> generate_dataset(const GeneratorConfig& config, std::size_t count) {
  std::vector<ScenePair> scenes;
  scenes.reserve(count);
  GeneratorConfig cfg = config;
  for (std::size_t i = 0; i < count; ++i) {
    cfg.seed = derive_seed(config.seed, i);
    scenes.push_back(generate(cfg));
  }
  return scenes;
}

// ---------------------------------------------------------------------------
// Dataset files

std::string serialize_scene(const ScenePair& scene) {
  nlohmann::ordered_json j;
  j["version"] = kDatasetVersion;
  j["seed"] = scene.seed;
  j["kind"] = to_string(scene.kind);
  auto& e = j["e_gt"] = nlohmann::ordered_json::array();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) e.push_back(scene.e_gt.matrix()(r, c));
  }
  auto& corrs = j["corrs"] = nlohmann::ordered_json::array();
  for (const auto& c : scene.correspondences) {
    corrs.push_back({c.kp.x, c.kp.y, c.frame.a11, c.frame.a12, c.frame.a21, c.frame.a22, c.kp_prime.x,
                     c.kp_prime.y, c.frame_prime.a11, c.frame_prime.a12, c.frame_prime.a21,
                     c.frame_prime.a22});
  }
  auto& labels = j["labels"] = nlohmann::ordered_json::array();
  for (auto l : scene.labels_gt) labels.push_back(static_cast<int>(l));
  return j.dump();
}

ScenePair parse_scene(const std::string& text, std::size_t line) {
  auto fail = [line](const std::string& what) -> ScenePair {
    throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": " + what);
  };
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    return fail(e.what());
  }
  try {
    const int version = j.at("version").get<int>();
    if (version != kDatasetVersion) {
      throw Error(ErrorCode::VersionError, "line " + std::to_string(line) + ": dataset version " +
                                               std::to_string(version) + ", expected " +
                                               std::to_string(kDatasetVersion));
    }
    ScenePair scene;
    scene.seed = j.at("seed").get<std::uint64_t>();
    scene.kind = scene_kind_from_string(j.at("kind").get<std::string>());
    const auto e = j.at("e_gt").get<std::vector<double>>();
    if (e.size() != 9) return fail("e_gt must have 9 entries");
    Mat3 m;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) m(r, c) = e[static_cast<std::size_t>(r * 3 + c)];
    }
    scene.e_gt = EssentialMatrix::from_unit(m);
    for (const auto& row : j.at("corrs")) {
      const auto v = row.get<std::vector<double>>();
      if (v.size() != 12) return fail("correspondence record must have 12 numbers");
      scene.correspondences.push_back(
          {{v[0], v[1]}, {v[2], v[3], v[4], v[5]}, {v[6], v[7]}, {v[8], v[9], v[10], v[11]}});
    }
    for (const auto& l : j.at("labels")) {
      const int v = l.get<int>();
      if (v != 0 && v != 1) return fail("labels must be 0 or 1");
      scene.labels_gt.push_back(static_cast<std::uint8_t>(v));
    }
    if (scene.labels_gt.size() != scene.correspondences.size()) {
      return fail("labels and correspondences differ in length");
    }
    return scene;
  } catch (const nlohmann::json::exception& e) {
    return fail(e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ConfigError) return fail(e.what());
    throw;
  }
}

void write_dataset(const std::filesystem::path& path, std::span<const ScenePair> scenes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  for (const auto& s : scenes) out << serialize_scene(s) << '\n';
  if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

std::vector<ScenePair> read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<ScenePair> scenes;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.empty()) continue;
    scenes.push_back(parse_scene(text, line));
  }
  return scenes;
}

}  // namespace nmnet
