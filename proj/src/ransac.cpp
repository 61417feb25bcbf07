#include "nmnet/ransac.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Geometry>
#include <Eigen/SVD>

#include "nmnet/error.hpp"

namespace nmnet {

namespace {

// Similarity taking the points to zero centroid and mean distance sqrt(2).
Mat3 normalizing_transform(const std::vector<Eigen::Vector2d>& pts) {
  Eigen::Vector2d centroid = Eigen::Vector2d::Zero();
  for (const auto& p : pts) centroid += p;
  centroid /= static_cast<double>(pts.size());
  double mean_dist = 0.0;
  for (const auto& p : pts) mean_dist += (p - centroid).norm();
  mean_dist /= static_cast<double>(pts.size());
  if (!(mean_dist > 1e-12)) {
    throw Error(ErrorCode::DegenerateConfiguration, "points are coincident");
  }
  const double s = std::sqrt(2.0) / mean_dist;
  Mat3 t;
  t << s, 0.0, -s * centroid.x(), 0.0, s, -s * centroid.y(), 0.0, 0.0, 1.0;
  return t;
}

struct Evaluation {
  std::size_t count = 0;
  double distance_sum = 0.0;
};

Evaluation evaluate(const EssentialMatrix& e, std::span<const Correspondence> set, double threshold,
                    LabelVector* labels = nullptr) {
  Evaluation ev;
  if (labels) labels->assign(set.size(), 0);
  for (std::size_t i = 0; i < set.size(); ++i) {
    double d = 0.0;
    try {
      d = symmetric_epipolar_distance(e, set[i]);
    } catch (const Error&) {
      continue;
    }
    if (d < threshold) {
      ++ev.count;
      ev.distance_sum += d;
      if (labels) (*labels)[i] = 1;
    }
  }
  return ev;
}

bool better(const Evaluation& a, const Evaluation& b) {
  if (a.count != b.count) return a.count > b.count;
  if (a.count == 0) return false;
  return a.distance_sum / static_cast<double>(a.count) < b.distance_sum / static_cast<double>(b.count);
}

}  // namespace

EssentialMatrix eight_point(std::span<const Correspondence> corrs) {
  if (corrs.size() < 8) {
    throw Error(ErrorCode::DegenerateConfiguration,
                "eight-point needs >= 8 correspondences, got " + std::to_string(corrs.size()));
  }
  std::vector<Eigen::Vector2d> p1, p2;
  p1.reserve(corrs.size());
  p2.reserve(corrs.size());
  for (const auto& c : corrs) {
    p1.emplace_back(c.kp.x, c.kp.y);
    p2.emplace_back(c.kp_prime.x, c.kp_prime.y);
  }
  const Mat3 t1 = normalizing_transform(p1);
  const Mat3 t2 = normalizing_transform(p2);

  Eigen::MatrixXd design(static_cast<Eigen::Index>(corrs.size()), 9);
  for (std::size_t i = 0; i < corrs.size(); ++i) {
    const Eigen::Vector3d x = t1 * p1[i].homogeneous();
    const Eigen::Vector3d xp = t2 * p2[i].homogeneous();
    const auto r = static_cast<Eigen::Index>(i);
    design.row(r) << xp.x() * x.x(), xp.x() * x.y(), xp.x(), xp.y() * x.x(), xp.y() * x.y(), xp.y(),
        x.x(), x.y(), 1.0;
  }
  // A^T A shares the right singular vectors of A and keeps the SVD at 9 x 9.
  const Eigen::Matrix<double, 9, 9> normal = design.transpose() * design;
  Eigen::JacobiSVD<Eigen::Matrix<double, 9, 9>> svd(normal, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (!(sv(0) > 0.0) || sv(7) / sv(0) < 1e-20) {
    throw Error(ErrorCode::DegenerateConfiguration, "design matrix is rank deficient");
  }
  const Eigen::Matrix<double, 9, 1> v = svd.matrixV().col(8);
  Mat3 e_norm;
  e_norm << v(0), v(1), v(2), v(3), v(4), v(5), v(6), v(7), v(8);
  const Mat3 e = t2.transpose() * e_norm * t1;

  Eigen::JacobiSVD<Mat3> proj(e, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const double sigma = 0.5 * (proj.singularValues()(0) + proj.singularValues()(1));
  const Eigen::Vector3d diag(sigma, sigma, 0.0);
  return EssentialMatrix::normalized(proj.matrixU() * diag.asDiagonal() * proj.matrixV().transpose());
}

RansacResult ransac(std::span<const Correspondence> set, const RansacConfig& config) {
  if (config.iterations < 1 || !(config.inlier_threshold > 0.0)) {
    throw Error(ErrorCode::ConfigError, "ransac needs iterations >= 1 and a positive threshold");
  }
  if (config.sample_size < 8 || set.size() < config.sample_size) {
    throw Error(ErrorCode::InsufficientCorrespondences,
                "ransac needs at least " + std::to_string(config.sample_size) + " correspondences");
  }
  std::mt19937_64 rng(config.seed);
  std::vector<Correspondence> sample(config.sample_size);
  std::vector<std::size_t> picked;
  std::optional<EssentialMatrix> best;
  Evaluation best_eval;

  for (std::size_t it = 0; it < config.iterations; ++it) {
    picked.clear();
    std::uniform_int_distribution<std::size_t> pick(0, set.size() - 1);
    while (picked.size() < config.sample_size) {
      const std::size_t idx = pick(rng);
      if (std::find(picked.begin(), picked.end(), idx) == picked.end()) picked.push_back(idx);
    }
    for (std::size_t s = 0; s < picked.size(); ++s) sample[s] = set[picked[s]];
    EssentialMatrix hypothesis;
    try {
      hypothesis = eight_point(sample);
    } catch (const Error&) {
      continue;
    }
    const Evaluation ev = evaluate(hypothesis, set, config.inlier_threshold);
    if (!best || better(ev, best_eval)) {
      best = hypothesis;
      best_eval = ev;
    }
  }
  if (!best || best_eval.count < 8) {
    throw Error(ErrorCode::NoConsensus, "no hypothesis reached 8 inliers");
  }

  RansacResult result;
  result.model = *best;
  result.inliers = evaluate(*best, set, config.inlier_threshold, &result.labels).count;

  std::vector<Correspondence> consensus;
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (result.labels[i]) consensus.push_back(set[i]);
  }
  try {
    result.model = eight_point(consensus);
    result.inliers = evaluate(result.model, set, config.inlier_threshold, &result.labels).count;
  } catch (const Error&) {
    // keep the sampled hypothesis
  }
  return result;
}

}  // namespace nmnet
