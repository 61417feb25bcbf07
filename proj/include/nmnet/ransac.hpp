#pragma once

#include <cstdint>
#include <span>

#include "nmnet/geom.hpp"

namespace nmnet {

/// Hartley-normalized linear eight-point solve, projected onto the essential
/// manifold (singular values (s, s, 0)) and scaled to unit Frobenius norm.
/// Throws DegenerateConfiguration for fewer than 8 correspondences, coincident
/// points or a rank-deficient design matrix.
EssentialMatrix eight_point(std::span<const Correspondence> corrs);

struct RansacConfig {
  std::size_t iterations = 2000;
  std::size_t sample_size = 8;
  /// On the symmetric epipolar distance.
  double inlier_threshold = kDefaultLabelThreshold;
  std::uint64_t seed = 0;
};

struct RansacResult {
  EssentialMatrix model;
  LabelVector labels;
  std::size_t inliers = 0;
};

/// Hypothesize-and-verify with eight-point samples. The best hypothesis (most
/// inliers, then lower mean inlier distance) is re-fit on its consensus set.
/// Throws NoConsensus if no hypothesis reaches 8 inliers.
RansacResult ransac(std::span<const Correspondence> set, const RansacConfig& config = {});

}  // namespace nmnet
