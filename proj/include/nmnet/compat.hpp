#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "nmnet/geom.hpp"

namespace nmnet {

inline constexpr double kDefaultLambda = 1e-3;
inline constexpr std::size_t kDefaultScoreCapacity = 4000;
/// Stand-in score when a pair cannot be projected.
inline constexpr double kScoreFloor = 1e-300;

struct PairScore {
  double score = 1.0;
  double error_sum = 0.0;  ///< e_j(c_i) + e_i(c_j)
  bool flagged = false;    ///< projection failed, score is kScoreFloor
};

/// Gaussian-kernel compatibility exp(-lambda * (e_j(c_i) + e_i(c_j))).
PairScore pair_score(const Correspondence& c_i, const Correspondence& c_j,
                     double lambda = kDefaultLambda);

/// Permutation-independent ordering key of a correspondence: (x, y, x', y').
using CorrespondenceKey = std::array<double, 4>;
CorrespondenceKey key_of(const Correspondence& c);

/// Dense symmetric N x N compatibility matrix. Error sums are kept next to the
/// scores so rankings do not depend on how exp() rounds for a given lambda.
class ScoreMatrix {
 public:
  ScoreMatrix() = default;

  /// Wraps an externally supplied score table (row-major, N*N). Error sums
  /// are recovered as -ln(s)/lambda; ties fall back to index order.
  static ScoreMatrix from_scores(std::size_t n, std::vector<double> scores,
                                 double lambda = kDefaultLambda);

  std::size_t size() const { return n_; }
  double lambda() const { return lambda_; }
  double operator()(std::size_t i, std::size_t j) const { return scores_[i * n_ + j]; }
  double error_sum(std::size_t i, std::size_t j) const { return error_sums_[i * n_ + j]; }
  /// Empty for matrices built from bare score tables.
  std::span<const CorrespondenceKey> keys() const { return keys_; }
  std::size_t flagged_pairs() const { return flagged_; }

 private:
  friend ScoreMatrix score_matrix(std::span<const Correspondence>, double, std::size_t);

  std::size_t n_ = 0;
  double lambda_ = kDefaultLambda;
  std::vector<double> scores_;
  std::vector<double> error_sums_;
  std::vector<CorrespondenceKey> keys_;
  std::size_t flagged_ = 0;
};

/// All pairwise scores; the upper triangle is computed once and mirrored.
/// Throws CapacityExceeded above `capacity` correspondences and
/// InsufficientCorrespondences below two.
ScoreMatrix score_matrix(std::span<const Correspondence> set, double lambda = kDefaultLambda,
                         std::size_t capacity = kDefaultScoreCapacity);

/// Per-query ordered neighbor lists of fixed width k.
///
/// With include_self the query sits at position 0 followed by its k-1 best
/// neighbors; otherwise the k best neighbors other than the query.
class NeighborGraph {
 public:
  NeighborGraph() = default;
  NeighborGraph(std::size_t n, std::size_t k, bool include_self)
      : n_(n), k_(k), include_self_(include_self), nodes_(n * k), scores_(n * k) {}

  std::size_t size() const { return n_; }
  std::size_t width() const { return k_; }
  bool includes_self() const { return include_self_; }

  std::span<const std::size_t> nodes(std::size_t i) const { return {nodes_.data() + i * k_, k_}; }
  std::span<std::size_t> nodes(std::size_t i) { return {nodes_.data() + i * k_, k_}; }
  std::span<const double> scores(std::size_t i) const { return {scores_.data() + i * k_, k_}; }
  std::span<double> scores(std::size_t i) { return {scores_.data() + i * k_, k_}; }

  friend bool operator==(const NeighborGraph&, const NeighborGraph&) = default;

 private:
  std::size_t n_ = 0;
  std::size_t k_ = 0;
  bool include_self_ = true;
  std::vector<std::size_t> nodes_;
  std::vector<double> scores_;
};

/// Compatibility-specific kNN: highest score first; ties by smaller error sum,
/// then by correspondence key, then by index.
NeighborGraph mine_cs_knn(const ScoreMatrix& matrix, std::size_t k, bool include_self = true);

/// Spatial kNN on the concatenated 4-vector (x, y, x', y'). Graph scores are
/// exp(-distance) so that lists are non-increasing with the query at 1.
NeighborGraph mine_spatial_knn(std::span<const Correspondence> set, std::size_t k,
                               bool include_self = true);

enum class InlierBucket { Below20, From20To35, From35To50, Above50 };
inline constexpr std::array<InlierBucket, 4> kInlierBuckets = {
    InlierBucket::Below20, InlierBucket::From20To35, InlierBucket::From35To50,
    InlierBucket::Above50};

InlierBucket bucket_of(double inlier_ratio);
const char* bucket_name(InlierBucket bucket);

/// Inlier fraction among the non-self neighbors of every inlier of one set,
/// summed over inliers so that scenes can be pooled.
struct NeighborRatioSample {
  double ratio_sum = 0.0;
  std::size_t inliers = 0;

  double mean() const { return inliers ? ratio_sum / static_cast<double>(inliers) : 0.0; }
};

/// Throws EmptyBucket when the set has no inliers.
NeighborRatioSample neighbor_inlier_stats(const NeighborGraph& graph, const LabelVector& labels);

/// Pooled neighbor inlier ratios per inlier-ratio bucket and per k.
class NeighborStats {
 public:
  explicit NeighborStats(std::vector<std::size_t> ks)
      : ks_(std::move(ks)), cells_(kInlierBuckets.size() * ks_.size()) {}

  void add(InlierBucket bucket, std::size_t k_index, const NeighborRatioSample& sample);

  std::span<const std::size_t> ks() const { return ks_; }
  const NeighborRatioSample& cell(InlierBucket bucket, std::size_t k_index) const {
    return cells_[static_cast<std::size_t>(bucket) * ks_.size() + k_index];
  }
  /// Throws EmptyBucket if no inlier fell into the cell.
  double mean(InlierBucket bucket, std::size_t k_index) const;

 private:
  std::vector<std::size_t> ks_;
  std::vector<NeighborRatioSample> cells_;
};

/// Hand-crafted baseline: label 1 iff the sum of s(c_i, node) over the graph
/// nodes of i exceeds threshold. threshold must lie in (0, k].
LabelVector score_sum_classifier(const NeighborGraph& graph, const ScoreMatrix& matrix,
                                 double threshold);

}  // namespace nmnet
