#include "nmnet/compat.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "nmnet/error.hpp"

namespace nmnet {

namespace {

PairScore score_from_transforms(const Mat3& h_i, const Mat3& h_j, const Point2& k_i,
                                const Point2& k_j, double lambda) {
  PairScore out;
  try {
    out.error_sum = reprojection_error(h_i, h_j, k_i) + reprojection_error(h_j, h_i, k_j);
    out.score = std::exp(-lambda * out.error_sum);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::ProjectionAtInfinity) throw;
    out.error_sum = std::numeric_limits<double>::infinity();
    out.score = kScoreFloor;
    out.flagged = true;
  }
  return out;
}

void check_lambda(double lambda) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw Error(ErrorCode::ConfigError, "lambda must be positive and finite");
  }
}

void check_width(std::size_t n, std::size_t k, bool include_self) {
  const std::size_t available = include_self ? n : (n == 0 ? 0 : n - 1);
  if (k < 1 || k > available) {
    throw Error(ErrorCode::InsufficientCorrespondences,
                "k = " + std::to_string(k) + " with " + std::to_string(n) + " correspondences");
  }
}

// Fills row i of the graph from candidate indices ordered by `before`.
template <typename Before, typename ScoreOf>
void fill_row(NeighborGraph& graph, std::size_t i, std::size_t n, Before before, ScoreOf score_of) {
  const std::size_t k = graph.width();
  std::vector<std::size_t> candidates;
  candidates.reserve(n - 1);
  for (std::size_t j = 0; j < n; ++j) {
    if (j != i) candidates.push_back(j);
  }
  const std::size_t offset = graph.includes_self() ? 1 : 0;
  const std::size_t take = k - offset;
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(take),
                    candidates.end(), before);
  auto nodes = graph.nodes(i);
  auto scores = graph.scores(i);
  if (offset == 1) {
    nodes[0] = i;
    scores[0] = 1.0;
  }
  for (std::size_t p = 0; p < take; ++p) {
    nodes[offset + p] = candidates[p];
    scores[offset + p] = score_of(candidates[p]);
  }
}

}  // namespace

PairScore pair_score(const Correspondence& c_i, const Correspondence& c_j, double lambda) {
  check_lambda(lambda);
  return score_from_transforms(local_transform(c_i), local_transform(c_j), c_i.kp, c_j.kp, lambda);
}

CorrespondenceKey key_of(const Correspondence& c) {
  return {c.kp.x, c.kp.y, c.kp_prime.x, c.kp_prime.y};
}

ScoreMatrix ScoreMatrix::from_scores(std::size_t n, std::vector<double> scores, double lambda) {
  check_lambda(lambda);
  if (scores.size() != n * n) {
    throw Error(ErrorCode::ShapeError, "score table is not N x N");
  }
  ScoreMatrix m;
  m.n_ = n;
  m.lambda_ = lambda;
  m.error_sums_.resize(n * n);
  for (std::size_t idx = 0; idx < scores.size(); ++idx) {
    m.error_sums_[idx] = scores[idx] > 0.0 ? -std::log(scores[idx]) / lambda
                                            : std::numeric_limits<double>::infinity();
  }
  m.scores_ = std::move(scores);
  return m;
}

ScoreMatrix score_matrix(std::span<const Correspondence> set, double lambda, std::size_t capacity) {
  check_lambda(lambda);
  const std::size_t n = set.size();
  if (n < 2) {
    throw Error(ErrorCode::InsufficientCorrespondences, "score matrix needs at least 2 correspondences");
  }
  if (n > capacity) {
    throw Error(ErrorCode::CapacityExceeded,
                std::to_string(n) + " correspondences exceed capacity " + std::to_string(capacity));
  }
  std::vector<Mat3> transforms;
  transforms.reserve(n);
  for (const auto& c : set) transforms.push_back(local_transform(c));

  ScoreMatrix m;
  m.n_ = n;
  m.lambda_ = lambda;
  m.scores_.assign(n * n, 1.0);
  m.error_sums_.assign(n * n, 0.0);
  m.keys_.reserve(n);
  for (const auto& c : set) m.keys_.push_back(key_of(c));

  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const PairScore s = score_from_transforms(transforms[i], transforms[j], set[i].kp, set[j].kp, lambda);
      m.scores_[i * n + j] = m.scores_[j * n + i] = s.score;
      m.error_sums_[i * n + j] = m.error_sums_[j * n + i] = s.error_sum;
      if (s.flagged) ++m.flagged_;
    }
  }
  return m;
}

NeighborGraph mine_cs_knn(const ScoreMatrix& matrix, std::size_t k, bool include_self) {
  const std::size_t n = matrix.size();
  check_width(n, k, include_self);
  const auto keys = matrix.keys();
  NeighborGraph graph(n, k, include_self);
  for (std::size_t i = 0; i < n; ++i) {
    auto before = [&](std::size_t a, std::size_t b) {
      const double sa = matrix(i, a);
      const double sb = matrix(i, b);
      if (sa != sb) return sa > sb;
      const double ea = matrix.error_sum(i, a);
      const double eb = matrix.error_sum(i, b);
      if (ea != eb) return ea < eb;
      if (!keys.empty() && keys[a] != keys[b]) return keys[a] < keys[b];
      return a < b;
    };
    fill_row(graph, i, n, before, [&](std::size_t j) { return matrix(i, j); });
  }
  return graph;
}

NeighborGraph mine_spatial_knn(std::span<const Correspondence> set, std::size_t k, bool include_self) {
  const std::size_t n = set.size();
  check_width(n, k, include_self);
  std::vector<CorrespondenceKey> keys;
  keys.reserve(n);
  for (const auto& c : set) keys.push_back(key_of(c));

  NeighborGraph graph(n, k, include_self);
  std::vector<double> dist(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double d2 = 0.0;
      for (std::size_t c = 0; c < 4; ++c) {
        const double d = keys[i][c] - keys[j][c];
        d2 += d * d;
      }
      dist[j] = std::sqrt(d2);
    }
    auto before = [&](std::size_t a, std::size_t b) {
      if (dist[a] != dist[b]) return dist[a] < dist[b];
      if (keys[a] != keys[b]) return keys[a] < keys[b];
      return a < b;
    };
    fill_row(graph, i, n, before, [&](std::size_t j) { return std::exp(-dist[j]); });
  }
  return graph;
}

InlierBucket bucket_of(double inlier_ratio) {
  if (inlier_ratio < 0.20) return InlierBucket::Below20;
  if (inlier_ratio < 0.35) return InlierBucket::From20To35;
  if (inlier_ratio <= 0.50) return InlierBucket::From35To50;
  return InlierBucket::Above50;
}

const char* bucket_name(InlierBucket bucket) {
  switch (bucket) {
    case InlierBucket::Below20: return "<20%";
    case InlierBucket::From20To35: return "20-35%";
    case InlierBucket::From35To50: return "35-50%";
    case InlierBucket::Above50: return ">50%";
  }
  return "?";
}

NeighborRatioSample neighbor_inlier_stats(const NeighborGraph& graph, const LabelVector& labels) {
  if (labels.size() != graph.size()) {
    throw Error(ErrorCode::ShapeError, "labels and graph cover different sets");
  }
  NeighborRatioSample sample;
  const std::size_t skip = graph.includes_self() ? 1 : 0;
  const std::size_t count = graph.width() - skip;
  for (std::size_t i = 0; i < graph.size(); ++i) {
    if (!labels[i]) continue;
    ++sample.inliers;
    if (count == 0) continue;
    const auto nodes = graph.nodes(i);
    std::size_t good = 0;
    for (std::size_t p = skip; p < nodes.size(); ++p) good += labels[nodes[p]] ? 1 : 0;
    sample.ratio_sum += static_cast<double>(good) / static_cast<double>(count);
  }
  if (sample.inliers == 0) {
    throw Error(ErrorCode::EmptyBucket, "set has no inliers");
  }
  return sample;
}

void NeighborStats::add(InlierBucket bucket, std::size_t k_index, const NeighborRatioSample& sample) {
  auto& cell = cells_.at(static_cast<std::size_t>(bucket) * ks_.size() + k_index);
  cell.ratio_sum += sample.ratio_sum;
  cell.inliers += sample.inliers;
}

double NeighborStats::mean(InlierBucket bucket, std::size_t k_index) const {
  const auto& c = cell(bucket, k_index);
  if (c.inliers == 0) {
    throw Error(ErrorCode::EmptyBucket, std::string("no inliers in bucket ") + bucket_name(bucket));
  }
  return c.mean();
}

LabelVector score_sum_classifier(const NeighborGraph& graph, const ScoreMatrix& matrix, double threshold) {
  if (graph.size() != matrix.size()) {
    throw Error(ErrorCode::ShapeError, "graph and score matrix cover different sets");
  }
  if (!(threshold > 0.0) || threshold > static_cast<double>(graph.width())) {
    throw Error(ErrorCode::ConfigError, "score-sum threshold must lie in (0, k]");
  }
  LabelVector labels(graph.size(), 0);
  for (std::size_t i = 0; i < graph.size(); ++i) {
    double sum = 0.0;
    for (std::size_t node : graph.nodes(i)) sum += matrix(i, node);
    labels[i] = sum > threshold ? 1 : 0;
  }
  return labels;
}

}  // namespace nmnet
