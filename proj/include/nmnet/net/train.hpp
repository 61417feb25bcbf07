#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nmnet/compat.hpp"
#include "nmnet/net/model.hpp"
#include "nmnet/synth.hpp"

namespace nmnet {

/// How the grouping module picks neighbors: compatibility scores (NM-Net) or
/// 4D Euclidean distance (the spatial ablation).
enum class Mining { Compatibility, Spatial };

const char* to_string(Mining mining);
Mining mining_from_string(const std::string& s);

/// Width-k graph with the query at position 0.
NeighborGraph build_graph(std::span<const Correspondence> corrs, Mining mining, std::size_t k, double lambda);

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 16;  ///< scenes
  std::size_t epochs = 20;
  std::size_t k = 8;
  double lambda = kDefaultLambda;
  std::uint64_t seed = 0;
  Mining mining = Mining::Compatibility;
  Architecture architecture = Architecture::standard();
  double bn_momentum = 0.9;

  void validate() const;
};

/// Bias-corrected Adam moments, one slot per trainable value.
struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::size_t step = 0;

  static AdamState zeros_like(const ModelParams& params);
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEpsilon = 1e-8;

void adam_step(ModelParams& params, const Gradients& grads, AdamState& state, double learning_rate);

/// Scene prepared once for repeated passes: raw input and mined graph.
struct PreparedScene {
  FeatureMap input;
  NeighborGraph graph;
  LabelVector labels;
};

PreparedScene prepare_scene(const ScenePair& scene, Mining mining, std::size_t k, double lambda);

/// Mean class-balanced loss over the batch and its gradient (accumulated into
/// grads). BN statistics pool the batch.
double loss_and_gradient(const ModelParams& params, std::span<const PreparedScene> batch, Gradients& grads,
                         double loss_scale = 1.0);

struct EpochLog {
  std::size_t epoch = 0;
  double loss = 0.0;
  std::optional<double> validation_f;
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochLog> log;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Adam on the class-balanced loss. Deterministic given config.seed. Throws
/// EmptyDataset.
TrainResult train(std::span<const ScenePair> dataset, const TrainConfig& config,
                  std::span<const ScenePair> validation = {}, const EpochCallback& on_epoch = {});

struct InferConfig {
  std::size_t k = 8;
  double lambda = kDefaultLambda;
  Mining mining = Mining::Compatibility;
};

struct Inference {
  std::vector<double> logits;
  std::vector<double> probabilities;
  LabelVector labels;  ///< 1 iff probability > 0.5
};

Inference infer(const ModelParams& params, std::span<const Correspondence> corrs, const InferConfig& config);
Inference infer(const ModelParams& params, const PreparedScene& scene);

/// Probabilities and strict > 0.5 labels from raw logits.
Inference classify_logits(std::vector<double> logits);

}  // namespace nmnet
