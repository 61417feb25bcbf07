#include "nmnet/net/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "nmnet/error.hpp"
#include "nmnet/eval.hpp"
#include "nmnet/net/layers.hpp"

namespace nmnet {

const char* to_string(Mining mining) { return mining == Mining::Compatibility ? "compatibility" : "spatial"; }

Mining mining_from_string(const std::string& s) {
  if (s == "compatibility") return Mining::Compatibility;
  if (s == "spatial") return Mining::Spatial;
  throw Error(ErrorCode::ConfigError, "unknown mining mode '" + s + "'");
}

NeighborGraph build_graph(std::span<const Correspondence> corrs, Mining mining, std::size_t k, double lambda) {
  if (mining == Mining::Spatial) return mine_spatial_knn(corrs, k, true);
  return mine_cs_knn(score_matrix(corrs, lambda), k, true);
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || batch_size == 0 || epochs == 0 || k == 0 || !(lambda > 0.0) ||
      !(bn_momentum >= 0.0 && bn_momentum < 1.0)) {
    throw Error(ErrorCode::ConfigError, "training configuration values must be positive");
  }
}

AdamState AdamState::zeros_like(const ModelParams& params) {
  AdamState s;
  for (const auto& b : params.blocks()) {
    s.m.emplace_back(b.trainable ? b.values.size() : 0, 0.0);
    s.v.emplace_back(b.trainable ? b.values.size() : 0, 0.0);
  }
  return s;
}

void adam_step(ModelParams& params, const Gradients& grads, AdamState& state, double learning_rate) {
  auto& blocks = params.blocks();
  if (grads.blocks().size() != blocks.size() || state.m.size() != blocks.size()) {
    throw Error(ErrorCode::ShapeError, "gradient or optimizer state does not match parameters");
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.step));
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    if (!blocks[b].trainable) continue;
    auto& p = blocks[b].values;
    const auto& g = grads.blocks()[b].values;
    auto& m = state.m[b];
    auto& v = state.v[b];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = kAdamBeta1 * m[i] + (1.0 - kAdamBeta1) * g[i];
      v[i] = kAdamBeta2 * v[i] + (1.0 - kAdamBeta2) * g[i] * g[i];
      p[i] -= learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + kAdamEpsilon);
    }
  }
}

PreparedScene prepare_scene(const ScenePair& scene, Mining mining, std::size_t k, double lambda) {
  return {input_features(scene.correspondences), build_graph(scene.correspondences, mining, k, lambda),
          scene.labels_gt};
}

namespace {

double batch_step(const ModelParams& params, std::span<const PreparedScene> batch, Gradients& grads,
                  double loss_scale, Network& net) {
  std::vector<FeatureMap> inputs;
  std::vector<NeighborGraph> graphs;
  for (const auto& s : batch) {
    inputs.push_back(s.input);
    graphs.push_back(s.graph);
  }
  const auto logits = net.forward(inputs, graphs, Mode::Train);
  const double per_scene = loss_scale / static_cast<double>(batch.size());
  double loss = 0.0;
  std::vector<std::vector<double>> grad_logits;
  for (std::size_t s = 0; s < batch.size(); ++s) {
    LossResult l = weighted_bce(logits[s], batch[s].labels, per_scene);
    loss += l.value;
    grad_logits.push_back(std::move(l.grad));
  }
  net.backward(grad_logits, grads);
  (void)params;
  return loss;
}

}  // namespace

double loss_and_gradient(const ModelParams& params, std::span<const PreparedScene> batch, Gradients& grads,
                         double loss_scale) {
  Network net(params);
  return batch_step(params, batch, grads, loss_scale, net);
}

TrainResult train(std::span<const ScenePair> dataset, const TrainConfig& config,
                  std::span<const ScenePair> validation, const EpochCallback& on_epoch) {
  config.validate();
  if (dataset.empty()) throw Error(ErrorCode::EmptyDataset, "no training scenes");

  std::vector<PreparedScene> scenes;
  scenes.reserve(dataset.size());
  for (const auto& s : dataset) scenes.push_back(prepare_scene(s, config.mining, config.k, config.lambda));
  std::vector<PreparedScene> val;
  for (const auto& s : validation) val.push_back(prepare_scene(s, config.mining, config.k, config.lambda));

  TrainResult result;
  result.params = ModelParams::initialize(config.architecture, config.seed);
  AdamState adam = AdamState::zeros_like(result.params);
  std::mt19937_64 rng(config.seed ^ 0x5DEECE66Dull);
  std::vector<std::size_t> order(scenes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<PreparedScene> batch;
      for (std::size_t i = start; i < end; ++i) batch.push_back(scenes[order[i]]);
      Gradients grads = result.params.zeros_like();
      Network net(result.params);
      loss_sum += batch_step(result.params, batch, grads, 1.0, net);
      net.update_running_stats(result.params, config.bn_momentum);
      adam_step(result.params, grads, adam, config.learning_rate);
      ++batches;
    }
    EpochLog entry{epoch + 1, loss_sum / static_cast<double>(batches), std::nullopt};
    if (!val.empty()) {
      double f = 0.0;
      for (const auto& s : val) f += prf(infer(result.params, s).labels, s.labels).f_measure;
      entry.validation_f = f / static_cast<double>(val.size());
    }
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
  }
  return result;
}

Inference classify_logits(std::vector<double> logits) {
  Inference out;
  out.probabilities.reserve(logits.size());
  out.labels.reserve(logits.size());
  for (double g : logits) {
    const double p = sigmoid(g);
    out.probabilities.push_back(p);
    out.labels.push_back(p > 0.5 ? 1 : 0);
  }
  out.logits = std::move(logits);
  return out;
}

Inference infer(const ModelParams& params, const PreparedScene& scene) {
  Network net(params);
  auto logits = net.forward(std::span(&scene.input, 1), std::span(&scene.graph, 1), Mode::Infer);
  return classify_logits(std::move(logits.front()));
}

Inference infer(const ModelParams& params, std::span<const Correspondence> corrs, const InferConfig& config) {
  PreparedScene scene{input_features(corrs), build_graph(corrs, config.mining, config.k, config.lambda), {}};
  return infer(params, scene);
}

}  // namespace nmnet
