#include "nmnet/pipeline.hpp"

#include <memory>

#include "nmnet/compat.hpp"
#include "nmnet/synth.hpp"

namespace nmnet {

Selector nmnet_selector(Checkpoint ckpt) {
  auto shared = std::make_shared<const Checkpoint>(std::move(ckpt));
  return [shared](const ScenePair& scene) {
    const InferConfig cfg{shared->k, shared->lambda, shared->mining};
    return infer(shared->params, scene.correspondences, cfg).labels;
  };
}

Selector score_sum_selector(double threshold, std::size_t k, double lambda) {
  return [=](const ScenePair& scene) {
    const ScoreMatrix m = score_matrix(scene.correspondences, lambda);
    return score_sum_classifier(mine_cs_knn(m, k, false), m, threshold);
  };
}

Selector ransac_selector(RansacConfig config) {
  return [config](const ScenePair& scene) {
    RansacConfig c = config;
    c.seed = derive_seed(config.seed, scene.seed);
    return ransac(scene.correspondences, c).labels;
  };
}

std::vector<double> score_sum_thresholds() {
  std::vector<double> out;
  for (int i = 50; i <= 79; ++i) out.push_back(i / 10.0);
  return out;
}

const char* selector_name(Mining mining) { return mining == Mining::Compatibility ? "nmnet" : "nmnet_sp"; }

}  // namespace nmnet
