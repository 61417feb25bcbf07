#pragma once

#include <cstdint>
#include <vector>

#include "nmnet/eval.hpp"
#include "nmnet/net/checkpoint.hpp"
#include "nmnet/ransac.hpp"

namespace nmnet {

/// Trained network; the checkpoint's k, lambda and mining mode are used.
Selector nmnet_selector(Checkpoint ckpt);

/// Hand-crafted rule: sum of compatibility scores to the k best neighbors
/// (query excluded) above `threshold`.
Selector score_sum_selector(double threshold, std::size_t k = 8, double lambda = kDefaultLambda);

/// RANSAC labels. Each scene runs with derive_seed(config.seed, scene.seed).
Selector ransac_selector(RansacConfig config);

/// 5.0, 5.1, ..., 7.9.
std::vector<double> score_sum_thresholds();

/// "nmnet" or "nmnet_sp" depending on the mining mode.
const char* selector_name(Mining mining);

}  // namespace nmnet
