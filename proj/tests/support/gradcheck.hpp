#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "nmnet/net/train.hpp"

namespace nmnet::testing {

struct BlockCheck {
  std::string name;
  std::size_t layer = 0;
  double max_relative_error = 0.0;
};

/// Relative error with a floor so that entries whose true gradient is at
/// round-off level do not dominate: |a - n| / max(|a|, |n|, floor).
inline double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Central differences over every trainable value of every block.
inline std::vector<BlockCheck> gradient_check(const ModelParams& params, std::span<const PreparedScene> batch,
                                              double step = 1e-5, double floor = 1e-6) {
  Gradients analytic = params.zeros_like();
  loss_and_gradient(params, batch, analytic);

  ModelParams probe = params;
  std::vector<BlockCheck> out;
  for (std::size_t b = 0; b < probe.blocks().size(); ++b) {
    auto& block = probe.blocks()[b];
    if (!block.trainable) continue;
    BlockCheck check{block.name, block.layer, 0.0};
    for (std::size_t i = 0; i < block.values.size(); ++i) {
      const double saved = block.values[i];
      Gradients scratch = probe.zeros_like();
      block.values[i] = saved + step;
      const double up = loss_and_gradient(probe, batch, scratch);
      block.values[i] = saved - step;
      const double down = loss_and_gradient(probe, batch, scratch);
      block.values[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      check.max_relative_error =
          std::max(check.max_relative_error, relative_error(analytic.blocks()[b].values[i], numeric, floor));
    }
    out.push_back(check);
  }
  return out;
}

}  // namespace nmnet::testing
