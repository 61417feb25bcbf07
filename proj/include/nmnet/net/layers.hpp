#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "nmnet/compat.hpp"
#include "nmnet/geom.hpp"
#include "nmnet/net/feature_map.hpp"

namespace nmnet {

inline constexpr double kNormEpsilon = 1e-5;
inline constexpr double kLogitClamp = 30.0;

// ---------------------------------------------------------------------------
// Convolution along the neighbor axis. The kernel is laid out
// [tap][in channel][out channel]; output width is W + 2*padding - width + 1.
// Nothing mixes across correspondences.

FeatureMap conv_over_width(const FeatureMap& input, std::span<const double> kernel,
                           std::span<const double> bias, std::size_t kernel_width,
                           std::size_t padding);

/// Accumulates into grad_kernel / grad_bias; returns the input gradient.
FeatureMap conv_over_width_backward(const FeatureMap& input, std::span<const double> kernel,
                                    std::size_t kernel_width, std::size_t padding,
                                    const FeatureMap& grad_output, std::span<double> grad_kernel,
                                    std::span<double> grad_bias, bool need_input_grad = true);

// ---------------------------------------------------------------------------
// Normalization. Instance norm uses the N and W axes of one scene; batch norm
// pools the same axes over every scene of a batch.

struct NormCache {
  std::vector<FeatureMap> normalized;  ///< x_hat, one per scene
  std::vector<double> mean;            ///< per channel
  std::vector<double> var;             ///< per channel, biased
  std::vector<double> inv_std;         ///< per channel
};

FeatureMap instance_norm(const FeatureMap& input, std::span<const double> scale,
                         std::span<const double> shift, NormCache* cache = nullptr);

FeatureMap instance_norm_backward(const NormCache& cache, std::span<const double> scale,
                                  const FeatureMap& grad_output, std::span<double> grad_scale,
                                  std::span<double> grad_shift);

std::vector<FeatureMap> batch_norm_train(std::span<const FeatureMap> inputs, std::span<const double> scale,
                                         std::span<const double> shift, NormCache* cache = nullptr);

std::vector<FeatureMap> batch_norm_backward(const NormCache& cache, std::span<const double> scale,
                                            std::span<const FeatureMap> grad_outputs,
                                            std::span<double> grad_scale, std::span<double> grad_shift);

/// Frozen statistics.
FeatureMap batch_norm_infer(const FeatureMap& input, std::span<const double> scale,
                            std::span<const double> shift, std::span<const double> running_mean,
                            std::span<const double> running_var);

// ---------------------------------------------------------------------------

void relu_inplace(FeatureMap& x);
/// Masks grad by output > 0.
void relu_backward_inplace(const FeatureMap& output, FeatureMap& grad);

/// Row i of the result holds the features of graph.nodes(i), in graph order.
/// Input must have width 1.
FeatureMap group_features(const FeatureMap& features, const NeighborGraph& graph);
FeatureMap group_features_backward(const FeatureMap& grad_output, const NeighborGraph& graph);

/// Max over consecutive windows along the width axis; output width is
/// ceil(W / window). argmax records the winning slot of each output entry.
FeatureMap max_pool_width(const FeatureMap& input, std::size_t window, std::vector<std::uint32_t>* argmax);
FeatureMap max_pool_width_backward(const FeatureMap& grad_output, std::size_t input_width,
                                   const std::vector<std::uint32_t>& argmax);

// ---------------------------------------------------------------------------

struct LossResult {
  double value = 0.0;
  std::vector<double> grad;  ///< d value / d logit
};

/// Class-balanced binary cross-entropy on logits clamped to +-30:
/// (scale / N) * sum alpha_i * H(y_i, sigmoid(g_i)) with alpha = N / (2 N_pos)
/// for positives and N / (2 N_neg) for negatives; alpha = 1 if a class is
/// missing.
LossResult weighted_bce(std::span<const double> logits, const LabelVector& labels, double scale = 1.0);

double sigmoid(double x);

}  // namespace nmnet
