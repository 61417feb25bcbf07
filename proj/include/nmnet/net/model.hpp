#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "nmnet/compat.hpp"
#include "nmnet/geom.hpp"
#include "nmnet/net/feature_map.hpp"

namespace nmnet {

/// One convolution: n output channels, 1 x width kernel.
struct ConvSpec {
  std::size_t channels = 0;
  std::size_t width = 1;
  friend bool operator==(const ConvSpec&, const ConvSpec&) = default;
};

/// Layer string of the form
///   C(32, 1, 4)-GP-R(32, 1, 3)-...-R(256, 1, 3)-C(256, 1, 1)-C(1, 1, 1)
/// i.e. a stem convolution, the grouping module, residual blocks and a head
/// whose last convolution produces the logit.
struct Architecture {
  ConvSpec stem{32, 4};
  std::vector<ConvSpec> blocks{{32, 3}, {32, 3}, {64, 3}, {64, 3}, {128, 3}, {128, 3}, {256, 3}, {256, 3}};
  std::vector<ConvSpec> head{{256, 1}, {1, 1}};

  /// Full-size network.
  static Architecture standard();
  /// Channels divided by 8; used to keep finite-difference checks fast.
  static Architecture tiny();

  std::string to_string() const;
  /// Throws ConfigError on malformed strings.
  static Architecture parse(const std::string& text);

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

/// A named parameter tensor. Layer 0 is the stem, layers 1..B the residual
/// blocks, then one layer per head convolution.
struct ParamBlock {
  std::size_t layer = 0;
  std::string name;
  std::vector<std::size_t> shape;
  AlignedVector values;
  bool trainable = true;  ///< false for batch-norm running statistics

  friend bool operator==(const ParamBlock&, const ParamBlock&) = default;
};

class ModelParams {
 public:
  ModelParams() = default;

  /// He-normal convolution kernels, zero biases, unit scales, zero shifts.
  static ModelParams initialize(const Architecture& arch, std::uint64_t seed);

  const Architecture& architecture() const { return arch_; }
  std::vector<ParamBlock>& blocks() { return blocks_; }
  const std::vector<ParamBlock>& blocks() const { return blocks_; }

  /// Throws ShapeError if absent.
  std::size_t index_of(std::size_t layer, const std::string& name) const;
  std::span<double> values(std::size_t layer, const std::string& name);
  std::span<const double> values(std::size_t layer, const std::string& name) const;

  /// Same addressing, every value zero.
  ModelParams zeros_like() const;
  std::size_t parameter_count(bool trainable_only = true) const;
  bool all_finite() const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;

 private:
  Architecture arch_;
  std::vector<ParamBlock> blocks_;
};

/// Gradients share the parameter addressing.
using Gradients = ModelParams;

/// Raw per-correspondence input: width 4 (x, y, x', y'), one channel.
FeatureMap input_features(std::span<const Correspondence> corrs);

enum class Mode { Train, Infer };

/// Forward/backward over a batch of scenes. Batch-norm statistics pool every
/// scene of the batch in Train mode and come from the running averages in
/// Infer mode. Holds a reference to the parameters; they must outlive it.
class Network {
 public:
  explicit Network(const ModelParams& params);
  ~Network();
  Network(Network&&) noexcept;
  Network& operator=(Network&&) noexcept;

  /// One logit vector per scene. In Train mode the activations needed by
  /// backward() are retained.
  std::vector<std::vector<double>> forward(std::span<const FeatureMap> inputs,
                                           std::span<const NeighborGraph> graphs, Mode mode);

  /// Gradients of sum_s dL/dlogit_s . logit_s for the last Train forward,
  /// accumulated into grads.
  void backward(std::span<const std::vector<double>> grad_logits, Gradients& grads);

  /// Folds the last Train forward's batch statistics into the running
  /// averages: running = momentum * running + (1 - momentum) * batch.
  void update_running_stats(ModelParams& params, double momentum) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Neighbor width after every stage-wise halving for a graph of width k,
/// one entry per stage; the head always sees width 1.
std::vector<std::size_t> stage_widths(const Architecture& arch, std::size_t k);

}  // namespace nmnet
