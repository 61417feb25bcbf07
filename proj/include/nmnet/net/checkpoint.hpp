#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "nmnet/net/model.hpp"
#include "nmnet/net/train.hpp"

namespace nmnet {

/// A trained model together with the settings it must be run with.
struct Checkpoint {
  ModelParams params;
  std::size_t k = 8;
  double lambda = kDefaultLambda;
  Mining mining = Mining::Compatibility;
  std::uint64_t seed = 0;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

/// First line: JSON header with the architecture string, k, lambda, mining,
/// seed and one {layer, name, shape, offset, trainable} entry per block.
/// Following lines: the flat payload, one value per line in shortest
/// round-trip form, so reading back is exact.
std::string serialize_checkpoint(const Checkpoint& ckpt);
/// Throws ParseError / ShapeError.
Checkpoint parse_checkpoint(const std::string& text);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace nmnet
