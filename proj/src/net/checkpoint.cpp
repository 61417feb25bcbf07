#include "nmnet/net/checkpoint.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "nmnet/error.hpp"

namespace nmnet {

using json = nlohmann::ordered_json;

namespace {

constexpr int kCheckpointVersion = 1;

void append_double(std::string& out, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  json header;
  header["version"] = kCheckpointVersion;
  header["architecture"] = ckpt.params.architecture().to_string();
  header["k"] = ckpt.k;
  header["lambda"] = ckpt.lambda;
  header["mining"] = to_string(ckpt.mining);
  header["seed"] = ckpt.seed;
  json blocks = json::array();
  std::size_t offset = 0;
  for (const auto& b : ckpt.params.blocks()) {
    blocks.push_back({{"layer", b.layer},
                      {"name", b.name},
                      {"shape", b.shape},
                      {"offset", offset},
                      {"trainable", b.trainable}});
    offset += b.values.size();
  }
  header["blocks"] = std::move(blocks);
  header["payload_size"] = offset;

  std::string out = header.dump();
  out.push_back('\n');
  for (const auto& b : ckpt.params.blocks()) {
    for (double v : b.values) {
      append_double(out, v);
      out.push_back('\n');
    }
  }
  return out;
}

Checkpoint parse_checkpoint(const std::string& text) {
  const auto eol = text.find('\n');
  if (eol == std::string::npos) throw Error(ErrorCode::ParseError, "checkpoint: missing header line");
  json header;
  try {
    header = json::parse(text.substr(0, eol));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("checkpoint header: ") + e.what());
  }

  Checkpoint ckpt;
  try {
    if (header.at("version").get<int>() != kCheckpointVersion) {
      throw Error(ErrorCode::VersionError, "checkpoint: unsupported version");
    }
    const Architecture arch = Architecture::parse(header.at("architecture").get<std::string>());
    ckpt.k = header.at("k").get<std::size_t>();
    ckpt.lambda = header.at("lambda").get<double>();
    ckpt.mining = mining_from_string(header.at("mining").get<std::string>());
    ckpt.seed = header.at("seed").get<std::uint64_t>();
    ckpt.params = ModelParams::initialize(arch, 0);

    const auto& blocks = header.at("blocks");
    auto& target = ckpt.params.blocks();
    if (blocks.size() != target.size()) throw Error(ErrorCode::ShapeError, "checkpoint: block count mismatch");

    std::size_t pos = eol + 1;
    std::size_t offset = 0;
    for (std::size_t i = 0; i < target.size(); ++i) {
      const auto& entry = blocks[i];
      auto& b = target[i];
      if (entry.at("layer").get<std::size_t>() != b.layer || entry.at("name").get<std::string>() != b.name ||
          entry.at("shape").get<std::vector<std::size_t>>() != b.shape ||
          entry.at("offset").get<std::size_t>() != offset || entry.at("trainable").get<bool>() != b.trainable) {
        throw Error(ErrorCode::ShapeError, "checkpoint: block " + std::to_string(i) + " does not match architecture");
      }
      for (double& v : b.values) {
        const auto end = text.find('\n', pos);
        if (end == std::string::npos) throw Error(ErrorCode::ParseError, "checkpoint: payload truncated");
        const auto res = std::from_chars(text.data() + pos, text.data() + end, v);
        if (res.ec != std::errc{} || res.ptr != text.data() + end) {
          throw Error(ErrorCode::ParseError, "checkpoint: bad payload value at index " + std::to_string(offset));
        }
        pos = end + 1;
        ++offset;
      }
    }
    if (offset != header.at("payload_size").get<std::size_t>() || pos != text.size()) {
      throw Error(ErrorCode::ParseError, "checkpoint: payload size mismatch");
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("checkpoint header: ") + e.what());
  }
  return ckpt;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  out << serialize_checkpoint(ckpt);
  if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_checkpoint(buf.str());
}

}  // namespace nmnet
