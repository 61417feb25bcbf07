#include "nmnet/net/model.hpp"

#include <cmath>
#include <optional>
#include <random>
#include <regex>
#include <sstream>

#include "nmnet/error.hpp"
#include "nmnet/net/layers.hpp"

namespace nmnet {

// ---------------------------------------------------------------------------
// Architecture

Architecture Architecture::standard() { return {}; }

Architecture Architecture::tiny() {
  Architecture a;
  a.stem.channels /= 8;
  for (auto& b : a.blocks) b.channels /= 8;
  a.head.front().channels /= 8;
  return a;
}

std::string Architecture::to_string() const {
  std::ostringstream out;
  auto conv = [&](char kind, const ConvSpec& s) { out << kind << '(' << s.channels << ", 1, " << s.width << ')'; };
  conv('C', stem);
  out << "-GP";
  for (const auto& b : blocks) {
    out << '-';
    conv('R', b);
  }
  for (const auto& h : head) {
    out << '-';
    conv('C', h);
  }
  return out.str();
}

Architecture Architecture::parse(const std::string& text) {
  auto fail = [&](const std::string& why) -> Architecture {
    throw Error(ErrorCode::ConfigError, "architecture '" + text + "': " + why);
  };
  static const std::regex token(R"(\s*(C|R)\(\s*(\d+)\s*,\s*(\d+)\s*,\s*(\d+)\s*\)\s*|\s*(GP)\s*)");
  Architecture a;
  a.blocks.clear();
  a.head.clear();
  enum { Stem, Group, Blocks, Head } state = Stem;
  std::size_t pos = 0;
  std::smatch m;
  while (pos <= text.size()) {
    const std::size_t dash = text.find('-', pos);
    const std::string part = text.substr(pos, dash == std::string::npos ? std::string::npos : dash - pos);
    if (!std::regex_match(part, m, token)) return fail("bad token '" + part + "'");
    if (m[5].matched) {
      if (state != Group) return fail("GP must follow the stem convolution");
      state = Blocks;
    } else {
      if (std::stoul(m[3].str()) != 1) return fail("kernel height must be 1");
      const ConvSpec spec{std::stoul(m[2].str()), std::stoul(m[4].str())};
      if (spec.channels == 0 || spec.width == 0) return fail("zero-sized layer");
      const bool residual = m[1].str() == "R";
      if (state == Stem) {
        if (residual) return fail("must start with a convolution");
        a.stem = spec;
        state = Group;
      } else if (state == Group) {
        return fail("expected GP after the stem");
      } else if (residual) {
        if (state == Head) return fail("residual block after head convolution");
        if (spec.width % 2 == 0) return fail("residual kernel width must be odd");
        a.blocks.push_back(spec);
      } else {
        if (spec.width != 1) return fail("head convolutions must be 1 x 1");
        a.head.push_back(spec);
        state = Head;
      }
    }
    if (dash == std::string::npos) break;
    pos = dash + 1;
  }
  if (a.head.empty() || a.head.back().channels != 1) return fail("last convolution must output one channel");
  return a;
}

std::vector<std::size_t> stage_widths(const Architecture& arch, std::size_t k) {
  std::vector<std::size_t> widths;
  std::size_t w = k;
  for (std::size_t b = 0; b < arch.blocks.size(); ++b) {
    const bool stage_end = b + 1 == arch.blocks.size() || arch.blocks[b + 1].channels != arch.blocks[b].channels;
    if (!stage_end) continue;
    if (w > 1) w = (w + 1) / 2;
    widths.push_back(w);
  }
  return widths;
}

// ---------------------------------------------------------------------------
// Parameters

namespace {

void add_block(std::vector<ParamBlock>& blocks, std::size_t layer, std::string name, std::vector<std::size_t> shape,
               double fill, bool trainable = true) {
  std::size_t count = 1;
  for (auto s : shape) count *= s;
  blocks.push_back({layer, std::move(name), std::move(shape), AlignedVector(count, fill), trainable});
}

void add_conv(std::vector<ParamBlock>& blocks, std::size_t layer, const std::string& name, std::size_t width,
              std::size_t cin, std::size_t cout) {
  add_block(blocks, layer, name + ".weight", {width, cin, cout}, 0.0);
  add_block(blocks, layer, name + ".bias", {cout}, 0.0);
}

void add_norms(std::vector<ParamBlock>& blocks, std::size_t layer, const std::string& suffix, std::size_t c) {
  add_block(blocks, layer, "in" + suffix + ".scale", {c}, 1.0);
  add_block(blocks, layer, "in" + suffix + ".shift", {c}, 0.0);
  add_block(blocks, layer, "bn" + suffix + ".scale", {c}, 1.0);
  add_block(blocks, layer, "bn" + suffix + ".shift", {c}, 0.0);
  add_block(blocks, layer, "bn" + suffix + ".running_mean", {c}, 0.0, false);
  add_block(blocks, layer, "bn" + suffix + ".running_var", {c}, 1.0, false);
}

std::size_t head_layer(const Architecture& arch, std::size_t h) { return 1 + arch.blocks.size() + h; }

}  // namespace

ModelParams ModelParams::initialize(const Architecture& arch, std::uint64_t seed) {
  ModelParams p;
  p.arch_ = arch;
  auto& b = p.blocks_;
  add_conv(b, 0, "conv", arch.stem.width, 1, arch.stem.channels);
  add_norms(b, 0, "", arch.stem.channels);
  std::size_t cin = arch.stem.channels;
  for (std::size_t i = 0; i < arch.blocks.size(); ++i) {
    const auto& s = arch.blocks[i];
    add_conv(b, i + 1, "conv1", s.width, cin, s.channels);
    add_norms(b, i + 1, "1", s.channels);
    add_conv(b, i + 1, "conv2", s.width, s.channels, s.channels);
    add_norms(b, i + 1, "2", s.channels);
    if (cin != s.channels) add_conv(b, i + 1, "skip", 1, cin, s.channels);
    cin = s.channels;
  }
  for (std::size_t h = 0; h < arch.head.size(); ++h) {
    add_conv(b, head_layer(arch, h), "conv", 1, cin, arch.head[h].channels);
    if (h + 1 < arch.head.size()) add_norms(b, head_layer(arch, h), "", arch.head[h].channels);
    cin = arch.head[h].channels;
  }

  std::mt19937_64 rng(seed);
  for (auto& block : b) {
    if (block.shape.size() != 3) continue;
    const double fan_in = static_cast<double>(block.shape[0] * block.shape[1]);
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
    for (auto& v : block.values) v = dist(rng);
  }
  return p;
}

std::size_t ModelParams::index_of(std::size_t layer, const std::string& name) const {
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    if (blocks_[i].layer == layer && blocks_[i].name == name) return i;
  }
  throw Error(ErrorCode::ShapeError, "no parameter block " + name + " in layer " + std::to_string(layer));
}

std::span<double> ModelParams::values(std::size_t layer, const std::string& name) {
  return blocks_[index_of(layer, name)].values;
}

std::span<const double> ModelParams::values(std::size_t layer, const std::string& name) const {
  return blocks_[index_of(layer, name)].values;
}

ModelParams ModelParams::zeros_like() const {
  ModelParams z = *this;
  for (auto& b : z.blocks_) std::fill(b.values.begin(), b.values.end(), 0.0);
  return z;
}

std::size_t ModelParams::parameter_count(bool trainable_only) const {
  std::size_t n = 0;
  for (const auto& b : blocks_) {
    if (b.trainable || !trainable_only) n += b.values.size();
  }
  return n;
}

bool ModelParams::all_finite() const {
  for (const auto& b : blocks_) {
    for (double v : b.values) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

FeatureMap input_features(std::span<const Correspondence> corrs) {
  FeatureMap f(corrs.size(), 4, 1);
  for (std::size_t i = 0; i < corrs.size(); ++i) {
    f(i, 0, 0) = corrs[i].kp.x;
    f(i, 1, 0) = corrs[i].kp.y;
    f(i, 2, 0) = corrs[i].kp_prime.x;
    f(i, 3, 0) = corrs[i].kp_prime.y;
  }
  return f;
}

// ---------------------------------------------------------------------------
// Network

namespace {

using Batch = std::vector<FeatureMap>;

// conv -> instance norm -> batch norm -> ReLU
struct UnitCache {
  std::vector<NormCache> in;
  NormCache bn;
  Batch out;
};

struct PoolCache {
  std::size_t input_width = 0;
  std::vector<std::vector<std::uint32_t>> argmax;
  Batch out;
};

struct BlockCache {
  UnitCache first;
  UnitCache second;
  Batch out;
  std::optional<PoolCache> pool;  ///< width halving after a stage's last block
};

}  // namespace

struct Network::Impl {
  const ModelParams* params;
  Mode mode = Mode::Infer;
  std::vector<NeighborGraph> graphs;
  Batch input;
  UnitCache stem;
  Batch grouped;
  std::vector<BlockCache> blocks;
  std::optional<PoolCache> collapse;
  std::vector<UnitCache> head;

  std::span<const double> p(std::size_t layer, const std::string& name) const { return params->values(layer, name); }

  UnitCache unit_forward(const Batch& x, std::size_t layer, const std::string& conv, const std::string& suffix,
                         std::size_t width, std::size_t padding) const {
    UnitCache c;
    Batch pre;
    pre.reserve(x.size());
    c.in.resize(x.size());
    const auto w = p(layer, conv + ".weight");
    const auto b = p(layer, conv + ".bias");
    const auto in_scale = p(layer, "in" + suffix + ".scale");
    const auto in_shift = p(layer, "in" + suffix + ".shift");
    for (std::size_t s = 0; s < x.size(); ++s) {
      pre.push_back(instance_norm(conv_over_width(x[s], w, b, width, padding), in_scale, in_shift, &c.in[s]));
    }
    const auto bn_scale = p(layer, "bn" + suffix + ".scale");
    const auto bn_shift = p(layer, "bn" + suffix + ".shift");
    if (mode == Mode::Train) {
      c.out = batch_norm_train(pre, bn_scale, bn_shift, &c.bn);
    } else {
      const auto mean = p(layer, "bn" + suffix + ".running_mean");
      const auto var = p(layer, "bn" + suffix + ".running_var");
      for (const auto& m : pre) c.out.push_back(batch_norm_infer(m, bn_scale, bn_shift, mean, var));
      c.in.clear();
    }
    for (auto& m : c.out) relu_inplace(m);
    return c;
  }

  Batch unit_backward(const Batch& x, const UnitCache& c, Batch grad, std::size_t layer, const std::string& conv,
                      const std::string& suffix, std::size_t width, std::size_t padding, Gradients& g,
                      bool need_input_grad) const {
    for (std::size_t s = 0; s < grad.size(); ++s) relu_backward_inplace(c.out[s], grad[s]);
    Batch g_in = batch_norm_backward(c.bn, p(layer, "bn" + suffix + ".scale"), grad,
                                     g.values(layer, "bn" + suffix + ".scale"),
                                     g.values(layer, "bn" + suffix + ".shift"));
    const auto in_scale = p(layer, "in" + suffix + ".scale");
    const auto kernel = p(layer, conv + ".weight");
    auto gk = g.values(layer, conv + ".weight");
    auto gb = g.values(layer, conv + ".bias");
    auto gs = g.values(layer, "in" + suffix + ".scale");
    auto gt = g.values(layer, "in" + suffix + ".shift");
    Batch out;
    out.reserve(grad.size());
    for (std::size_t s = 0; s < grad.size(); ++s) {
      const FeatureMap g_conv = instance_norm_backward(c.in[s], in_scale, g_in[s], gs, gt);
      out.push_back(conv_over_width_backward(x[s], kernel, width, padding, g_conv, gk, gb, need_input_grad));
    }
    return out;
  }

  static PoolCache pool_forward(const Batch& x, std::size_t window) {
    PoolCache c;
    c.input_width = x.front().w();
    c.argmax.resize(x.size());
    for (std::size_t s = 0; s < x.size(); ++s) c.out.push_back(max_pool_width(x[s], window, &c.argmax[s]));
    return c;
  }

  static Batch pool_backward(const PoolCache& c, const Batch& grad) {
    Batch out;
    for (std::size_t s = 0; s < grad.size(); ++s) {
      out.push_back(max_pool_width_backward(grad[s], c.input_width, c.argmax[s]));
    }
    return out;
  }

  const Batch& block_input(std::size_t b) const {
    if (b == 0) return grouped;
    const auto& prev = blocks[b - 1];
    return prev.pool ? prev.pool->out : prev.out;
  }

  const Batch& head_input() const {
    if (collapse) return collapse->out;
    return blocks.empty() ? grouped : block_input(blocks.size());
  }

  std::vector<std::vector<double>> forward(std::span<const FeatureMap> inputs, std::span<const NeighborGraph> gs,
                                           Mode m) {
    if (inputs.size() != gs.size() || inputs.empty()) {
      throw Error(ErrorCode::ShapeError, "forward needs one graph per scene and at least one scene");
    }
    mode = m;
    const Architecture& arch = params->architecture();
    graphs.assign(gs.begin(), gs.end());
    input.assign(inputs.begin(), inputs.end());
    for (std::size_t s = 0; s < input.size(); ++s) {
      if (input[s].w() != arch.stem.width || input[s].c() != 1 || input[s].n() < 2 ||
          graphs[s].size() != input[s].n()) {
        throw Error(ErrorCode::ShapeError, "scene input must be N x 4 x 1 with N >= 2 and a matching graph");
      }
    }

    stem = unit_forward(input, 0, "conv", "", arch.stem.width, 0);
    grouped.clear();
    for (std::size_t s = 0; s < input.size(); ++s) grouped.push_back(group_features(stem.out[s], graphs[s]));

    blocks.assign(arch.blocks.size(), {});
    for (std::size_t b = 0; b < arch.blocks.size(); ++b) {
      const auto& spec = arch.blocks[b];
      const Batch& x = block_input(b);
      const std::size_t layer = b + 1;
      const std::size_t pad = (spec.width - 1) / 2;
      BlockCache& c = blocks[b];
      c.first = unit_forward(x, layer, "conv1", "1", spec.width, pad);
      c.second = unit_forward(c.first.out, layer, "conv2", "2", spec.width, pad);
      const bool project = x.front().c() != spec.channels;
      c.out = c.second.out;
      for (std::size_t s = 0; s < x.size(); ++s) {
        if (project) {
          c.out[s].matrix() += conv_over_width(x[s], p(layer, "skip.weight"), p(layer, "skip.bias"), 1, 0).matrix();
        } else {
          c.out[s].matrix() += x[s].matrix();
        }
      }
      const bool stage_end = b + 1 == arch.blocks.size() || arch.blocks[b + 1].channels != spec.channels;
      if (stage_end && c.out.front().w() > 1) c.pool = pool_forward(c.out, 2);
      if (mode == Mode::Infer) {
        // Nothing upstream is needed again.
        if (c.pool) c.out.clear();
        c.first = {};
      }
    }
    collapse.reset();
    {
      const Batch& last = blocks.empty() ? grouped : block_input(blocks.size());
      if (last.front().w() > 1) collapse = pool_forward(last, last.front().w());
    }

    head.assign(arch.head.size() > 0 ? arch.head.size() - 1 : 0, {});
    const Batch* x = &head_input();
    for (std::size_t h = 0; h + 1 < arch.head.size(); ++h) {
      head[h] = unit_forward(*x, head_layer(arch, h), "conv", "", 1, 0);
      x = &head[h].out;
    }
    const std::size_t last_layer = head_layer(arch, arch.head.size() - 1);
    std::vector<std::vector<double>> logits;
    for (const auto& m_in : *x) {
      const FeatureMap out = conv_over_width(m_in, p(last_layer, "conv.weight"), p(last_layer, "conv.bias"), 1, 0);
      logits.emplace_back(out.data().begin(), out.data().end());
    }
    return logits;
  }

  void backward(std::span<const std::vector<double>> grad_logits, Gradients& g) {
    if (mode != Mode::Train) throw Error(ErrorCode::ShapeError, "backward needs a Train-mode forward");
    if (grad_logits.size() != input.size()) throw Error(ErrorCode::ShapeError, "one logit gradient per scene");
    const Architecture& arch = params->architecture();

    const std::size_t last_layer = head_layer(arch, arch.head.size() - 1);
    const Batch& last_in = head.empty() ? head_input() : head.back().out;
    Batch grad;
    for (std::size_t s = 0; s < input.size(); ++s) {
      if (grad_logits[s].size() != input[s].n()) throw Error(ErrorCode::ShapeError, "logit gradient length");
      FeatureMap go(input[s].n(), 1, 1);
      std::copy(grad_logits[s].begin(), grad_logits[s].end(), go.data().begin());
      grad.push_back(conv_over_width_backward(last_in[s], p(last_layer, "conv.weight"), 1, 0, go,
                                              g.values(last_layer, "conv.weight"), g.values(last_layer, "conv.bias")));
    }
    for (std::size_t h = head.size(); h-- > 0;) {
      const Batch& x = h == 0 ? head_input() : head[h - 1].out;
      grad = unit_backward(x, head[h], std::move(grad), head_layer(arch, h), "conv", "", 1, 0, g, true);
    }
    if (collapse) grad = pool_backward(*collapse, grad);

    for (std::size_t b = arch.blocks.size(); b-- > 0;) {
      const auto& spec = arch.blocks[b];
      const BlockCache& c = blocks[b];
      const Batch& x = block_input(b);
      const std::size_t layer = b + 1;
      const std::size_t pad = (spec.width - 1) / 2;
      if (c.pool) grad = pool_backward(*c.pool, grad);
      Batch skip_grad;
      if (x.front().c() != spec.channels) {
        for (std::size_t s = 0; s < x.size(); ++s) {
          skip_grad.push_back(conv_over_width_backward(x[s], p(layer, "skip.weight"), 1, 0, grad[s],
                                                       g.values(layer, "skip.weight"), g.values(layer, "skip.bias")));
        }
      } else {
        skip_grad = grad;
      }
      Batch g_mid = unit_backward(c.first.out, c.second, std::move(grad), layer, "conv2", "2", spec.width, pad, g, true);
      grad = unit_backward(x, c.first, std::move(g_mid), layer, "conv1", "1", spec.width, pad, g, true);
      for (std::size_t s = 0; s < grad.size(); ++s) grad[s].matrix() += skip_grad[s].matrix();
    }

    Batch g_stem;
    for (std::size_t s = 0; s < grad.size(); ++s) g_stem.push_back(group_features_backward(grad[s], graphs[s]));
    unit_backward(input, stem, std::move(g_stem), 0, "conv", "", arch.stem.width, 0, g, false);
  }

  void update_running(ModelParams& target, double momentum) const {
    if (mode != Mode::Train) return;
    const Architecture& arch = params->architecture();
    auto fold = [&](const UnitCache& c, std::size_t layer, const std::string& suffix) {
      auto mean = target.values(layer, "bn" + suffix + ".running_mean");
      auto var = target.values(layer, "bn" + suffix + ".running_var");
      for (std::size_t ch = 0; ch < mean.size(); ++ch) {
        mean[ch] = momentum * mean[ch] + (1.0 - momentum) * c.bn.mean[ch];
        var[ch] = momentum * var[ch] + (1.0 - momentum) * c.bn.var[ch];
      }
    };
    fold(stem, 0, "");
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      fold(blocks[b].first, b + 1, "1");
      fold(blocks[b].second, b + 1, "2");
    }
    for (std::size_t h = 0; h < head.size(); ++h) fold(head[h], head_layer(arch, h), "");
  }
};

Network::Network(const ModelParams& params) : impl_(std::make_unique<Impl>()) { impl_->params = &params; }
Network::~Network() = default;
Network::Network(Network&&) noexcept = default;
Network& Network::operator=(Network&&) noexcept = default;

std::vector<std::vector<double>> Network::forward(std::span<const FeatureMap> inputs,
                                                  std::span<const NeighborGraph> graphs, Mode mode) {
  return impl_->forward(inputs, graphs, mode);
}

void Network::backward(std::span<const std::vector<double>> grad_logits, Gradients& grads) {
  impl_->backward(grad_logits, grads);
}

void Network::update_running_stats(ModelParams& params, double momentum) const {
  impl_->update_running(params, momentum);
}

}  // namespace nmnet
