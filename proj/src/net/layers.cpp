#include "nmnet/net/layers.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "nmnet/error.hpp"

namespace nmnet {

namespace {

void shape_error(const std::string& what) { throw Error(ErrorCode::ShapeError, what); }

std::size_t conv_output_width(std::size_t in_w, std::size_t kernel_width, std::size_t padding) {
  if (kernel_width == 0 || kernel_width > in_w + 2 * padding) {
    shape_error("kernel width " + std::to_string(kernel_width) + " exceeds padded input width");
  }
  return in_w + 2 * padding - kernel_width + 1;
}

// Output slots x whose source slot x + tap - padding lies inside the input.
struct TapRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::ptrdiff_t offset = 0;
  bool empty() const { return begin >= end; }
};

TapRange tap_range(std::size_t tap, std::size_t padding, std::size_t in_w, std::size_t out_w) {
  TapRange r;
  r.offset = static_cast<std::ptrdiff_t>(tap) - static_cast<std::ptrdiff_t>(padding);
  const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -r.offset);
  const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(out_w),
                                                     static_cast<std::ptrdiff_t>(in_w) - r.offset);
  r.begin = static_cast<std::size_t>(lo);
  r.end = static_cast<std::size_t>(std::max(lo, hi));
  return r;
}

ConstMatrixView kernel_tap(std::span<const double> kernel, std::size_t tap, std::size_t cin, std::size_t cout) {
  return {kernel.data() + tap * cin * cout, static_cast<Eigen::Index>(cin), static_cast<Eigen::Index>(cout)};
}

// Statistics over the N and W axes of every map in `inputs`.
void group_stats(std::span<const FeatureMap> inputs, NormCache& cache) {
  const std::size_t c = inputs.front().c();
  cache.mean.assign(c, 0.0);
  cache.var.assign(c, 0.0);
  cache.inv_std.assign(c, 0.0);
  std::size_t count = 0;
  for (const auto& in : inputs) {
    for (std::size_t r = 0; r < in.rows(); ++r) {
      const double* row = in.data().data() + r * c;
      for (std::size_t ch = 0; ch < c; ++ch) cache.mean[ch] += row[ch];
    }
    count += in.rows();
  }
  for (auto& m : cache.mean) m /= static_cast<double>(count);
  for (const auto& in : inputs) {
    for (std::size_t r = 0; r < in.rows(); ++r) {
      const double* row = in.data().data() + r * c;
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double d = row[ch] - cache.mean[ch];
        cache.var[ch] += d * d;
      }
    }
  }
  for (std::size_t ch = 0; ch < c; ++ch) {
    cache.var[ch] /= static_cast<double>(count);
    cache.inv_std[ch] = 1.0 / std::sqrt(cache.var[ch] + kNormEpsilon);
  }
}

std::vector<FeatureMap> normalize_group(std::span<const FeatureMap> inputs, std::span<const double> scale,
                                        std::span<const double> shift, NormCache* cache) {
  if (inputs.empty()) shape_error("normalization over an empty group");
  const std::size_t c = inputs.front().c();
  for (const auto& in : inputs) {
    if (in.c() != c) shape_error("channel mismatch inside a normalization group");
  }
  if (scale.size() != c || shift.size() != c) shape_error("normalization parameters do not match channels");
  NormCache local;
  NormCache& st = cache ? *cache : local;
  group_stats(inputs, st);
  st.normalized.clear();
  std::vector<FeatureMap> outs;
  outs.reserve(inputs.size());
  for (const auto& in : inputs) {
    FeatureMap xhat(in.n(), in.w(), c);
    FeatureMap out(in.n(), in.w(), c);
    for (std::size_t r = 0; r < in.rows(); ++r) {
      const double* src = in.data().data() + r * c;
      double* xh = xhat.data().data() + r * c;
      double* dst = out.data().data() + r * c;
      for (std::size_t ch = 0; ch < c; ++ch) {
        xh[ch] = (src[ch] - st.mean[ch]) * st.inv_std[ch];
        dst[ch] = scale[ch] * xh[ch] + shift[ch];
      }
    }
    if (cache) st.normalized.push_back(std::move(xhat));
    outs.push_back(std::move(out));
  }
  return outs;
}

std::vector<FeatureMap> normalize_group_backward(const NormCache& cache, std::span<const double> scale,
                                                 std::span<const FeatureMap> grad_outputs,
                                                 std::span<double> grad_scale, std::span<double> grad_shift) {
  if (grad_outputs.size() != cache.normalized.size()) shape_error("normalization cache does not match gradients");
  const std::size_t c = cache.mean.size();
  std::vector<double> sum_g(c, 0.0), sum_gx(c, 0.0);
  std::size_t count = 0;
  for (std::size_t s = 0; s < grad_outputs.size(); ++s) {
    const auto& g = grad_outputs[s];
    const auto& xh = cache.normalized[s];
    if (!g.same_shape(xh)) shape_error("normalization gradient shape mismatch");
    for (std::size_t r = 0; r < g.rows(); ++r) {
      const double* gr = g.data().data() + r * c;
      const double* xr = xh.data().data() + r * c;
      for (std::size_t ch = 0; ch < c; ++ch) {
        sum_g[ch] += gr[ch];
        sum_gx[ch] += gr[ch] * xr[ch];
      }
    }
    count += g.rows();
  }
  for (std::size_t ch = 0; ch < c; ++ch) {
    grad_scale[ch] += sum_gx[ch];
    grad_shift[ch] += sum_g[ch];
  }
  // dx = gamma * inv_std * (g - mean(g) - x_hat * mean(g * x_hat))
  const double inv_count = 1.0 / static_cast<double>(count);
  std::vector<FeatureMap> grads;
  grads.reserve(grad_outputs.size());
  for (std::size_t s = 0; s < grad_outputs.size(); ++s) {
    const auto& g = grad_outputs[s];
    const auto& xh = cache.normalized[s];
    FeatureMap dx(g.n(), g.w(), c);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      const double* gr = g.data().data() + r * c;
      const double* xr = xh.data().data() + r * c;
      double* out = dx.data().data() + r * c;
      for (std::size_t ch = 0; ch < c; ++ch) {
        out[ch] = scale[ch] * cache.inv_std[ch] *
                  (gr[ch] - sum_g[ch] * inv_count - xr[ch] * sum_gx[ch] * inv_count);
      }
    }
    grads.push_back(std::move(dx));
  }
  return grads;
}

}  // namespace

FeatureMap conv_over_width(const FeatureMap& input, std::span<const double> kernel, std::span<const double> bias,
                           std::size_t kernel_width, std::size_t padding) {
  const std::size_t cin = input.c();
  const std::size_t cout = bias.size();
  if (kernel.size() != kernel_width * cin * cout) shape_error("kernel size does not match [width][cin][cout]");
  const std::size_t out_w = conv_output_width(input.w(), kernel_width, padding);
  FeatureMap out(input.n(), out_w, cout);
  {
    auto m = out.matrix();
    const Eigen::Map<const Eigen::RowVectorXd> b(bias.data(), static_cast<Eigen::Index>(cout));
    m.rowwise() = b;
  }
  RowMatrix tmp;
  for (std::size_t t = 0; t < kernel_width; ++t) {
    const TapRange range = tap_range(t, padding, input.w(), out_w);
    if (range.empty()) continue;
    const auto k = kernel_tap(kernel, t, cin, cout);
    if (range.offset == 0 && range.begin == 0 && range.end == out_w && out_w == input.w()) {
      out.matrix().noalias() += input.matrix() * k;
      continue;
    }
    tmp.noalias() = input.matrix() * k;
    for (std::size_t i = 0; i < input.n(); ++i) {
      for (std::size_t x = range.begin; x < range.end; ++x) {
        const std::size_t src = (i * input.w() + static_cast<std::size_t>(static_cast<std::ptrdiff_t>(x) + range.offset));
        double* dst = out.row(i, x);
        const double* s = tmp.data() + src * cout;
        for (std::size_t ch = 0; ch < cout; ++ch) dst[ch] += s[ch];
      }
    }
  }
  return out;
}

FeatureMap conv_over_width_backward(const FeatureMap& input, std::span<const double> kernel,
                                    std::size_t kernel_width, std::size_t padding, const FeatureMap& grad_output,
                                    std::span<double> grad_kernel, std::span<double> grad_bias,
                                    bool need_input_grad) {
  const std::size_t cin = input.c();
  const std::size_t cout = grad_output.c();
  const std::size_t out_w = conv_output_width(input.w(), kernel_width, padding);
  if (grad_output.n() != input.n() || grad_output.w() != out_w || kernel.size() != kernel_width * cin * cout ||
      grad_kernel.size() != kernel.size() || grad_bias.size() != cout) {
    shape_error("convolution backward shape mismatch");
  }
  {
    Eigen::Map<Eigen::RowVectorXd> gb(grad_bias.data(), static_cast<Eigen::Index>(cout));
    gb += grad_output.matrix().colwise().sum();
  }
  FeatureMap grad_in;
  if (need_input_grad) grad_in = FeatureMap(input.n(), input.w(), cin);
  RowMatrix shifted_in, shifted_grad;
  for (std::size_t t = 0; t < kernel_width; ++t) {
    const TapRange range = tap_range(t, padding, input.w(), out_w);
    if (range.empty()) continue;
    const auto k = kernel_tap(kernel, t, cin, cout);
    MatrixView gk(grad_kernel.data() + t * cin * cout, static_cast<Eigen::Index>(cin),
                  static_cast<Eigen::Index>(cout));
    if (range.offset == 0 && range.begin == 0 && range.end == out_w && out_w == input.w()) {
      gk.noalias() += input.matrix().transpose() * grad_output.matrix();
      if (need_input_grad) grad_in.matrix().noalias() += grad_output.matrix() * k.transpose();
      continue;
    }
    // Gather the input rows each output slot reads through this tap; rows
    // reading padding stay zero.
    shifted_in.setZero(static_cast<Eigen::Index>(grad_output.rows()), static_cast<Eigen::Index>(cin));
    for (std::size_t i = 0; i < input.n(); ++i) {
      for (std::size_t x = range.begin; x < range.end; ++x) {
        const std::size_t src = i * input.w() + static_cast<std::size_t>(static_cast<std::ptrdiff_t>(x) + range.offset);
        std::copy_n(input.data().data() + src * cin, cin, shifted_in.data() + (i * out_w + x) * cin);
      }
    }
    gk.noalias() += shifted_in.transpose() * grad_output.matrix();
    if (!need_input_grad) continue;
    shifted_grad.noalias() = grad_output.matrix() * k.transpose();
    for (std::size_t i = 0; i < input.n(); ++i) {
      for (std::size_t x = range.begin; x < range.end; ++x) {
        const std::size_t dst = i * input.w() + static_cast<std::size_t>(static_cast<std::ptrdiff_t>(x) + range.offset);
        double* d = grad_in.data().data() + dst * cin;
        const double* s = shifted_grad.data() + (i * out_w + x) * cin;
        for (std::size_t ch = 0; ch < cin; ++ch) d[ch] += s[ch];
      }
    }
  }
  return grad_in;
}

FeatureMap instance_norm(const FeatureMap& input, std::span<const double> scale, std::span<const double> shift,
                         NormCache* cache) {
  if (input.rows() < 2) shape_error("instance norm needs N*W > 1");
  return std::move(normalize_group(std::span(&input, 1), scale, shift, cache).front());
}

FeatureMap instance_norm_backward(const NormCache& cache, std::span<const double> scale,
                                  const FeatureMap& grad_output, std::span<double> grad_scale,
                                  std::span<double> grad_shift) {
  return std::move(
      normalize_group_backward(cache, scale, std::span(&grad_output, 1), grad_scale, grad_shift).front());
}

std::vector<FeatureMap> batch_norm_train(std::span<const FeatureMap> inputs, std::span<const double> scale,
                                         std::span<const double> shift, NormCache* cache) {
  return normalize_group(inputs, scale, shift, cache);
}

std::vector<FeatureMap> batch_norm_backward(const NormCache& cache, std::span<const double> scale,
                                            std::span<const FeatureMap> grad_outputs, std::span<double> grad_scale,
                                            std::span<double> grad_shift) {
  return normalize_group_backward(cache, scale, grad_outputs, grad_scale, grad_shift);
}

FeatureMap batch_norm_infer(const FeatureMap& input, std::span<const double> scale, std::span<const double> shift,
                            std::span<const double> running_mean, std::span<const double> running_var) {
  const std::size_t c = input.c();
  if (scale.size() != c || shift.size() != c || running_mean.size() != c || running_var.size() != c) {
    shape_error("batch norm parameters do not match channels");
  }
  std::vector<double> mul(c), add(c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    mul[ch] = scale[ch] / std::sqrt(running_var[ch] + kNormEpsilon);
    add[ch] = shift[ch] - running_mean[ch] * mul[ch];
  }
  FeatureMap out(input.n(), input.w(), c);
  for (std::size_t r = 0; r < input.rows(); ++r) {
    const double* src = input.data().data() + r * c;
    double* dst = out.data().data() + r * c;
    for (std::size_t ch = 0; ch < c; ++ch) dst[ch] = src[ch] * mul[ch] + add[ch];
  }
  return out;
}

void relu_inplace(FeatureMap& x) {
  for (auto& v : x.data()) v = v > 0.0 ? v : 0.0;
}

void relu_backward_inplace(const FeatureMap& output, FeatureMap& grad) {
  if (!output.same_shape(grad)) shape_error("relu gradient shape mismatch");
  const auto& out = output.data();
  auto& g = grad.data();
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(out[i] > 0.0)) g[i] = 0.0;
  }
}

FeatureMap group_features(const FeatureMap& features, const NeighborGraph& graph) {
  if (features.w() != 1) shape_error("grouping expects width-1 features");
  if (graph.size() != features.n()) shape_error("graph and features cover different sets");
  const std::size_t k = graph.width();
  const std::size_t c = features.c();
  FeatureMap out(features.n(), k, c);
  for (std::size_t i = 0; i < features.n(); ++i) {
    const auto nodes = graph.nodes(i);
    for (std::size_t p = 0; p < k; ++p) {
      if (nodes[p] >= features.n()) shape_error("graph node index out of range");
      std::copy_n(features.row(nodes[p], 0), c, out.row(i, p));
    }
  }
  return out;
}

FeatureMap group_features_backward(const FeatureMap& grad_output, const NeighborGraph& graph) {
  if (graph.size() != grad_output.n() || graph.width() != grad_output.w()) {
    shape_error("grouping gradient does not match graph");
  }
  const std::size_t c = grad_output.c();
  FeatureMap grad(grad_output.n(), 1, c);
  for (std::size_t i = 0; i < grad_output.n(); ++i) {
    const auto nodes = graph.nodes(i);
    for (std::size_t p = 0; p < graph.width(); ++p) {
      double* dst = grad.row(nodes[p], 0);
      const double* src = grad_output.row(i, p);
      for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += src[ch];
    }
  }
  return grad;
}

FeatureMap max_pool_width(const FeatureMap& input, std::size_t window, std::vector<std::uint32_t>* argmax) {
  if (window == 0) shape_error("pooling window must be positive");
  const std::size_t c = input.c();
  const std::size_t out_w = (input.w() + window - 1) / window;
  FeatureMap out(input.n(), out_w, c);
  if (argmax) argmax->assign(out.size(), 0);
  for (std::size_t i = 0; i < input.n(); ++i) {
    for (std::size_t x = 0; x < out_w; ++x) {
      const std::size_t first = x * window;
      const std::size_t last = std::min(input.w(), first + window);
      double* dst = out.row(i, x);
      std::copy_n(input.row(i, first), c, dst);
      std::uint32_t* arg = argmax ? argmax->data() + (i * out_w + x) * c : nullptr;
      if (arg) std::fill_n(arg, c, static_cast<std::uint32_t>(first));
      for (std::size_t s = first + 1; s < last; ++s) {
        const double* src = input.row(i, s);
        for (std::size_t ch = 0; ch < c; ++ch) {
          if (src[ch] > dst[ch]) {
            dst[ch] = src[ch];
            if (arg) arg[ch] = static_cast<std::uint32_t>(s);
          }
        }
      }
    }
  }
  return out;
}

FeatureMap max_pool_width_backward(const FeatureMap& grad_output, std::size_t input_width,
                                   const std::vector<std::uint32_t>& argmax) {
  if (argmax.size() != grad_output.size()) shape_error("pooling cache does not match gradient");
  const std::size_t c = grad_output.c();
  FeatureMap grad(grad_output.n(), input_width, c);
  for (std::size_t i = 0; i < grad_output.n(); ++i) {
    for (std::size_t x = 0; x < grad_output.w(); ++x) {
      const double* src = grad_output.row(i, x);
      const std::uint32_t* arg = argmax.data() + (i * grad_output.w() + x) * c;
      for (std::size_t ch = 0; ch < c; ++ch) grad(i, arg[ch], ch) += src[ch];
    }
  }
  return grad;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

LossResult weighted_bce(std::span<const double> logits, const LabelVector& labels, double scale) {
  if (logits.size() != labels.size() || logits.empty()) shape_error("logits and labels differ in length");
  const auto n = static_cast<double>(labels.size());
  const auto n_pos = static_cast<double>(std::count(labels.begin(), labels.end(), std::uint8_t{1}));
  const double n_neg = n - n_pos;
  const bool balanced = n_pos > 0.0 && n_neg > 0.0;
  const double alpha_pos = balanced ? n / (2.0 * n_pos) : 1.0;
  const double alpha_neg = balanced ? n / (2.0 * n_neg) : 1.0;

  LossResult out;
  out.grad.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const bool clamped = std::abs(logits[i]) > kLogitClamp;
    const double g = std::clamp(logits[i], -kLogitClamp, kLogitClamp);
    const bool pos = labels[i] != 0;
    const double alpha = pos ? alpha_pos : alpha_neg;
    // -log sigmoid(g) = softplus(-g); -log(1 - sigmoid(g)) = softplus(g)
    const double z = pos ? -g : g;
    const double softplus = z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    out.value += alpha * softplus;
    out.grad[i] = clamped ? 0.0 : scale * alpha * (sigmoid(g) - (pos ? 1.0 : 0.0)) / n;
  }
  out.value *= scale / n;
  return out;
}

}  // namespace nmnet
