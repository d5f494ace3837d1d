// SPDX-License-Identifier: Apache-2.0

#include "kernsym/engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/core.h>

#include "kernsym/conv_arith.hpp"
#include "kernsym/error.hpp"

namespace kernsym {

namespace {

using Index = std::ptrdiff_t;

// Source coordinate for padded position `pos`, or -1 for a zero cell.
Index resolve(Index pos, std::size_t n, PaddingMode mode) {
  const auto len = static_cast<Index>(n);
  if (pos >= 0 && pos < len) return pos;
  if (mode != PaddingMode::kReflect) return -1;
  return pos < 0 ? -pos : 2 * (len - 1) - pos;
}

void check_reflect_fits(const FeatureMap& x, const ConvLayerSpec& spec) {
  if (spec.mode != PaddingMode::kReflect) return;
  const Padding& p = spec.padding;
  if (p.top >= x.h || p.bottom >= x.h || p.left >= x.w || p.right >= x.w) {
    throw Error(ErrorCode::kShapeMismatch,
                fmt::format("reflect padding ({}, {}, {}, {}) needs an input larger than {}x{}", p.top,
                            p.bottom, p.left, p.right, x.h, x.w));
  }
}

std::size_t in_range(Index start, std::size_t k, std::size_t n) {
  const Index lo = std::max<Index>(start, 0);
  const Index hi = std::min<Index>(start + static_cast<Index>(k), static_cast<Index>(n));
  return hi > lo ? static_cast<std::size_t>(hi - lo) : 0;
}

struct ConvShape {
  Extent2 out;
  Index pt, pl;
  std::size_t sh, sw, kh, kw;
};

ConvShape conv_shape(const FeatureMap& x, const ConvLayerSpec& spec) {
  spec.validate();
  check_reflect_fits(x, spec);
  const Padding& p = spec.padding;
  return {{output_size(x.h, spec.kernel.h, spec.stride.h, p.top, p.bottom),
           output_size(x.w, spec.kernel.w, spec.stride.w, p.left, p.right)},
          static_cast<Index>(p.top),
          static_cast<Index>(p.left),
          spec.stride.h,
          spec.stride.w,
          spec.kernel.h,
          spec.kernel.w};
}

double partial_scale(const ConvShape& g, const FeatureMap& x, std::size_t oy, std::size_t ox) {
  const Index y0 = static_cast<Index>(oy * g.sh) - g.pt;
  const Index x0 = static_cast<Index>(ox * g.sw) - g.pl;
  const std::size_t valid = in_range(y0, g.kh, x.h) * in_range(x0, g.kw, x.w);
  return valid == 0 ? 0.0 : static_cast<double>(g.kh * g.kw) / static_cast<double>(valid);
}

FeatureMap conv_forward_raw(const FeatureMap& x, std::span<const double> w, const Dims4& wd,
                            std::span<const double> bias, const ConvLayerSpec& spec) {
  if (wd.c != x.c) {
    throw Error(ErrorCode::kShapeMismatch,
                fmt::format("conv2d: kernel expects {} channels, input has {}", wd.c, x.c));
  }
  if (wd.h != spec.kernel.h || wd.w != spec.kernel.w) {
    throw Error(ErrorCode::kShapeMismatch, "conv2d: weight extents disagree with the layer spec");
  }
  if (!bias.empty() && bias.size() != wd.n) {
    throw Error(ErrorCode::kShapeMismatch, "conv2d: bias length differs from output channels");
  }
  const ConvShape g = conv_shape(x, spec);
  FeatureMap out(wd.n, g.out.h, g.out.w);
  for (std::size_t n = 0; n < wd.n; ++n) {
    for (std::size_t oy = 0; oy < g.out.h; ++oy) {
      for (std::size_t ox = 0; ox < g.out.w; ++ox) {
        double acc = 0.0;
        for (std::size_t c = 0; c < wd.c; ++c) {
          const double* kern = w.data() + (n * wd.c + c) * g.kh * g.kw;
          for (std::size_t ky = 0; ky < g.kh; ++ky) {
            const Index iy = resolve(static_cast<Index>(oy * g.sh + ky) - g.pt, x.h, spec.mode);
            if (iy < 0) continue;
            for (std::size_t kx = 0; kx < g.kw; ++kx) {
              const Index ix = resolve(static_cast<Index>(ox * g.sw + kx) - g.pl, x.w, spec.mode);
              if (ix < 0) continue;
              acc += kern[ky * g.kw + kx] * x.at(c, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
            }
          }
        }
        if (spec.mode == PaddingMode::kPartialConv) acc *= partial_scale(g, x, oy, ox);
        out.at(n, oy, ox) = acc + (bias.empty() ? 0.0 : bias[n]);
      }
    }
  }
  return out;
}

void conv_backward_raw(const FeatureMap& x, std::span<const double> w, const Dims4& wd,
                       const ConvLayerSpec& spec, const FeatureMap& gout, FeatureMap& gx,
                       std::vector<double>& gw, std::vector<double>& gb) {
  const ConvShape g = conv_shape(x, spec);
  gx = FeatureMap(x.c, x.h, x.w);
  gw.assign(w.size(), 0.0);
  gb.assign(wd.n, 0.0);
  for (std::size_t n = 0; n < wd.n; ++n) {
    for (std::size_t oy = 0; oy < g.out.h; ++oy) {
      for (std::size_t ox = 0; ox < g.out.w; ++ox) {
        const double go = gout.at(n, oy, ox);
        gb[n] += go;
        // The partial-conv ratio depends only on geometry, so it is a constant here.
        const double gs = spec.mode == PaddingMode::kPartialConv ? go * partial_scale(g, x, oy, ox) : go;
        for (std::size_t c = 0; c < wd.c; ++c) {
          const std::size_t base = (n * wd.c + c) * g.kh * g.kw;
          for (std::size_t ky = 0; ky < g.kh; ++ky) {
            const Index iy = resolve(static_cast<Index>(oy * g.sh + ky) - g.pt, x.h, spec.mode);
            if (iy < 0) continue;
            for (std::size_t kx = 0; kx < g.kw; ++kx) {
              const Index ix = resolve(static_cast<Index>(ox * g.sw + kx) - g.pl, x.w, spec.mode);
              if (ix < 0) continue;
              const auto yy = static_cast<std::size_t>(iy);
              const auto xx = static_cast<std::size_t>(ix);
              gw[base + ky * g.kw + kx] += gs * x.at(c, yy, xx);
              gx.at(c, yy, xx) += gs * w[base + ky * g.kw + kx];
            }
          }
        }
      }
    }
  }
}

FeatureMap maxpool_forward(const FeatureMap& x, const ConvLayerSpec& spec, std::vector<std::size_t>* argmax) {
  const ConvShape g = conv_shape(x, spec);
  FeatureMap out(x.c, g.out.h, g.out.w);
  if (argmax) argmax->assign(out.data.size(), 0);
  for (std::size_t c = 0; c < x.c; ++c) {
    for (std::size_t oy = 0; oy < g.out.h; ++oy) {
      for (std::size_t ox = 0; ox < g.out.w; ++ox) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_index = 0;
        bool found = false;
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
          const Index iy = static_cast<Index>(oy * g.sh + ky) - g.pt;
          if (iy < 0 || iy >= static_cast<Index>(x.h)) continue;
          for (std::size_t kx = 0; kx < g.kw; ++kx) {
            const Index ix = static_cast<Index>(ox * g.sw + kx) - g.pl;
            if (ix < 0 || ix >= static_cast<Index>(x.w)) continue;
            const std::size_t flat = (c * x.h + static_cast<std::size_t>(iy)) * x.w + static_cast<std::size_t>(ix);
            if (!found || x.data[flat] > best) {
              best = x.data[flat];
              best_index = flat;
              found = true;
            }
          }
        }
        if (!found) {
          throw Error(ErrorCode::kWindowTooLarge, "maxpool: window lies entirely in padding");
        }
        const std::size_t o = (c * g.out.h + oy) * g.out.w + ox;
        out.data[o] = best;
        if (argmax) (*argmax)[o] = best_index;
      }
    }
  }
  return out;
}

// Depthwise binomial filter, reflect padding 1, stride 2.
FeatureMap blurpool_forward(const FeatureMap& x) {
  const ConvLayerSpec spec = blurpool_geometry();
  const ConvShape g = conv_shape(x, spec);
  const auto& f = binomial3x3();
  FeatureMap out(x.c, g.out.h, g.out.w);
  for (std::size_t c = 0; c < x.c; ++c) {
    for (std::size_t oy = 0; oy < g.out.h; ++oy) {
      for (std::size_t ox = 0; ox < g.out.w; ++ox) {
        double acc = 0.0;
        for (std::size_t ky = 0; ky < 3; ++ky) {
          const auto iy = static_cast<std::size_t>(resolve(static_cast<Index>(oy * 2 + ky) - 1, x.h, spec.mode));
          for (std::size_t kx = 0; kx < 3; ++kx) {
            const auto ix = static_cast<std::size_t>(resolve(static_cast<Index>(ox * 2 + kx) - 1, x.w, spec.mode));
            acc += f[ky * 3 + kx] * x.at(c, iy, ix);
          }
        }
        out.at(c, oy, ox) = acc;
      }
    }
  }
  return out;
}

FeatureMap blurpool_backward(const FeatureMap& x, const FeatureMap& gout) {
  const ConvLayerSpec spec = blurpool_geometry();
  const ConvShape g = conv_shape(x, spec);
  const auto& f = binomial3x3();
  FeatureMap gx(x.c, x.h, x.w);
  for (std::size_t c = 0; c < x.c; ++c) {
    for (std::size_t oy = 0; oy < g.out.h; ++oy) {
      for (std::size_t ox = 0; ox < g.out.w; ++ox) {
        const double go = gout.at(c, oy, ox);
        for (std::size_t ky = 0; ky < 3; ++ky) {
          const auto iy = static_cast<std::size_t>(resolve(static_cast<Index>(oy * 2 + ky) - 1, x.h, spec.mode));
          for (std::size_t kx = 0; kx < 3; ++kx) {
            const auto ix = static_cast<std::size_t>(resolve(static_cast<Index>(ox * 2 + kx) - 1, x.w, spec.mode));
            gx.at(c, iy, ix) += f[ky * 3 + kx] * go;
          }
        }
      }
    }
  }
  return gx;
}

FeatureMap global_avg_pool_forward(const FeatureMap& x) {
  FeatureMap out(x.c, 1, 1);
  const std::size_t plane = x.h * x.w;
  for (std::size_t c = 0; c < x.c; ++c) {
    double acc = 0.0;
    for (std::size_t i = 0; i < plane; ++i) acc += x.data[c * plane + i];
    out.data[c] = acc / static_cast<double>(plane);
  }
  return out;
}

FeatureMap dense_forward(const FeatureMap& x, const LayerState& s) {
  const std::size_t in = s.weight_dims.c;
  const std::size_t outs = s.weight_dims.n;
  if (x.data.size() != in) {
    throw Error(ErrorCode::kShapeMismatch,
                fmt::format("dense '{}': expects {} inputs, got {}", s.spec.name, in, x.data.size()));
  }
  FeatureMap out(outs, 1, 1);
  for (std::size_t o = 0; o < outs; ++o) {
    double acc = 0.0;
    for (std::size_t i = 0; i < in; ++i) acc += s.weight[o * in + i] * x.data[i];
    out.data[o] = acc + (s.has_bias ? s.bias[o] : 0.0);
  }
  return out;
}

FeatureMap layer_forward(const LayerState& s, const FeatureMap& x, std::vector<std::size_t>* argmax) {
  switch (s.spec.kind) {
    case LayerKind::kConv2d:
      return conv_forward_raw(x, s.weight, s.weight_dims,
                              s.has_bias ? std::span<const double>(s.bias) : std::span<const double>(),
                              s.spec.conv);
    case LayerKind::kMaxPool:
      return maxpool_forward(x, s.spec.conv, argmax);
    case LayerKind::kBlurPool:
      return blurpool_forward(x);
    case LayerKind::kGlobalAvgPool:
      return global_avg_pool_forward(x);
    case LayerKind::kRelu: {
      FeatureMap out = x;
      for (double& v : out.data) v = v > 0.0 ? v : 0.0;
      return out;
    }
    case LayerKind::kDense:
      return dense_forward(x, s);
  }
  return x;
}

}  // namespace

FeatureMap::FeatureMap(std::size_t c, std::size_t h, std::size_t w, std::vector<double> values)
    : c(c), h(h), w(w), data(std::move(values)) {
  if (c == 0 || h == 0 || w == 0 || data.size() != c * h * w) {
    throw Error(ErrorCode::kShapeMismatch,
                fmt::format("FeatureMap: {} values for shape ({}, {}, {})", data.size(), c, h, w));
  }
  for (double v : data) {
    if (!std::isfinite(v)) throw Error(ErrorCode::kNonFinite, "FeatureMap: non-finite value");
  }
}

FeatureMap flip_h(const FeatureMap& x) {
  FeatureMap out(x.c, x.h, x.w);
  for (std::size_t c = 0; c < x.c; ++c)
    for (std::size_t y = 0; y < x.h; ++y)
      for (std::size_t i = 0; i < x.w; ++i) out.at(c, y, i) = x.at(c, y, x.w - 1 - i);
  return out;
}

FeatureMap shift(const FeatureMap& x, int dy, int dx) {
  FeatureMap out(x.c, x.h, x.w);
  const auto h = static_cast<Index>(x.h);
  const auto w = static_cast<Index>(x.w);
  for (std::size_t c = 0; c < x.c; ++c) {
    for (Index y = 0; y < h; ++y) {
      const Index sy = y - dy;
      if (sy < 0 || sy >= h) continue;
      for (Index i = 0; i < w; ++i) {
        const Index sx = i - dx;
        if (sx < 0 || sx >= w) continue;
        out.at(c, static_cast<std::size_t>(y), static_cast<std::size_t>(i)) =
            x.at(c, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx));
      }
    }
  }
  return out;
}

const std::array<double, 9>& binomial3x3() {
  static const std::array<double, 9> kernel = [] {
    const double row[3] = {0.25, 0.5, 0.25};
    std::array<double, 9> k{};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) k[i * 3 + j] = row[i] * row[j];
    return k;
  }();
  return kernel;
}

FeatureMap conv2d_forward(const FeatureMap& x, const Tensor4& w, std::span<const double> bias,
                          const ConvLayerSpec& spec) {
  return conv_forward_raw(x, w.data(), w.dims(), bias, spec);
}

FeatureMap pool_forward(const FeatureMap& x, LayerKind kind, const ConvLayerSpec& spec) {
  switch (kind) {
    case LayerKind::kMaxPool: return maxpool_forward(x, spec, nullptr);
    case LayerKind::kBlurPool: return blurpool_forward(x);
    case LayerKind::kGlobalAvgPool: return global_avg_pool_forward(x);
    default:
      throw Error(ErrorCode::kInvalidArgument, fmt::format("pool_forward: {} is not a pooling layer", to_string(kind)));
  }
}

Network Network::from_manifest(const ModelManifest& manifest, const TensorStore& store) {
  validate_bindings(manifest, store);
  Network net;
  net.manifest_ = manifest;
  for (const LayerSpec& spec : manifest.layers) {
    LayerState s;
    s.spec = spec;
    if (spec.kind == LayerKind::kConv2d || spec.kind == LayerKind::kDense) {
      const StoredTensor* w = store.find(spec.weight);
      s.weight_dims = spec.kind == LayerKind::kConv2d
                          ? Dims4{w->shape[0], w->shape[1], w->shape[2], w->shape[3]}
                          : Dims4{w->shape[0], w->shape[1], 1, 1};
      s.weight = w->to_doubles();
      if (spec.bias) {
        s.bias = store.find(*spec.bias)->to_doubles();
        s.has_bias = true;
      }
    }
    net.layers_.push_back(std::move(s));
  }
  return net;
}

FeatureMap Network::forward(const FeatureMap& x) {
  FeatureMap current = x;
  for (LayerState& s : layers_) {
    s.cached_input = current;
    current = layer_forward(s, current, s.spec.kind == LayerKind::kMaxPool ? &s.argmax : nullptr);
  }
  return current;
}

FeatureMap Network::evaluate(const FeatureMap& x) const {
  FeatureMap current = x;
  for (const LayerState& s : layers_) current = layer_forward(s, current, nullptr);
  return current;
}

void Network::clear_cache() {
  for (LayerState& s : layers_) {
    s.cached_input.reset();
    s.argmax.clear();
  }
}

Gradients Network::backward(const FeatureMap& output_grad) const {
  Gradients grads;
  grads.layers.resize(layers_.size());
  FeatureMap g = output_grad;
  for (std::size_t li = layers_.size(); li-- > 0;) {
    const LayerState& s = layers_[li];
    if (!s.cached_input) {
      throw Error(ErrorCode::kNoForwardCache,
                  fmt::format("backward: layer {} ('{}') has no cached forward pass", li, s.spec.name));
    }
    const FeatureMap& x = *s.cached_input;
    LayerGradient& lg = grads.layers[li];
    switch (s.spec.kind) {
      case LayerKind::kConv2d: {
        FeatureMap gx;
        conv_backward_raw(x, s.weight, s.weight_dims, s.spec.conv, g, gx, lg.weight, lg.bias);
        if (!s.has_bias) lg.bias.clear();
        g = std::move(gx);
        break;
      }
      case LayerKind::kDense: {
        const std::size_t in = s.weight_dims.c;
        const std::size_t outs = s.weight_dims.n;
        lg.weight.assign(s.weight.size(), 0.0);
        if (s.has_bias) lg.bias.assign(outs, 0.0);
        FeatureMap gx(x.c, x.h, x.w);
        for (std::size_t o = 0; o < outs; ++o) {
          const double go = g.data[o];
          if (s.has_bias) lg.bias[o] = go;
          for (std::size_t i = 0; i < in; ++i) {
            lg.weight[o * in + i] = go * x.data[i];
            gx.data[i] += go * s.weight[o * in + i];
          }
        }
        g = std::move(gx);
        break;
      }
      case LayerKind::kRelu: {
        FeatureMap gx(x.c, x.h, x.w);
        for (std::size_t i = 0; i < x.data.size(); ++i) gx.data[i] = x.data[i] > 0.0 ? g.data[i] : 0.0;
        g = std::move(gx);
        break;
      }
      case LayerKind::kMaxPool: {
        FeatureMap gx(x.c, x.h, x.w);
        for (std::size_t o = 0; o < s.argmax.size(); ++o) gx.data[s.argmax[o]] += g.data[o];
        g = std::move(gx);
        break;
      }
      case LayerKind::kBlurPool:
        g = blurpool_backward(x, g);
        break;
      case LayerKind::kGlobalAvgPool: {
        FeatureMap gx(x.c, x.h, x.w);
        const std::size_t plane = x.h * x.w;
        for (std::size_t c = 0; c < x.c; ++c)
          for (std::size_t i = 0; i < plane; ++i) gx.data[c * plane + i] = g.data[c] / static_cast<double>(plane);
        g = std::move(gx);
        break;
      }
    }
  }
  grads.input = std::move(g);
  return grads;
}

Tensor4 Network::weight_tensor(std::size_t index) const {
  const LayerState& s = layers_.at(index);
  if (s.weight.empty()) {
    throw Error(ErrorCode::kInvalidArgument, fmt::format("layer {} ('{}') has no weights", index, s.spec.name));
  }
  return Tensor4(s.weight_dims, s.weight);
}

TensorStore Network::to_store() const {
  TensorStore store;
  for (const LayerState& s : layers_) {
    if (s.weight.empty()) continue;
    const Dims4& d = s.weight_dims;
    std::vector<std::size_t> shape = s.spec.kind == LayerKind::kConv2d
                                         ? std::vector<std::size_t>{d.n, d.c, d.h, d.w}
                                         : std::vector<std::size_t>{d.n, d.c};
    store.add_f64(s.spec.weight, std::move(shape), s.weight);
    if (s.has_bias) store.add_f64(*s.spec.bias, {s.bias.size()}, s.bias);
  }
  return store;
}

LossValue mse_loss(const FeatureMap& pred, const FeatureMap& target) {
  if (pred.c != target.c || pred.h != target.h || pred.w != target.w) {
    throw Error(ErrorCode::kShapeMismatch,
                fmt::format("mse_loss: prediction ({}, {}, {}) vs target ({}, {}, {})", pred.c, pred.h,
                            pred.w, target.c, target.h, target.w));
  }
  LossValue out{0.0, FeatureMap(pred.c, pred.h, pred.w)};
  const auto n = static_cast<double>(pred.data.size());
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const double d = pred.data[i] - target.data[i];
    out.loss += d * d;
    out.grad.data[i] = 2.0 * d / n;
  }
  out.loss /= n;
  return out;
}

LossValue cross_entropy_loss(const FeatureMap& logits, std::size_t label) {
  const std::size_t n = logits.data.size();
  if (label >= n) {
    throw Error(ErrorCode::kIndexOutOfRange,
                fmt::format("cross_entropy_loss: label {} with {} classes", label, n));
  }
  const double top = *std::max_element(logits.data.begin(), logits.data.end());
  double z = 0.0;
  for (double v : logits.data) z += std::exp(v - top);
  LossValue out{0.0, FeatureMap(logits.c, logits.h, logits.w)};
  for (std::size_t i = 0; i < n; ++i) out.grad.data[i] = std::exp(logits.data[i] - top) / z;
  out.grad.data[label] -= 1.0;
  out.loss = std::log(z) - (logits.data[label] - top);
  return out;
}

}  // namespace kernsym
