// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#include "kernsym/emergence.hpp"
#include "kernsym/engine.hpp"
#include "oracles/oracles.hpp"

namespace fixtures {

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t parameters = 0;
};

// Compares backward() against central differences for every weight, bias and
// input entry of `net` under the given loss.
inline GradCheck gradient_check(kernsym::Network net, kernsym::FeatureMap x, kernsym::LossKind loss,
                                const kernsym::FeatureMap& target, std::size_t label, double eps = 1e-6) {
  using namespace kernsym;
  auto loss_of = [&](const FeatureMap& out) {
    return loss == LossKind::kMse ? mse_loss(out, target) : cross_entropy_loss(out, label);
  };
  const FeatureMap out = net.forward(x);
  const Gradients g = net.backward(loss_of(out).grad);
  auto value = [&] { return loss_of(net.evaluate(x)).loss; };

  GradCheck r;
  auto check = [&](std::vector<double>& params, const std::vector<double>& analytic) {
    if (params.empty()) return;
    const auto numeric = oracle::finite_difference(params, value, eps);
    r.max_rel_error = std::max(r.max_rel_error, oracle::max_relative_error(analytic, numeric));
    r.parameters += params.size();
  };
  for (std::size_t i = 0; i < net.layers().size(); ++i) {
    check(net.layers()[i].weight, g.layers[i].weight);
    check(net.layers()[i].bias, g.layers[i].bias);
  }
  check(x.data, g.input.data);
  return r;
}

// Distance from the nearest nondifferentiable point at `x`: the smallest
// |relu input| and the smallest max-pool winner/runner-up gap. Windows whose
// winner is a clamped relu zero are skipped.
inline double kink_margin(kernsym::Network net, const kernsym::FeatureMap& x) {
  using namespace kernsym;
  net.forward(x);
  double margin = std::numeric_limits<double>::infinity();
  const auto& layers = net.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerState& l = layers[i];
    const FeatureMap& in = *l.cached_input;
    if (l.spec.kind == LayerKind::kRelu) {
      for (double v : in.data) margin = std::min(margin, std::abs(v));
    }
    if (l.spec.kind != LayerKind::kMaxPool) continue;
    const bool after_relu = i > 0 && layers[i - 1].spec.kind == LayerKind::kRelu;
    const ConvLayerSpec& g = l.spec.conv;
    const std::size_t oh = (in.h + g.padding.top + g.padding.bottom - g.kernel.h) / g.stride.h + 1;
    const std::size_t ow = (in.w + g.padding.left + g.padding.right - g.kernel.w) / g.stride.w + 1;
    for (std::size_t c = 0; c < in.c; ++c)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          std::vector<double> vals;
          for (std::size_t ky = 0; ky < g.kernel.h; ++ky)
            for (std::size_t kx = 0; kx < g.kernel.w; ++kx) {
              const auto y = static_cast<long>(oy * g.stride.h + ky) - static_cast<long>(g.padding.top);
              const auto xx = static_cast<long>(ox * g.stride.w + kx) - static_cast<long>(g.padding.left);
              if (y < 0 || xx < 0 || y >= static_cast<long>(in.h) || xx >= static_cast<long>(in.w)) continue;
              vals.push_back(in.at(c, static_cast<std::size_t>(y), static_cast<std::size_t>(xx)));
            }
          if (vals.size() < 2) continue;
          std::partial_sort(vals.begin(), vals.begin() + 2, vals.end(), std::greater<>());
          if (after_relu && vals[0] == 0.0) continue;
          margin = std::min(margin, vals[0] - vals[1]);
        }
  }
  return margin;
}

}  // namespace fixtures
