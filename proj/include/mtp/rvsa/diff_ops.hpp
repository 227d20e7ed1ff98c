// Copyright (c) 2026, The MTP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "mtp/core/gradcheck.hpp"
#include "mtp/rvsa/attention.hpp"
#include "mtp/rvsa/layer.hpp"
#include "mtp/rvsa/window.hpp"

namespace mtp::rvsa::diff {

using Tensors = std::vector<Tensor>;

/// Inputs: feature (C' x H x W), raw window parameters (5).
inline DifferentiableOp sample_window(WindowCorners corners, std::size_t s) {
  return {"sample_window",
          [corners, s](const Tensors& in) {
            return rvsa::sample_window(in[0], corners, WindowTransform::from_raw(in[1].data()), s);
          },
          [corners, s](const Tensors& in, const Tensor&, const Tensor& g) {
            auto r = sample_window_vjp(in[0], corners, WindowTransform::from_raw(in[1].data()), s, g);
            Tensor draw(in[1].shape());
            for (std::size_t p = 0; p < kParamsPerHead; ++p) draw[p] = r.draw[p];
            return Tensors{r.dfeature, draw};
          }};
}

/// Inputs: q, k, v.
inline DifferentiableOp window_attention() {
  return {"window_attention", [](const Tensors& in) { return rvsa::window_attention(in[0], in[1], in[2]); },
          [](const Tensors& in, const Tensor&, const Tensor& g) {
            auto r = window_attention_vjp(in[0], in[1], in[2], g);
            return Tensors{r.dq, r.dk, r.dv};
          }};
}

/// Inputs: window features (C x s x s), weight (5h x C), bias (5h).
inline DifferentiableOp window_params(double slope = ops::kDefaultLeakySlope) {
  return tape_op("window_params", [slope](const std::vector<ag::Var>& in) {
    return window_param_logits(in[0], in[1], in[2], slope);
  });
}

/// Inputs: x (C x H x W), qkv weight, qkv bias, winparams weight,
/// winparams bias, proj weight, proj bias. Window parameters are ignored
/// (zero cotangent) outside rotated mode.
inline DifferentiableOp attention_layer(std::size_t heads, std::size_t window, AttentionMode mode) {
  const char* name = mode == AttentionMode::kRotatedWindow ? "rvsa_layer"
                     : mode == AttentionMode::kPlainWindow ? "window_layer"
                                                           : "full_attention_layer";
  return tape_op(name, [heads, window, mode](const std::vector<ag::Var>& in) {
    const Shape s = in[0].value().shape();
    AttentionVars w{in[1], in[2], in[5], in[6], in[3], in[4]};
    const ag::Var tokens = ag::transpose(ag::reshape(in[0], {s[0], s[1] * s[2]}));
    const ag::Var out = attention_tokens(tokens, s[1], s[2], heads, window, mode, w);
    return ag::reshape(ag::transpose(out), s);
  });
}

}  // namespace mtp::rvsa::diff
