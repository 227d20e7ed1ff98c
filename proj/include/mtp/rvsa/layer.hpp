// Copyright (c) 2026, The MTP Authors
// SPDX-License-Identifier: Apache-2.0
//
// Attention layers and the plain-transformer backbone.
//
// Features travel between layers as token matrices (HW x C, row y*W + x).
// Parameter keys follow a flat scheme:
//
//   embed.patch.weight / embed.patch.bias / embed.pos
//   layerNN.norm1.{gain,bias}      layerNN.norm2.{gain,bias}
//   layerNN.attn.qkv.{weight,bias} layerNN.attn.proj.{weight,bias}
//   layerNN.attn.winparams.{weight,bias}   (rotated-window layers only)
//   layerNN.mlp.fc1.{weight,bias}  layerNN.mlp.fc2.{weight,bias}
//
// with NN the 1-indexed, zero-padded layer number.

#pragma once

#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mtp/core/autograd.hpp"
#include "mtp/core/rng.hpp"
#include "mtp/core/tensor.hpp"
#include "mtp/core/tnsr_io.hpp"
#include "mtp/rvsa/attention.hpp"
#include "mtp/rvsa/config.hpp"
#include "mtp/rvsa/window.hpp"

namespace mtp::rvsa {

using ParamMap = io::TensorMap;
using VarMap = std::map<std::string, ag::Var>;

enum class AttentionMode { kRotatedWindow, kPlainWindow, kFull };

inline std::string layer_prefix(std::size_t layer) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "layer%02zu", layer);
  return buf;
}

/// Binds every parameter as a differentiable leaf on `tape`.
inline VarMap bind_params(ag::Tape& tape, const ParamMap& params, bool differentiable = true) {
  VarMap vars;
  for (const auto& [k, v] : params) vars.emplace(k, differentiable ? tape.leaf(v) : tape.constant(v));
  return vars;
}

inline ag::Var param(const VarMap& vars, const std::string& key) {
  auto it = vars.find(key);
  if (it == vars.end()) throw ConfigError("missing parameter '" + key + "'");
  return it->second;
}

/// Weights of one attention operator.
struct AttentionWeights {
  Tensor qkv_weight, qkv_bias;
  Tensor winparams_weight, winparams_bias;
  Tensor proj_weight, proj_bias;
};

inline Tensor normal_tensor(Shape shape, double stddev, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.vec()) v = rng.normal() * stddev;
  return t;
}

inline constexpr double kInitStd = 0.02;

/// Rotated-window parameter heads start at zero, i.e. the identity window.
inline AttentionWeights init_attention(std::size_t dim, std::size_t heads, Rng& rng) {
  return {normal_tensor({3 * dim, dim}, kInitStd, rng), Tensor({3 * dim}),
          Tensor({kParamsPerHead * heads, dim}),        Tensor({kParamsPerHead * heads}),
          normal_tensor({dim, dim}, kInitStd, rng),     Tensor({dim})};
}

struct AttentionVars {
  ag::Var qkv_weight, qkv_bias, proj_weight, proj_bias;
  std::optional<ag::Var> winparams_weight, winparams_bias;
};

inline AttentionVars attention_vars(const VarMap& vars, const std::string& prefix, bool rotated) {
  AttentionVars a{param(vars, prefix + ".attn.qkv.weight"), param(vars, prefix + ".attn.qkv.bias"),
                  param(vars, prefix + ".attn.proj.weight"), param(vars, prefix + ".attn.proj.bias"),
                  std::nullopt, std::nullopt};
  if (rotated) {
    a.winparams_weight = param(vars, prefix + ".attn.winparams.weight");
    a.winparams_bias = param(vars, prefix + ".attn.winparams.bias");
  }
  return a;
}

/// Multi-head attention over an HW x C token matrix laid out on an
/// `height` x `width` grid. Rotated-window mode predicts per-window,
/// per-head transforms and resamples keys and values from the transformed
/// windows; plain-window mode uses the untransformed windows; full mode
/// attends over all tokens.
inline ag::Var attention_tokens(ag::Var x, std::size_t height, std::size_t width, std::size_t heads,
                                std::size_t window, AttentionMode mode, const AttentionVars& w,
                                double slope = ops::kDefaultLeakySlope) {
  const std::size_t dim = x.value().dim(1);
  if (x.value().dim(0) != height * width) throw ShapeError("attention: token count does not match grid");
  if (dim % heads != 0) throw ShapeError("attention: channels not divisible by heads");
  const std::size_t hd = dim / heads;
  const ag::Var qkv = ag::linear(x, w.qkv_weight, w.qkv_bias);

  std::vector<ag::Var> q(heads), k(heads), v(heads);
  for (std::size_t j = 0; j < heads; ++j) {
    q[j] = ag::slice_cols(qkv, j * hd, hd);
    k[j] = ag::slice_cols(qkv, dim + j * hd, hd);
    v[j] = ag::slice_cols(qkv, 2 * dim + j * hd, hd);
  }

  std::vector<ag::Var> head_out(heads);
  if (mode == AttentionMode::kFull) {
    for (std::size_t j = 0; j < heads; ++j) head_out[j] = window_attention(q[j], k[j], v[j]);
  } else {
    const WindowGrid grid = make_grid(dim, height, width, window);
    std::vector<ag::Var> k_map(heads), v_map(heads);
    if (mode == AttentionMode::kRotatedWindow) {
      if (!w.winparams_weight || !w.winparams_bias) throw ConfigError("rotated-window layer lacks winparams");
      for (std::size_t j = 0; j < heads; ++j) {
        k_map[j] = ag::reshape(ag::transpose(k[j]), {hd, height, width});
        v_map[j] = ag::reshape(ag::transpose(v[j]), {hd, height, width});
      }
    }
    std::vector<std::vector<ag::Var>> per_head(heads);
    std::vector<std::size_t> order;
    order.reserve(height * width);
    for (std::size_t r = 0; r < grid.rows; ++r) {
      for (std::size_t c = 0; c < grid.cols; ++c) {
        const auto rows = window_token_rows(r, c, window, width);
        order.insert(order.end(), rows.begin(), rows.end());
        std::optional<ag::Var> raw;
        if (mode == AttentionMode::kRotatedWindow) {
          const ag::Var xw = ag::reshape(ag::transpose(ag::gather_rows(x, rows)), {dim, window, window});
          raw = window_param_logits(xw, *w.winparams_weight, *w.winparams_bias, slope);
        }
        const WindowCorners corners = window_corners(r, c, window);
        for (std::size_t j = 0; j < heads; ++j) {
          const ag::Var qw = ag::gather_rows(q[j], rows);
          ag::Var kw, vw;
          if (mode == AttentionMode::kRotatedWindow) {
            const ag::Var pj = ag::slice_cols(*raw, j * kParamsPerHead, kParamsPerHead);
            const Shape flat{hd, window * window};
            kw = ag::transpose(ag::reshape(sample_window(k_map[j], pj, corners, window), flat));
            vw = ag::transpose(ag::reshape(sample_window(v_map[j], pj, corners, window), flat));
          } else {
            kw = ag::gather_rows(k[j], rows);
            vw = ag::gather_rows(v[j], rows);
          }
          per_head[j].push_back(window_attention(qw, kw, vw));
        }
      }
    }
    // order[p] is the token at concatenated position p; invert it.
    std::vector<std::size_t> inverse(order.size());
    for (std::size_t p = 0; p < order.size(); ++p) inverse[order[p]] = p;
    for (std::size_t j = 0; j < heads; ++j) head_out[j] = ag::gather_rows(ag::concat_rows(per_head[j]), inverse);
  }
  return ag::linear(ag::concat_cols(head_out), w.proj_weight, w.proj_bias);
}

namespace detail {

inline ag::Var to_tokens(ag::Var chw) {
  const Shape& s = chw.value().shape();
  return ag::transpose(ag::reshape(chw, {s[0], s[1] * s[2]}));
}

inline ag::Var to_chw(ag::Var tokens, std::size_t height, std::size_t width) {
  return ag::reshape(ag::transpose(tokens), {tokens.value().dim(1), height, width});
}

inline Tensor run_attention(const Tensor& x, const AttentionWeights& w, std::size_t heads, std::size_t window,
                            AttentionMode mode, double slope) {
  require_rank(x, 3, "attention layer input");
  ag::Tape tape;
  AttentionVars v{tape.constant(w.qkv_weight), tape.constant(w.qkv_bias), tape.constant(w.proj_weight),
                  tape.constant(w.proj_bias), std::nullopt, std::nullopt};
  if (mode == AttentionMode::kRotatedWindow) {
    v.winparams_weight = tape.constant(w.winparams_weight);
    v.winparams_bias = tape.constant(w.winparams_bias);
  }
  const ag::Var tokens = to_tokens(tape.constant(x));
  const ag::Var out = attention_tokens(tokens, x.dim(1), x.dim(2), heads, window, mode, v, slope);
  return to_chw(out, x.dim(1), x.dim(2)).value();
}

}  // namespace detail

/// Rotated varied-size window attention on a C x H x W map.
inline Tensor rvsa_layer(const Tensor& x, const AttentionWeights& w, std::size_t heads, std::size_t window,
                         double slope = ops::kDefaultLeakySlope) {
  return detail::run_attention(x, w, heads, window, AttentionMode::kRotatedWindow, slope);
}

/// Windowed attention with untransformed windows.
inline Tensor plain_window_layer(const Tensor& x, const AttentionWeights& w, std::size_t heads,
                                 std::size_t window) {
  return detail::run_attention(x, w, heads, window, AttentionMode::kPlainWindow, ops::kDefaultLeakySlope);
}

inline Tensor full_attention_layer(const Tensor& x, const AttentionWeights& w, std::size_t heads) {
  return detail::run_attention(x, w, heads, 1, AttentionMode::kFull, ops::kDefaultLeakySlope);
}

// ------------------------------------------------------------- backbone

inline void init_block(ParamMap& p, const RvsaConfig& cfg, std::size_t layer, Rng& rng) {
  const std::string pre = layer_prefix(layer);
  const std::size_t c = cfg.embed_dim, hidden = cfg.mlp_ratio * cfg.embed_dim;
  AttentionWeights a = init_attention(c, cfg.heads, rng);
  p[pre + ".norm1.gain"] = Tensor({c}, 1.0);
  p[pre + ".norm1.bias"] = Tensor({c});
  p[pre + ".attn.qkv.weight"] = std::move(a.qkv_weight);
  p[pre + ".attn.qkv.bias"] = std::move(a.qkv_bias);
  if (cfg.layer_kind(layer) == LayerKind::kRotatedWindow) {
    p[pre + ".attn.winparams.weight"] = std::move(a.winparams_weight);
    p[pre + ".attn.winparams.bias"] = std::move(a.winparams_bias);
  }
  p[pre + ".attn.proj.weight"] = std::move(a.proj_weight);
  p[pre + ".attn.proj.bias"] = std::move(a.proj_bias);
  p[pre + ".norm2.gain"] = Tensor({c}, 1.0);
  p[pre + ".norm2.bias"] = Tensor({c});
  p[pre + ".mlp.fc1.weight"] = normal_tensor({hidden, c}, kInitStd, rng);
  p[pre + ".mlp.fc1.bias"] = Tensor({hidden});
  p[pre + ".mlp.fc2.weight"] = normal_tensor({c, hidden}, kInitStd, rng);
  p[pre + ".mlp.fc2.bias"] = Tensor({c});
}

/// Patch embedding, positional embedding and every transformer block.
inline ParamMap init_backbone(const RvsaConfig& cfg, Rng& rng) {
  cfg.validate();
  ParamMap p;
  const std::size_t patch_in = cfg.in_channels * cfg.patch_size * cfg.patch_size;
  const std::size_t tokens = cfg.grid_side() * cfg.grid_side();
  p["embed.patch.weight"] = normal_tensor({cfg.embed_dim, patch_in}, kInitStd, rng);
  p["embed.patch.bias"] = Tensor({cfg.embed_dim});
  p["embed.pos"] = normal_tensor({tokens, cfg.embed_dim}, kInitStd, rng);
  for (std::size_t l = 1; l <= cfg.depth; ++l) init_block(p, cfg, l, rng);
  return p;
}

/// Pre-norm residual block: x + Attn(LN(x)), then + MLP(LN(.)).
inline ag::Var block_tokens(ag::Var x, const RvsaConfig& cfg, std::size_t layer, const VarMap& vars) {
  const std::string pre = layer_prefix(layer);
  const std::size_t side = cfg.grid_side();
  const bool rotated = cfg.layer_kind(layer) == LayerKind::kRotatedWindow;
  const AttentionMode mode = rotated ? AttentionMode::kRotatedWindow : AttentionMode::kFull;
  const ag::Var h1 = ag::layer_norm_rows(x, param(vars, pre + ".norm1.gain"), param(vars, pre + ".norm1.bias"));
  const ag::Var a = attention_tokens(h1, side, side, cfg.heads, cfg.window_size, mode,
                                     attention_vars(vars, pre, rotated), cfg.leaky_slope);
  const ag::Var x1 = ag::add(x, a);
  const ag::Var h2 = ag::layer_norm_rows(x1, param(vars, pre + ".norm2.gain"), param(vars, pre + ".norm2.bias"));
  const ag::Var m = ag::linear(
      ag::gelu(ag::linear(h2, param(vars, pre + ".mlp.fc1.weight"), param(vars, pre + ".mlp.fc1.bias"))),
      param(vars, pre + ".mlp.fc2.weight"), param(vars, pre + ".mlp.fc2.bias"));
  return ag::add(x1, m);
}

/// Runs every block and returns the token matrices tapped after each
/// pyramid layer, in ascending layer order.
inline std::vector<ag::Var> backbone_tokens(ag::Var tokens, const RvsaConfig& cfg, const VarMap& vars) {
  std::vector<ag::Var> pyramid;
  ag::Var x = tokens;
  for (std::size_t l = 1; l <= cfg.depth; ++l) {
    x = block_tokens(x, cfg, l, vars);
    if (cfg.pyramid_layers.count(l)) pyramid.push_back(x);
  }
  return pyramid;
}

/// Non-overlapping patches of a C x H x W image as rows of a matrix whose
/// columns run over (channel, dy, dx).
inline Tensor patchify(const Tensor& image, std::size_t patch) {
  require_rank(image, 3, "patchify");
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  if (h % patch || w % patch) throw ShapeError("patchify: patch size does not divide the image");
  const std::size_t gh = h / patch, gw = w / patch, cols = c * patch * patch;
  Tensor out({gh * gw, cols});
  for (std::size_t gy = 0; gy < gh; ++gy)
    for (std::size_t gx = 0; gx < gw; ++gx)
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t dy = 0; dy < patch; ++dy)
          for (std::size_t dx = 0; dx < patch; ++dx)
            out[(gy * gw + gx) * cols + (ch * patch + dy) * patch + dx] =
                image.at(ch, gy * patch + dy, gx * patch + dx);
  return out;
}

inline ag::Var embed_image(ag::Tape& tape, const Tensor& image, const RvsaConfig& cfg, const VarMap& vars) {
  if (image.shape() != Shape{cfg.in_channels, cfg.image_size, cfg.image_size}) {
    throw ShapeError("image shape " + shape_str(image.shape()) + " does not match model config");
  }
  const ag::Var patches = tape.constant(patchify(image, cfg.patch_size));
  return ag::add(ag::linear(patches, param(vars, "embed.patch.weight"), param(vars, "embed.patch.bias")),
                 param(vars, "embed.pos"));
}

/// Backbone on an already embedded C x H x W feature map (H = W = grid side).
inline std::vector<Tensor> backbone_forward(const Tensor& features, const RvsaConfig& cfg, const ParamMap& params) {
  cfg.validate();
  const std::size_t side = cfg.grid_side();
  if (features.shape() != Shape{cfg.embed_dim, side, side}) {
    throw ShapeError("backbone input " + shape_str(features.shape()) + " does not match config");
  }
  ag::Tape tape;
  const VarMap vars = bind_params(tape, params, false);
  std::vector<Tensor> out;
  for (const ag::Var& t : backbone_tokens(detail::to_tokens(tape.constant(features)), cfg, vars)) {
    out.push_back(detail::to_chw(t, side, side).value());
  }
  return out;
}

}  // namespace mtp::rvsa
