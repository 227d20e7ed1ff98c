// Copyright (c) 2026, The MTP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <set>
#include <string>
#include <vector>

#include "mtp/core/error.hpp"
#include "mtp/core/ops.hpp"

namespace mtp::rvsa {

enum class LayerKind { kRotatedWindow, kFull };

/// Backbone hyperparameters. Layer sets are 1-indexed.
struct RvsaConfig {
  std::string name = "custom";
  std::size_t depth = 4;
  std::size_t embed_dim = 32;
  std::size_t heads = 2;
  std::size_t window_size = 4;
  std::set<std::size_t> full_attention_layers;
  std::set<std::size_t> pyramid_layers;
  std::size_t image_size = 32;
  std::size_t patch_size = 4;
  std::size_t in_channels = 3;
  std::size_t mlp_ratio = 4;
  double leaky_slope = ops::kDefaultLeakySlope;

  std::size_t head_dim() const { return embed_dim / heads; }
  std::size_t grid_side() const { return image_size / patch_size; }

  LayerKind layer_kind(std::size_t layer) const {
    return full_attention_layers.count(layer) ? LayerKind::kFull : LayerKind::kRotatedWindow;
  }

  std::vector<std::size_t> rotated_window_layers() const {
    std::vector<std::size_t> out;
    for (std::size_t l = 1; l <= depth; ++l)
      if (layer_kind(l) == LayerKind::kRotatedWindow) out.push_back(l);
    return out;
  }

  void validate() const {
    if (depth == 0 || embed_dim == 0 || heads == 0 || window_size == 0 || patch_size == 0 ||
        image_size == 0 || in_channels == 0 || mlp_ratio == 0) {
      throw ConfigError(name + ": sizes must be positive");
    }
    if (embed_dim % heads != 0) {
      throw ConfigError(name + ": embed_dim " + std::to_string(embed_dim) +
                        " is not divisible by heads " + std::to_string(heads));
    }
    for (const auto* set : {&full_attention_layers, &pyramid_layers}) {
      for (std::size_t l : *set) {
        if (l < 1 || l > depth) {
          throw ConfigError(name + ": layer index " + std::to_string(l) + " outside [1, " +
                            std::to_string(depth) + "]");
        }
      }
    }
    if (pyramid_layers.empty()) throw ConfigError(name + ": pyramid_layers is empty");
    if (image_size % patch_size != 0) throw ConfigError(name + ": patch_size must divide image_size");
    if (grid_side() % window_size != 0) {
      throw ConfigError(name + ": window_size " + std::to_string(window_size) +
                        " does not divide the token grid side " + std::to_string(grid_side()));
    }
    if (!(leaky_slope > 0.0 && leaky_slope < 1.0)) throw ConfigError(name + ": leaky_slope outside (0, 1)");
  }
};

inline RvsaConfig vitb_rvsa() {
  RvsaConfig c;
  c.name = "vitb-rvsa";
  c.depth = 12;
  c.embed_dim = 768;
  c.heads = 12;
  c.window_size = 7;
  c.full_attention_layers = {3, 6, 9, 12};
  c.pyramid_layers = {4, 6, 8, 12};
  c.image_size = 224;
  c.patch_size = 16;
  return c;
}

inline RvsaConfig vitl_rvsa() {
  RvsaConfig c;
  c.name = "vitl-rvsa";
  c.depth = 24;
  c.embed_dim = 1024;
  c.heads = 16;
  c.window_size = 7;
  c.full_attention_layers = {6, 12, 18, 24};
  c.pyramid_layers = {8, 12, 16, 24};
  c.image_size = 224;
  c.patch_size = 16;
  return c;
}

/// Desk-scale preset: 32 x 32 images, 4-pixel patches, an 8 x 8 token grid
/// split into four 4 x 4 windows.
inline RvsaConfig toy_rvsa() {
  RvsaConfig c;
  c.name = "toy";
  c.depth = 4;
  c.embed_dim = 32;
  c.heads = 2;
  c.window_size = 4;
  c.full_attention_layers = {4};
  c.pyramid_layers = {2, 4};
  c.image_size = 32;
  c.patch_size = 4;
  return c;
}

inline RvsaConfig preset(const std::string& name) {
  if (name == "vitb-rvsa") return vitb_rvsa();
  if (name == "vitl-rvsa") return vitl_rvsa();
  if (name == "toy") return toy_rvsa();
  throw ConfigError("unknown model preset '" + name + "' (expected vitb-rvsa, vitl-rvsa or toy)");
}

}  // namespace mtp::rvsa
