// Copyright (c) 2026, The MTP Authors
// SPDX-License-Identifier: Apache-2.0
//
// Task heads. Each stream owns its own set, keyed "heads.<stream>.*", so the
// class spaces of the streams never share logits:
//
//   heads.<s>.sem.level<k>.{weight,bias}   per pyramid level, C -> K
//   heads.<s>.ins.box.{weight,bias}        C -> 1 + K + 4 per cell
//   heads.<s>.ins.mask.{weight,bias}       C -> 1 per token
//   heads.<s>.rot.{weight,bias}            C -> 1 + K + 5 per cell
//
// Dense outputs live on the token grid (one cell per patch). Pixel-level
// outputs are bilinearly upsampled from it.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "mtp/annotation/sample.hpp"
#include "mtp/core/autograd.hpp"
#include "mtp/rvsa/config.hpp"
#include "mtp/rvsa/layer.hpp"

namespace mtp::engine {

using StreamClasses = std::array<std::size_t, annotation::kNumStreams>;

inline std::string head_prefix(annotation::Stream s) { return std::string("heads.") + annotation::stream_name(s); }

inline bool is_head_key(const std::string& key) { return key.rfind("heads.", 0) == 0; }

inline void init_heads(rvsa::ParamMap& p, const rvsa::RvsaConfig& cfg, const StreamClasses& classes, Rng& rng) {
  const std::size_t c = cfg.embed_dim;
  auto linear = [&](const std::string& key, std::size_t out) {
    p[key + ".weight"] = rvsa::normal_tensor({out, c}, rvsa::kInitStd, rng);
    p[key + ".bias"] = Tensor({out});
  };
  for (std::size_t i = 0; i < annotation::kNumStreams; ++i) {
    const std::size_t k = classes[i];
    if (k == 0) throw ConfigError("stream class count must be positive");
    const std::string pre = head_prefix(annotation::stream_from_index(i));
    for (std::size_t l = 0; l < cfg.pyramid_layers.size(); ++l) linear(pre + ".sem.level" + std::to_string(l), k);
    linear(pre + ".ins.box", 1 + k + 4);
    linear(pre + ".ins.mask", 1);
    linear(pre + ".rot", 1 + k + 5);
  }
}

/// 1-D bilinear interpolation weights from n_in samples to n_in*stride
/// samples, half-pixel aligned, edge-clamped.
inline Tensor upsample_1d(std::size_t n_in, std::size_t stride) {
  const std::size_t n_out = n_in * stride;
  Tensor u({n_out, n_in});
  for (std::size_t p = 0; p < n_out; ++p) {
    double src = (static_cast<double>(p) + 0.5) / static_cast<double>(stride) - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(n_in - 1));
    const std::size_t i0 = static_cast<std::size_t>(std::floor(src));
    const std::size_t i1 = std::min(i0 + 1, n_in - 1);
    const double f = src - static_cast<double>(i0);
    u[p * n_in + i0] += 1.0 - f;
    u[p * n_in + i1] += f;
  }
  return u;
}

/// (H*W) x (G*G) matrix taking a row-major token map to a row-major pixel map.
inline Tensor upsample_matrix(std::size_t grid, std::size_t stride) {
  const Tensor u = upsample_1d(grid, stride);
  const std::size_t n = grid * stride;
  Tensor m({n * n, grid * grid});
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x)
      for (std::size_t gy = 0; gy < grid; ++gy) {
        const double wy = u[y * grid + gy];
        if (wy == 0.0) continue;
        for (std::size_t gx = 0; gx < grid; ++gx) m[(y * n + x) * grid * grid + gy * grid + gx] = wy * u[x * grid + gx];
      }
  return m;
}

struct HeadOutputs {
  ag::Var semantic;  // (H*W) x K
  ag::Var ins_box;   // cells x (1 + K + 4)
  ag::Var ins_mask;  // (H*W) x 1
  ag::Var rotated;   // cells x (1 + K + 5)
};

inline HeadOutputs heads_forward(const std::vector<ag::Var>& pyramid, annotation::Stream stream,
                                 const rvsa::VarMap& vars, ag::Var upsample) {
  const std::string pre = head_prefix(stream);
  auto lin = [&](ag::Var x, const std::string& key) {
    return ag::linear(x, rvsa::param(vars, key + ".weight"), rvsa::param(vars, key + ".bias"));
  };
  std::vector<ag::Var> sem;
  for (std::size_t l = 0; l < pyramid.size(); ++l) {
    sem.push_back(ag::matmul(upsample, lin(pyramid[l], pre + ".sem.level" + std::to_string(l))));
  }
  const ag::Var fused = ag::mean(pyramid);
  return {ag::mean(sem), lin(fused, pre + ".ins.box"), ag::matmul(upsample, lin(fused, pre + ".ins.mask")),
          lin(fused, pre + ".rot")};
}

}  // namespace mtp::engine
