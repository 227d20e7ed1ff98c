// Copyright (c) 2026, The MTP Authors
// SPDX-License-Identifier: Apache-2.0
//
// Named gradient-check problems covering every differentiable op, the
// attention layers and the loss families. Each problem is generated from a
// seed so a run is reproducible.

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mtp/core/diff_ops.hpp"
#include "mtp/core/gradcheck.hpp"
#include "mtp/engine/diff_ops.hpp"
#include "mtp/rvsa/diff_ops.hpp"

namespace mtp::suite {

struct Problem {
  DifferentiableOp op;
  std::vector<Tensor> inputs;
};

struct Entry {
  std::string name;
  std::function<Problem(std::uint64_t seed)> make;
};

inline Tensor gaussian(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.vec()) v = scale * rng.normal();
  return t;
}

inline std::vector<Tensor> layer_inputs(Rng& rng, std::size_t dim, std::size_t heads, std::size_t side) {
  return {gaussian({dim, side, side}, rng),      gaussian({3 * dim, dim}, rng, 0.5), gaussian({3 * dim}, rng, 0.1),
          gaussian({5 * heads, dim}, rng, 0.3),  gaussian({5 * heads}, rng, 0.3),    gaussian({dim, dim}, rng, 0.5),
          gaussian({dim}, rng, 0.1)};
}

inline const std::vector<Entry>& registry() {
  static const std::vector<Entry> entries = [] {
    std::vector<Entry> e;
    auto add = [&](std::string name, std::function<Problem(Rng&)> f) {
      e.push_back({std::move(name), [f](std::uint64_t seed) {
                     Rng rng(seed);
                     return f(rng);
                   }});
    };
    add("matmul", [](Rng& r) { return Problem{diff::matmul(), {gaussian({3, 4}, r), gaussian({4, 2}, r)}}; });
    add("transpose", [](Rng& r) { return Problem{diff::transpose(), {gaussian({3, 5}, r)}}; });
    add("softmax_rows", [](Rng& r) { return Problem{diff::softmax_rows(), {gaussian({4, 5}, r, 2.0)}}; });
    add("gap", [](Rng& r) { return Problem{diff::gap(), {gaussian({3, 4, 2}, r)}}; });
    add("leaky_relu", [](Rng& r) { return Problem{diff::leaky_relu(), {gaussian({4, 4}, r)}}; });
    add("gelu", [](Rng& r) { return Problem{diff::gelu(), {gaussian({4, 4}, r)}}; });
    add("linear", [](Rng& r) {
      return Problem{diff::linear(), {gaussian({3, 4}, r), gaussian({2, 4}, r), gaussian({2}, r)}};
    });
    add("layer_norm", [](Rng& r) {
      return Problem{diff::layer_norm_rows(), {gaussian({3, 5}, r), gaussian({5}, r), gaussian({5}, r)}};
    });
    add("sample_window", [](Rng& r) {
      Tensor raw({5});
      raw[0] = r.uniform(-0.4, 0.4);
      raw[1] = r.uniform(-0.4, 0.4);
      raw[2] = r.uniform(-1.5, 1.5);
      raw[3] = r.uniform(-1.5, 1.5);
      raw[4] = r.uniform(-1.0, 1.0);
      const std::size_t row = r.uniform_index(2), col = r.uniform_index(2);
      return Problem{rvsa::diff::sample_window(rvsa::window_corners(row, col, 4), 4), {gaussian({2, 8, 8}, r), raw}};
    });
    add("window_attention", [](Rng& r) {
      return Problem{rvsa::diff::window_attention(), {gaussian({4, 3}, r), gaussian({5, 3}, r), gaussian({5, 2}, r)}};
    });
    add("window_params", [](Rng& r) {
      return Problem{rvsa::diff::window_params(), {gaussian({4, 2, 2}, r), gaussian({10, 4}, r), gaussian({10}, r)}};
    });
    add("rvsa_layer", [](Rng& r) {
      return Problem{rvsa::diff::attention_layer(2, 2, rvsa::AttentionMode::kRotatedWindow), layer_inputs(r, 8, 2, 4)};
    });
    add("window_layer", [](Rng& r) {
      return Problem{rvsa::diff::attention_layer(2, 2, rvsa::AttentionMode::kPlainWindow), layer_inputs(r, 8, 2, 4)};
    });
    add("full_attention_layer", [](Rng& r) {
      return Problem{rvsa::diff::attention_layer(2, 4, rvsa::AttentionMode::kFull), layer_inputs(r, 8, 2, 4)};
    });
    auto loss = [&](std::string name, engine::diff::LossCase (*make)(std::uint64_t)) {
      e.push_back({std::move(name), [make](std::uint64_t seed) {
                     auto c = make(seed);
                     return Problem{std::move(c.op), std::move(c.inputs)};
                   }});
    };
    loss("loss_semantic", engine::diff::semantic_case);
    loss("loss_rotated", engine::diff::rotated_case);
    loss("loss_instance_box", engine::diff::instance_box_case);
    loss("loss_instance_mask", engine::diff::instance_mask_case);
    return e;
  }();
  return entries;
}

inline const Entry* find(const std::string& name) {
  for (const Entry& e : registry())
    if (e.name == name) return &e;
  return nullptr;
}

/// Worst error over `seeds` consecutive seeds starting at `seed`.
inline double check(const Entry& e, std::uint64_t seed, std::size_t seeds, GradCheckOptions opt = {}) {
  double worst = 0.0;
  for (std::size_t i = 0; i < seeds; ++i) {
    const Problem p = e.make(seed + i);
    worst = std::max(worst, grad_check(p.op, p.inputs, opt));
  }
  return worst;
}

}  // namespace mtp::suite
