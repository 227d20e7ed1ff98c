// Copyright (c) 2026, The MTP Authors
// SPDX-License-Identifier: Apache-2.0
//
// The four loss families as differentiable ops of their logits, with random
// problem generators for gradient checking.

#pragma once

#include <utility>
#include <vector>

#include "mtp/core/gradcheck.hpp"
#include "mtp/engine/losses.hpp"

namespace mtp::engine::diff {

/// Input: pixel logits (H*W x K).
inline DifferentiableOp loss_semantic(annotation::SemanticMap sem) {
  return tape_op("loss_semantic", [sem](const std::vector<ag::Var>& in) {
    return loss_var(in[0], engine::loss_semantic(in[0].value(), sem));
  });
}

/// Input: cell outputs (cells x (1 + K + 5)).
inline DifferentiableOp loss_rotated(DenseTargets t) {
  return tape_op("loss_rotated", [t](const std::vector<ag::Var>& in) {
    return loss_var(in[0], loss_detection(in[0].value(), t));
  });
}

/// Input: cell outputs (cells x (1 + K + 4)).
inline DifferentiableOp loss_instance_box(DenseTargets t) {
  return tape_op("loss_instance_box", [t](const std::vector<ag::Var>& in) {
    return loss_var(in[0], loss_detection(in[0].value(), t));
  });
}

/// Input: foreground logits (H*W x 1).
inline DifferentiableOp loss_instance_mask(annotation::Mask m) {
  return tape_op("loss_instance_mask", [m](const std::vector<ag::Var>& in) {
    return loss_var(in[0], loss_mask(in[0].value(), m));
  });
}

struct LossCase {
  DifferentiableOp op;
  std::vector<Tensor> inputs;
};

/// A small synthetic labelled scene: `grid` x `grid` cells of `stride` pixels.
inline annotation::MultiTaskSample random_scene(Rng& rng, std::size_t grid, std::size_t stride, std::size_t classes) {
  annotation::SynthSpec spec;
  spec.size = grid * stride;
  spec.channels = 1;
  spec.classes = classes;
  spec.min_boxes = 1;
  spec.max_boxes = 3;
  spec.count = 1;
  spec.seed = rng.next_u64();
  return annotation::synth_sample(spec, 0);
}

inline Tensor random_logits(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.vec()) v = rng.normal();
  return t;
}

inline LossCase semantic_case(std::uint64_t seed) {
  Rng rng(seed);
  const auto s = random_scene(rng, 4, 2, 3);
  return {loss_semantic(s.semantic), {random_logits({64, 3}, rng)}};
}

inline LossCase rotated_case(std::uint64_t seed) {
  Rng rng(seed);
  const auto s = random_scene(rng, 4, 2, 3);
  return {loss_rotated(assign_targets(rotated_targets(s.rboxes), 4, 2, 3, 5)), {random_logits({16, 9}, rng)}};
}

inline LossCase instance_box_case(std::uint64_t seed) {
  Rng rng(seed);
  const auto s = random_scene(rng, 4, 2, 3);
  return {loss_instance_box(assign_targets(hbox_targets(s.instances), 4, 2, 3, 4)), {random_logits({16, 8}, rng)}};
}

inline LossCase instance_mask_case(std::uint64_t seed) {
  Rng rng(seed);
  const auto s = random_scene(rng, 4, 2, 3);
  return {loss_instance_mask(union_mask(s.instances, 8, 8)), {random_logits({64, 1}, rng)}};
}

}  // namespace mtp::engine::diff
