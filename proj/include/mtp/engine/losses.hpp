// Copyright (c) 2026, The MTP Authors
// SPDX-License-Identifier: Apache-2.0
//
// Per-task losses over dense head outputs. Every loss returns its value
// together with the gradient with respect to the logits it consumed.
//
// Detection outputs hold one row per grid cell laid out as
//   [objectness, class logits (K), box regression (R)]
// with R = 4 for horizontal boxes and R = 5 for rotated boxes. A box is
// assigned to the cell containing its center; when several boxes share a
// cell the earliest one in the list keeps it.

#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "mtp/annotation/sample.hpp"
#include "mtp/core/autograd.hpp"
#include "mtp/core/error.hpp"
#include "mtp/core/tensor.hpp"

namespace mtp::engine {

struct LossGrad {
  double value = 0.0;
  Tensor grad;
};

inline double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }
inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// Binary cross-entropy of a logit against a 0/1 target.
inline double bce_logit(double z, double y) { return softplus(z) - y * z; }

inline double smooth_l1(double d) {
  const double a = std::abs(d);
  return a < 1.0 ? 0.5 * d * d : a - 0.5;
}
inline double smooth_l1_grad(double d) { return d > 1.0 ? 1.0 : d < -1.0 ? -1.0 : d; }

/// Cross-entropy of one row of logits; adds the gradient times `scale` to `g`.
inline double row_cross_entropy(const double* z, std::size_t k, std::size_t label, double scale, double* g) {
  double m = z[0];
  for (std::size_t i = 1; i < k; ++i) m = std::max(m, z[i]);
  double s = 0.0;
  for (std::size_t i = 0; i < k; ++i) s += std::exp(z[i] - m);
  const double lse = m + std::log(s);
  if (g) {
    for (std::size_t i = 0; i < k; ++i) g[i] += scale * (std::exp(z[i] - lse) - (i == label ? 1.0 : 0.0));
  }
  return lse - z[label];
}

/// Mean pixel cross-entropy over non-ignore pixels; logits are (H*W) x K.
inline LossGrad loss_semantic(const Tensor& logits, const annotation::SemanticMap& sem) {
  require_rank(logits, 2, "loss_semantic logits");
  const std::size_t n = sem.height * sem.width, k = logits.dim(1);
  if (logits.dim(0) != n) throw ShapeError("loss_semantic: logits rows do not match the map");
  std::size_t labeled = 0;
  for (auto v : sem.labels) {
    if (v == annotation::kIgnoreLabel) continue;
    if (v >= k) throw LabelError("loss_semantic: class id " + std::to_string(v) + " >= " + std::to_string(k));
    ++labeled;
  }
  LossGrad out{0.0, Tensor(logits.shape())};
  if (labeled == 0) return out;
  const double inv = 1.0 / static_cast<double>(labeled);
  for (std::size_t p = 0; p < n; ++p) {
    const auto v = sem.labels[p];
    if (v == annotation::kIgnoreLabel) continue;
    out.value += row_cross_entropy(logits.vec().data() + p * k, k, v, inv, out.grad.vec().data() + p * k);
  }
  out.value *= inv;
  return out;
}

/// Mean binary cross-entropy of a (H*W) x 1 logit map against a 0/1 mask.
inline LossGrad loss_mask(const Tensor& logits, const annotation::Mask& target) {
  const std::size_t n = target.height * target.width;
  if (logits.numel() != n) throw ShapeError("loss_mask: logits do not match the mask grid");
  LossGrad out{0.0, Tensor(logits.shape())};
  const double inv = 1.0 / static_cast<double>(n);
  for (std::size_t p = 0; p < n; ++p) {
    const double y = target.bits[p] ? 1.0 : 0.0;
    out.value += bce_logit(logits[p], y);
    out.grad[p] = inv * (sigmoid(logits[p]) - y);
  }
  out.value *= inv;
  return out;
}

struct BoxTarget {
  double cx, cy, w, h, theta;
  std::size_t class_id;
};

inline std::vector<BoxTarget> rotated_targets(const std::vector<annotation::RotatedBox>& boxes) {
  std::vector<BoxTarget> out;
  for (const auto& b : boxes) out.push_back({b.cx, b.cy, b.w, b.h, b.theta, b.class_id});
  return out;
}

/// Horizontal boxes as pixel-inclusive extents: center and side in pixels.
inline std::vector<BoxTarget> hbox_targets(const std::vector<annotation::InstanceAnnotation>& inst) {
  std::vector<BoxTarget> out;
  for (const auto& i : inst) {
    const auto& b = i.hbox;
    out.push_back({(b.x_min + b.x_max) / 2.0, (b.y_min + b.y_max) / 2.0, static_cast<double>(b.x_max - b.x_min + 1),
                   static_cast<double>(b.y_max - b.y_min + 1), 0.0, i.class_id});
  }
  return out;
}

/// Cell assignment and regression targets on a grid x grid lattice of
/// stride-pixel cells.
struct DenseTargets {
  std::size_t grid = 0, classes = 0, reg = 0;
  std::vector<int> owner;  // per cell: box index or -1
  std::vector<std::size_t> cls;
  Tensor regression;  // cells x reg

  std::size_t cells() const { return grid * grid; }
  std::size_t positives() const {
    return static_cast<std::size_t>(std::count_if(owner.begin(), owner.end(), [](int o) { return o >= 0; }));
  }
};

inline DenseTargets assign_targets(const std::vector<BoxTarget>& boxes, std::size_t grid, double stride,
                                   std::size_t classes, std::size_t reg) {
  if (reg != 4 && reg != 5) throw ConfigError("assign_targets: regression width must be 4 or 5");
  DenseTargets t{grid, classes, reg, std::vector<int>(grid * grid, -1), std::vector<std::size_t>(grid * grid, 0),
                 Tensor({grid * grid, reg})};
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const BoxTarget& b = boxes[i];
    if (b.class_id >= classes) {
      throw LabelError("box " + std::to_string(i) + ": class id " + std::to_string(b.class_id) + " >= " +
                       std::to_string(classes));
    }
    if (!(b.w > 0) || !(b.h > 0)) throw LabelError("box " + std::to_string(i) + ": non-positive side");
    const double gx = std::floor((b.cx + 0.5) / stride), gy = std::floor((b.cy + 0.5) / stride);
    if (!(gx >= 0) || !(gy >= 0) || gx >= static_cast<double>(grid) || gy >= static_cast<double>(grid)) {
      throw LabelError("box " + std::to_string(i) + ": center off the grid");
    }
    const std::size_t cell = static_cast<std::size_t>(gy) * grid + static_cast<std::size_t>(gx);
    if (t.owner[cell] >= 0) continue;
    t.owner[cell] = static_cast<int>(i);
    t.cls[cell] = b.class_id;
    const double center_x = gx * stride + (stride - 1) / 2, center_y = gy * stride + (stride - 1) / 2;
    double* r = t.regression.vec().data() + cell * reg;
    r[0] = (b.cx - center_x) / stride;
    r[1] = (b.cy - center_y) / stride;
    r[2] = std::log(b.w / stride);
    r[3] = std::log(b.h / stride);
    if (reg == 5) r[4] = b.theta;
  }
  return t;
}

struct DetectionTerms {
  double objectness = 0, classification = 0, regression = 0;
  double total() const { return objectness + classification + regression; }
};

/// Objectness BCE averaged over all cells, plus class cross-entropy and
/// summed smooth-L1 regression averaged over positive cells.
inline LossGrad loss_detection(const Tensor& out, const DenseTargets& t, DetectionTerms* terms = nullptr) {
  require_rank(out, 2, "loss_detection output");
  const std::size_t width = 1 + t.classes + t.reg;
  if (out.dim(0) != t.cells() || out.dim(1) != width) {
    throw ShapeError("loss_detection: output " + shape_str(out.shape()) + " does not match targets");
  }
  LossGrad lg{0.0, Tensor(out.shape())};
  DetectionTerms d;
  const std::size_t pos = t.positives();
  const double inv_cells = 1.0 / static_cast<double>(t.cells());
  const double inv_pos = pos ? 1.0 / static_cast<double>(pos) : 0.0;
  for (std::size_t c = 0; c < t.cells(); ++c) {
    const double* z = out.vec().data() + c * width;
    double* g = lg.grad.vec().data() + c * width;
    const double y = t.owner[c] >= 0 ? 1.0 : 0.0;
    d.objectness += bce_logit(z[0], y);
    g[0] = inv_cells * (sigmoid(z[0]) - y);
    if (t.owner[c] < 0) continue;
    d.classification += row_cross_entropy(z + 1, t.classes, t.cls[c], inv_pos, g + 1);
    const double* r = t.regression.vec().data() + c * t.reg;
    for (std::size_t j = 0; j < t.reg; ++j) {
      const double diff = z[1 + t.classes + j] - r[j];
      d.regression += smooth_l1(diff);
      g[1 + t.classes + j] = inv_pos * smooth_l1_grad(diff);
    }
  }
  d.objectness *= inv_cells;
  d.classification *= inv_pos;
  d.regression *= inv_pos;
  lg.value = d.total();
  if (terms) *terms = d;
  return lg;
}

/// Union of all instance masks.
inline annotation::Mask union_mask(const std::vector<annotation::InstanceAnnotation>& inst, std::size_t h,
                                   std::size_t w) {
  annotation::Mask m(h, w);
  for (const auto& i : inst) {
    if (i.mask.height != h || i.mask.width != w) throw ShapeError("union_mask: mask grid mismatch");
    for (std::size_t p = 0; p < m.bits.size(); ++p) m.bits[p] |= i.mask.bits[p];
  }
  return m;
}

/// Records a loss whose gradient was computed in the forward pass.
inline ag::Var loss_var(ag::Var logits, LossGrad lg) {
  ag::Tape& t = *logits.tape();
  Tensor grad = std::move(lg.grad);
  return t.record(Tensor::scalar(lg.value), {logits}, [logits, grad](ag::Tape& t, const Tensor& g) {
    t.accumulate(logits, ops::scale(grad, g[0]));
  });
}

}  // namespace mtp::engine
