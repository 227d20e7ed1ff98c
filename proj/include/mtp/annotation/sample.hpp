// Copyright (c) 2026, The MTP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "mtp/annotation/geometry.hpp"
#include "mtp/core/rng.hpp"
#include "mtp/core/tensor.hpp"

namespace mtp::annotation {

// The three annotation streams: rotated boxes only, instances, semantics.
enum class Stream : std::uint32_t { kSota = 0, kSior = 1, kFast = 2 };
inline constexpr std::size_t kNumStreams = 3;

inline const char* stream_name(Stream s) {
  switch (s) {
    case Stream::kSota: return "sota";
    case Stream::kSior: return "sior";
    case Stream::kFast: return "fast";
  }
  return "?";
}

inline Stream stream_from_index(std::size_t i) {
  if (i >= kNumStreams) throw ConfigError("stream index " + std::to_string(i) + " out of range");
  return static_cast<Stream>(i);
}

struct InstanceAnnotation {
  HBox hbox;
  Mask mask;
  std::size_t class_id = 0;
  bool operator==(const InstanceAnnotation&) const = default;
};

/// Instance i derives from rbox i; boxes whose mask came out empty are
/// removed from both lists and counted in `dropped`.
struct MultiTaskSample {
  Tensor image;  // C x H x W
  SemanticMap semantic;
  std::vector<InstanceAnnotation> instances;
  std::vector<RotatedBox> rboxes;
  Stream stream = Stream::kSota;
  std::size_t dropped = 0;

  std::size_t height() const { return semantic.height; }
  std::size_t width() const { return semantic.width; }
  bool operator==(const MultiTaskSample&) const = default;
};

inline MultiTaskSample build_sample(const std::vector<RotatedBox>& rboxes, Tensor image, Stream stream) {
  require_rank(image, 3, "build_sample image");
  const std::size_t h = image.dim(1), w = image.dim(2);
  MultiTaskSample s;
  s.stream = stream;
  for (const RotatedBox& b : rboxes) {
    if (!(b.w > 0) || !(b.h > 0)) throw LabelError("build_sample: box sides must be positive");
    RotatedBox nb = b;
    nb.theta = normalize_angle(b.theta);
    Mask m = rasterize_rbox(nb, h, w);
    if (m.empty()) {
      ++s.dropped;
      continue;
    }
    HBox hb = min_hbox(m);
    s.instances.push_back({hb, std::move(m), nb.class_id});
    s.rboxes.push_back(nb);
  }
  if (s.instances.empty()) {
    throw DegenerateSampleError("build_sample: none of " + std::to_string(rboxes.size()) +
                                " boxes covers a pixel center");
  }
  std::vector<ClassMask> items;
  for (const auto& inst : s.instances) items.push_back({&inst.mask, inst.class_id});
  s.semantic = compose_semantic(items, h, w);
  s.image = std::move(image);
  return s;
}

/// Every violated sample invariant, empty when the sample is well formed.
inline std::vector<std::string> audit_sample(const MultiTaskSample& s, std::size_t num_classes) {
  std::vector<std::string> bad;
  const std::size_t h = s.semantic.height, w = s.semantic.width;
  if (s.image.rank() != 3 || s.image.dim(1) != h || s.image.dim(2) != w) bad.push_back("image grid");
  if (!s.image.all_finite()) bad.push_back("image not finite");
  if (s.semantic.labels.size() != h * w) bad.push_back("semantic size");
  if (s.instances.size() != s.rboxes.size()) bad.push_back("instance/rbox count");
  if (s.instances.empty()) bad.push_back("no instances");
  for (std::size_t i = 0; i < s.rboxes.size(); ++i) {
    const RotatedBox& b = s.rboxes[i];
    const std::string tag = "rbox " + std::to_string(i) + ": ";
    if (!(b.w > 0) || !(b.h > 0)) bad.push_back(tag + "non-positive side");
    if (b.theta < -std::numbers::pi / 2 || b.theta >= std::numbers::pi / 2) bad.push_back(tag + "angle range");
    if (b.class_id >= num_classes) bad.push_back(tag + "class id");
    if (i >= s.instances.size()) continue;
    const InstanceAnnotation& inst = s.instances[i];
    if (inst.mask.height != h || inst.mask.width != w) {
      bad.push_back(tag + "mask grid");
      continue;
    }
    if (inst.mask.empty()) {
      bad.push_back(tag + "empty mask");
      continue;
    }
    if (inst.class_id != b.class_id) bad.push_back(tag + "class mismatch");
    if (inst.mask != rasterize_rbox(b, h, w)) bad.push_back(tag + "mask is not the box rasterization");
    if (inst.hbox != min_hbox(inst.mask)) bad.push_back(tag + "hbox is not the mask extent");
  }
  if (bad.empty()) {
    std::vector<ClassMask> items;
    for (const auto& inst : s.instances) items.push_back({&inst.mask, inst.class_id});
    if (compose_semantic(items, h, w) != s.semantic) bad.push_back("semantic map disagrees with instances");
  }
  return bad;
}

struct SynthSpec {
  std::size_t count = 8;
  std::size_t size = 32;  // square grid side
  std::size_t channels = 3;
  std::size_t classes = 4;
  std::size_t min_boxes = 1;
  std::size_t max_boxes = 3;
  Stream stream = Stream::kSota;
  std::uint64_t seed = 0;
};

struct Dataset {
  std::size_t height = 0, width = 0, channels = 0, classes = 0;
  Stream stream = Stream::kSota;
  std::vector<MultiTaskSample> samples;
  bool operator==(const Dataset&) const = default;
};

inline void validate(const SynthSpec& spec) {
  if (spec.count == 0) throw ConfigError("synth: sample count must be positive");
  if (spec.size < 8) throw ConfigError("synth: grid side must be at least 8");
  if (spec.channels == 0) throw ConfigError("synth: channel count must be positive");
  if (spec.classes == 0 || spec.classes > kMaxClasses) {
    throw ConfigError("synth: class count must lie in [1, " + std::to_string(kMaxClasses) + "]");
  }
  if (spec.min_boxes > spec.max_boxes) throw ConfigError("synth: min_boxes exceeds max_boxes");
}

/// Brightening applied inside boxes of class k on channel c.
inline double class_offset(std::size_t k, std::size_t c, std::size_t classes) {
  return 0.5 + static_cast<double>(k + 1) / static_cast<double>(classes) +
         0.25 * static_cast<double>((k + c) % 3);
}

/// Sample `index` depends only on (seed, index).
inline MultiTaskSample synth_sample(const SynthSpec& spec, std::size_t index) {
  Rng rng = Rng::derive(spec.seed, index);
  const std::size_t n = spec.size;
  const double side = static_cast<double>(n);
  const std::size_t nb = spec.min_boxes + rng.uniform_index(spec.max_boxes - spec.min_boxes + 1);
  std::vector<RotatedBox> boxes;
  for (std::size_t i = 0; i < nb; ++i) {
    RotatedBox b;
    b.w = rng.uniform(2.0, side / 2);
    b.h = rng.uniform(2.0, side / 2);
    b.theta = normalize_angle(rng.uniform(-std::numbers::pi / 2, std::numbers::pi / 2));
    const double ex = (std::abs(std::cos(b.theta)) * b.w + std::abs(std::sin(b.theta)) * b.h) / 2;
    const double ey = (std::abs(std::sin(b.theta)) * b.w + std::abs(std::cos(b.theta)) * b.h) / 2;
    b.cx = rng.uniform(ex - 0.5, side - 0.5 - ex);
    b.cy = rng.uniform(ey - 0.5, side - 0.5 - ey);
    b.class_id = rng.uniform_index(spec.classes);
    boxes.push_back(b);
  }
  Tensor image({spec.channels, n, n});
  for (double& v : image.vec()) v = 0.1 * rng.normal();
  for (const RotatedBox& b : boxes) {
    const Mask m = rasterize_rbox(b, n, n);
    for (std::size_t c = 0; c < spec.channels; ++c) {
      const double off = class_offset(b.class_id, c, spec.classes);
      for (std::size_t p = 0; p < n * n; ++p) {
        if (m.bits[p]) image[c * n * n + p] += off;
      }
    }
  }
  return build_sample(boxes, std::move(image), spec.stream);
}

inline Dataset synth_dataset(const SynthSpec& spec) {
  validate(spec);
  Dataset ds{spec.size, spec.size, spec.channels, spec.classes, spec.stream, {}};
  ds.samples.reserve(spec.count);
  for (std::size_t i = 0; i < spec.count; ++i) ds.samples.push_back(synth_sample(spec, i));
  return ds;
}

}  // namespace mtp::annotation
