// Copyright (c) 2026, The MTP Authors
// SPDX-License-Identifier: Apache-2.0
//
// Rotated boxes, their rasterization, and the derived horizontal boxes and
// semantic maps. Pixel (x, y) is column x, row y; its center sits at the
// integer coordinate.

#pragma once

#include <algorithm>
#include <climits>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "mtp/core/error.hpp"

namespace mtp::annotation {

inline constexpr std::uint8_t kIgnoreLabel = 255;
inline constexpr std::size_t kMaxClasses = 255;
// Containment slack for pixel centers on the box edge.
inline constexpr double kEdgeTolerance = 1e-9;

/// Maps any angle into [-pi/2, pi/2). A rectangle rotated by pi is itself.
inline double normalize_angle(double theta) {
  constexpr double pi = std::numbers::pi;
  double t = theta - pi * std::floor((theta + pi / 2) / pi);
  if (t >= pi / 2) t -= pi;
  if (t < -pi / 2) t = -pi / 2;
  return t;
}

struct RotatedBox {
  double cx = 0, cy = 0, w = 1, h = 1, theta = 0;
  std::size_t class_id = 0;

  bool operator==(const RotatedBox&) const = default;
};

inline void validate_box(const RotatedBox& b, std::size_t num_classes) {
  if (!(b.w > 0) || !(b.h > 0) || !std::isfinite(b.w) || !std::isfinite(b.h)) {
    throw LabelError("rotated box needs positive finite sides");
  }
  if (!std::isfinite(b.cx) || !std::isfinite(b.cy) || !std::isfinite(b.theta)) {
    throw LabelError("rotated box has a non-finite center or angle");
  }
  if (b.class_id >= num_classes) {
    throw LabelError("class id " + std::to_string(b.class_id) + " outside " +
                     std::to_string(num_classes) + " classes");
  }
}

struct Mask {
  std::size_t height = 0, width = 0;
  std::vector<std::uint8_t> bits;

  Mask() = default;
  Mask(std::size_t h, std::size_t w) : height(h), width(w), bits(h * w, 0) {}

  std::uint8_t& at(std::size_t x, std::size_t y) { return bits[y * width + x]; }
  std::uint8_t at(std::size_t x, std::size_t y) const { return bits[y * width + x]; }
  std::size_t count() const {
    std::size_t n = 0;
    for (auto b : bits) n += b != 0;
    return n;
  }
  bool empty() const { return count() == 0; }
  bool operator==(const Mask&) const = default;
};

/// Box-frame coordinates of a point.
inline void to_box_frame(const RotatedBox& b, double x, double y, double& u, double& v) {
  const double c = std::cos(b.theta), s = std::sin(b.theta);
  const double dx = x - b.cx, dy = y - b.cy;
  u = c * dx + s * dy;
  v = -s * dx + c * dy;
}

inline bool contains(const RotatedBox& b, double x, double y) {
  double u, v;
  to_box_frame(b, x, y, u, v);
  return std::abs(u) <= b.w / 2 + kEdgeTolerance && std::abs(v) <= b.h / 2 + kEdgeTolerance;
}

/// Sets every pixel whose center lies inside or on the box. The result may be
/// empty when the box misses all pixel centers.
inline Mask rasterize_rbox(const RotatedBox& b, std::size_t height, std::size_t width) {
  if (height == 0 || width == 0) throw ConfigError("rasterize: grid must be at least 1x1");
  Mask m(height, width);
  const double c = std::abs(std::cos(b.theta)), s = std::abs(std::sin(b.theta));
  const double ex = (c * b.w + s * b.h) / 2 + 1.0, ey = (s * b.w + c * b.h) / 2 + 1.0;
  const auto lo = [](double v, std::size_t n) {
    return static_cast<std::size_t>(std::clamp(std::floor(v), 0.0, static_cast<double>(n)));
  };
  const auto hi = [](double v, std::size_t n) {
    return static_cast<std::size_t>(std::clamp(std::ceil(v) + 1, 0.0, static_cast<double>(n)));
  };
  for (std::size_t y = lo(b.cy - ey, height); y < hi(b.cy + ey, height); ++y) {
    for (std::size_t x = lo(b.cx - ex, width); x < hi(b.cx + ex, width); ++x) {
      if (contains(b, static_cast<double>(x), static_cast<double>(y))) m.at(x, y) = 1;
    }
  }
  return m;
}

struct HBox {
  int x_min = 0, y_min = 0, x_max = 0, y_max = 0;
  bool operator==(const HBox&) const = default;
};

/// Tightest axis-aligned pixel rectangle around the set pixels.
inline HBox min_hbox(const Mask& m) {
  int x0 = INT_MAX, y0 = INT_MAX, x1 = -1, y1 = -1;
  for (std::size_t y = 0; y < m.height; ++y) {
    const std::uint8_t* row = m.bits.data() + y * m.width;
    for (std::size_t x = 0; x < m.width; ++x) {
      if (!row[x]) continue;
      x0 = std::min(x0, static_cast<int>(x));
      x1 = std::max(x1, static_cast<int>(x));
      y0 = std::min(y0, static_cast<int>(y));
      y1 = std::max(y1, static_cast<int>(y));
    }
  }
  if (x1 < 0) throw EmptyAnnotationError("min_hbox: mask has no set pixels");
  return {x0, y0, x1, y1};
}

struct SemanticMap {
  std::size_t height = 0, width = 0;
  std::vector<std::uint8_t> labels;

  std::uint8_t at(std::size_t x, std::size_t y) const { return labels[y * width + x]; }
  bool operator==(const SemanticMap&) const = default;
};

struct ClassMask {
  const Mask* mask;
  std::size_t class_id;
};

/// Paints masks in order over an ignore background; later masks win.
inline SemanticMap compose_semantic(const std::vector<ClassMask>& items, std::size_t height,
                                    std::size_t width) {
  SemanticMap out{height, width, std::vector<std::uint8_t>(height * width, kIgnoreLabel)};
  for (const auto& [mask, cls] : items) {
    if (mask->height != height || mask->width != width) {
      throw ShapeError("compose_semantic: mask grid does not match the map");
    }
    if (cls >= kMaxClasses) throw LabelError("compose_semantic: class id collides with ignore label");
    for (std::size_t i = 0; i < out.labels.size(); ++i) {
      if (mask->bits[i]) out.labels[i] = static_cast<std::uint8_t>(cls);
    }
  }
  return out;
}

}  // namespace mtp::annotation
