// Copyright (c) 2026, The MTP Authors
// SPDX-License-Identifier: Apache-2.0
//
// Window geometry for rotated varied-size window attention.
//
// Coordinates: x is the column index, y the row index, and integer
// coordinates are pixel centers. Window (r, c) of size s therefore spans
// [c*s - 0.5, c*s + s - 0.5] horizontally, with its lattice points at the
// integer pixel centers inside that span.
//
// A window transform maps a residual r (point minus window center) to
//
//   p' = center + (o_x, o_y) + [ cos t   sin t ] [ r_x * s_x ]
//                              [ -sin t  cos t ] [ r_y * s_y ]
//
// The parameter head predicts raw values (ds_x, ds_y, o_x, o_y, t) and the
// effective scales are s = 1 + ds, so an all-zero head is the identity.

#pragma once

#include <array>
#include <cmath>
#include <span>
#include <utility>
#include <vector>

#include "mtp/core/autograd.hpp"
#include "mtp/core/error.hpp"
#include "mtp/core/ops.hpp"
#include "mtp/core/tensor.hpp"

namespace mtp::rvsa {

inline constexpr std::size_t kParamsPerHead = 5;

struct WindowGrid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t window_size = 0;
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t count() const { return rows * cols; }
};

inline WindowGrid make_grid(std::size_t channels, std::size_t height, std::size_t width, std::size_t s) {
  if (s == 0 || height % s != 0 || width % s != 0) {
    throw ShapeError("window size " + std::to_string(s) + " does not divide " + std::to_string(height) +
                     "x" + std::to_string(width));
  }
  return {height / s, width / s, s, channels, height, width};
}

/// Splits a C x H x W map into (H/s)(W/s) windows of C x s x s, row-major.
inline std::pair<WindowGrid, std::vector<Tensor>> partition_windows(const Tensor& x, std::size_t s) {
  require_rank(x, 3, "partition_windows");
  const WindowGrid grid = make_grid(x.dim(0), x.dim(1), x.dim(2), s);
  std::vector<Tensor> windows;
  windows.reserve(grid.count());
  for (std::size_t r = 0; r < grid.rows; ++r) {
    for (std::size_t c = 0; c < grid.cols; ++c) {
      Tensor w({grid.channels, s, s});
      for (std::size_t ch = 0; ch < grid.channels; ++ch)
        for (std::size_t i = 0; i < s; ++i)
          for (std::size_t j = 0; j < s; ++j) w.at(ch, i, j) = x.at(ch, r * s + i, c * s + j);
      windows.push_back(std::move(w));
    }
  }
  return {grid, std::move(windows)};
}

/// Inverse of partition_windows.
inline Tensor merge_windows(const WindowGrid& grid, const std::vector<Tensor>& windows) {
  if (windows.size() != grid.count()) throw ShapeError("merge_windows: window count mismatch");
  const std::size_t s = grid.window_size;
  Tensor x({grid.channels, grid.height, grid.width});
  for (std::size_t r = 0; r < grid.rows; ++r) {
    for (std::size_t c = 0; c < grid.cols; ++c) {
      const Tensor& w = windows[r * grid.cols + c];
      if (w.shape() != Shape{grid.channels, s, s}) throw ShapeError("merge_windows: window shape mismatch");
      for (std::size_t ch = 0; ch < grid.channels; ++ch)
        for (std::size_t i = 0; i < s; ++i)
          for (std::size_t j = 0; j < s; ++j) x.at(ch, r * s + i, c * s + j) = w.at(ch, i, j);
    }
  }
  return x;
}

/// Token-row indices (row y*W + x of an HW x C token matrix) of window (r, c).
inline std::vector<std::size_t> window_token_rows(std::size_t r, std::size_t c, std::size_t s,
                                                  std::size_t width) {
  std::vector<std::size_t> idx;
  idx.reserve(s * s);
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t j = 0; j < s; ++j) idx.push_back((r * s + i) * width + c * s + j);
  return idx;
}

struct WindowCorners {
  double x_l = 0, y_l = 0, x_r = 0, y_r = 0;

  double x_c() const { return (x_l + x_r) / 2.0; }
  double y_c() const { return (y_l + y_r) / 2.0; }
  /// Corner-to-center residuals.
  double x_lr() const { return x_l - x_c(); }
  double y_lr() const { return y_l - y_c(); }
  double x_rr() const { return x_r - x_c(); }
  double y_rr() const { return y_r - y_c(); }
};

inline WindowCorners window_corners(std::size_t r, std::size_t c, std::size_t s) {
  const double half = 0.5;
  const double x_l = static_cast<double>(c * s) - half;
  const double y_l = static_cast<double>(r * s) - half;
  return {x_l, y_l, x_l + static_cast<double>(s), y_l + static_cast<double>(s)};
}

/// Effective transform of one window for one head.
struct WindowTransform {
  double scale_x = 1.0;
  double scale_y = 1.0;
  double offset_x = 0.0;
  double offset_y = 0.0;
  double angle = 0.0;

  /// From raw head outputs (ds_x, ds_y, o_x, o_y, theta).
  static WindowTransform from_raw(std::span<const double> raw) {
    if (raw.size() != kParamsPerHead) throw ShapeError("window transform needs 5 raw values");
    return {1.0 + raw[0], 1.0 + raw[1], raw[2], raw[3], raw[4]};
  }

  std::array<double, kParamsPerHead> raw() const {
    return {scale_x - 1.0, scale_y - 1.0, offset_x, offset_y, angle};
  }
};

/// Per-head transforms of one window.
struct WindowParams {
  std::vector<WindowTransform> heads;
};

struct Point {
  double x = 0, y = 0;
};

/// Image of residual (rx, ry) around `center` under transform `t`.
inline Point apply_transform(Point center, double rx, double ry, const WindowTransform& t) {
  const double c = std::cos(t.angle), s = std::sin(t.angle);
  const double ux = rx * t.scale_x, uy = ry * t.scale_y;
  return {center.x + t.offset_x + (c * ux + s * uy), center.y + t.offset_y + (-s * ux + c * uy)};
}

struct TransformedWindow {
  Point upper_left;
  Point lower_right;
  Point upper_right;
  Point lower_left;
  /// Linear part A (row-major) and translation b of p' = A r + b.
  std::array<double, 4> linear{};
  Point translation;

  Point map(double rx, double ry) const {
    return {linear[0] * rx + linear[1] * ry + translation.x, linear[2] * rx + linear[3] * ry + translation.y};
  }
};

inline TransformedWindow transform_window(const WindowCorners& w, const WindowTransform& t) {
  const Point center{w.x_c(), w.y_c()};
  TransformedWindow out;
  out.upper_left = apply_transform(center, w.x_lr(), w.y_lr(), t);
  out.lower_right = apply_transform(center, w.x_rr(), w.y_rr(), t);
  out.upper_right = apply_transform(center, w.x_rr(), w.y_lr(), t);
  out.lower_left = apply_transform(center, w.x_lr(), w.y_rr(), t);
  const double c = std::cos(t.angle), s = std::sin(t.angle);
  out.linear = {c * t.scale_x, s * t.scale_y, -s * t.scale_x, c * t.scale_y};
  out.translation = {center.x + t.offset_x, center.y + t.offset_y};
  return out;
}

// ------------------------------------------------------ parameter head

/// Raw head outputs for one window: Linear(LeakyReLU(GAP(x_w))), 1 x 5h.
inline Tensor window_param_logits(const Tensor& x_w, const Tensor& weight, const Tensor& bias,
                                  double slope = ops::kDefaultLeakySlope) {
  require_rank(x_w, 3, "predict_window_params input");
  if (weight.rank() != 2 || weight.dim(1) != x_w.dim(0) || weight.dim(0) % kParamsPerHead != 0 ||
      bias.numel() != weight.dim(0)) {
    throw ShapeError("window parameter head expects weight [5h x " + std::to_string(x_w.dim(0)) +
                     "] and bias [5h], got " + shape_str(weight.shape()) + " and " + shape_str(bias.shape()));
  }
  const Tensor pooled = ops::leaky_relu(ops::gap(x_w), slope).reshaped({1, x_w.dim(0)});
  return ops::linear(pooled, weight, bias);
}

inline WindowParams predict_window_params(const Tensor& x_w, const Tensor& weight, const Tensor& bias,
                                          double slope = ops::kDefaultLeakySlope) {
  const Tensor raw = window_param_logits(x_w, weight, bias, slope);
  WindowParams p;
  for (std::size_t h = 0; h < raw.numel() / kParamsPerHead; ++h) {
    p.heads.push_back(WindowTransform::from_raw(raw.data().subspan(h * kParamsPerHead, kParamsPerHead)));
  }
  return p;
}

inline ag::Var window_param_logits(ag::Var x_w, ag::Var weight, ag::Var bias,
                                   double slope = ops::kDefaultLeakySlope) {
  const std::size_t c = x_w.value().dim(0);
  return ag::linear(ag::reshape(ag::leaky_relu(ag::gap(x_w), slope), {1, c}), weight, bias);
}

// ------------------------------------------------------------- sampling

namespace detail {

inline double read_zero_padded(const double* plane, std::ptrdiff_t h, std::ptrdiff_t w,
                               std::ptrdiff_t y, std::ptrdiff_t x) {
  if (y < 0 || x < 0 || y >= h || x >= w) return 0.0;
  return plane[y * w + x];
}

/// Sample locations of the s x s grid plus their derivatives with respect to
/// the five raw parameters.
struct SamplePoint {
  double x, y;
  std::array<double, kParamsPerHead> dx, dy;
};

inline std::vector<SamplePoint> sample_points(const WindowCorners& w, const WindowTransform& t, std::size_t s) {
  const double c = std::cos(t.angle), sn = std::sin(t.angle);
  const double xc = w.x_c(), yc = w.y_c();
  const double step_x = (w.x_r - w.x_l) / static_cast<double>(s);
  const double step_y = (w.y_r - w.y_l) / static_cast<double>(s);
  std::vector<SamplePoint> pts;
  pts.reserve(s * s);
  for (std::size_t i = 0; i < s; ++i) {
    const double ry = w.y_l + (static_cast<double>(i) + 0.5) * step_y - yc;
    for (std::size_t j = 0; j < s; ++j) {
      const double rx = w.x_l + (static_cast<double>(j) + 0.5) * step_x - xc;
      const double ux = rx * t.scale_x, uy = ry * t.scale_y;
      SamplePoint p;
      p.x = xc + t.offset_x + (c * ux + sn * uy);
      p.y = yc + t.offset_y + (-sn * ux + c * uy);
      p.dx = {c * rx, sn * ry, 1.0, 0.0, -sn * ux + c * uy};
      p.dy = {-sn * rx, c * ry, 0.0, 1.0, -c * ux - sn * uy};
      pts.push_back(p);
    }
  }
  return pts;
}

}  // namespace detail

/// Bilinearly resamples `feature` (C' x H x W) on the s x s grid of the
/// transformed window. Reads outside the map contribute zero.
inline Tensor sample_window(const Tensor& feature, const WindowCorners& corners, const WindowTransform& t,
                            std::size_t s) {
  require_rank(feature, 3, "sample_window");
  if (s == 0) throw ShapeError("sample_window: s must be positive");
  const std::size_t ch = feature.dim(0);
  const auto h = static_cast<std::ptrdiff_t>(feature.dim(1));
  const auto w = static_cast<std::ptrdiff_t>(feature.dim(2));
  const auto pts = detail::sample_points(corners, t, s);
  Tensor out({ch, s, s});
  for (std::size_t k = 0; k < pts.size(); ++k) {
    const double fx0 = std::floor(pts[k].x), fy0 = std::floor(pts[k].y);
    const double ax = pts[k].x - fx0, ay = pts[k].y - fy0;
    const auto x0 = static_cast<std::ptrdiff_t>(fx0), y0 = static_cast<std::ptrdiff_t>(fy0);
    for (std::size_t c = 0; c < ch; ++c) {
      const double* plane = feature.data().data() + c * feature.dim(1) * feature.dim(2);
      const double v00 = detail::read_zero_padded(plane, h, w, y0, x0);
      const double v01 = detail::read_zero_padded(plane, h, w, y0, x0 + 1);
      const double v10 = detail::read_zero_padded(plane, h, w, y0 + 1, x0);
      const double v11 = detail::read_zero_padded(plane, h, w, y0 + 1, x0 + 1);
      out[c * s * s + k] = (1.0 - ay) * ((1.0 - ax) * v00 + ax * v01) + ay * ((1.0 - ax) * v10 + ax * v11);
    }
  }
  return out;
}

struct SampleWindowGrads {
  Tensor dfeature;
  std::array<double, kParamsPerHead> draw{};
};

inline SampleWindowGrads sample_window_vjp(const Tensor& feature, const WindowCorners& corners,
                                           const WindowTransform& t, std::size_t s, const Tensor& g) {
  const std::size_t ch = feature.dim(0);
  const auto h = static_cast<std::ptrdiff_t>(feature.dim(1));
  const auto w = static_cast<std::ptrdiff_t>(feature.dim(2));
  if (g.numel() != ch * s * s) throw ShapeError("sample_window_vjp: cotangent shape");
  const auto pts = detail::sample_points(corners, t, s);
  SampleWindowGrads r{Tensor(feature.shape()), {}};
  for (std::size_t k = 0; k < pts.size(); ++k) {
    const double fx0 = std::floor(pts[k].x), fy0 = std::floor(pts[k].y);
    const double ax = pts[k].x - fx0, ay = pts[k].y - fy0;
    const auto x0 = static_cast<std::ptrdiff_t>(fx0), y0 = static_cast<std::ptrdiff_t>(fy0);
    double gx = 0.0, gy = 0.0;
    for (std::size_t c = 0; c < ch; ++c) {
      const double gk = g[c * s * s + k];
      if (gk == 0.0) continue;
      const std::size_t plane_off = c * feature.dim(1) * feature.dim(2);
      const double* plane = feature.data().data() + plane_off;
      const double v00 = detail::read_zero_padded(plane, h, w, y0, x0);
      const double v01 = detail::read_zero_padded(plane, h, w, y0, x0 + 1);
      const double v10 = detail::read_zero_padded(plane, h, w, y0 + 1, x0);
      const double v11 = detail::read_zero_padded(plane, h, w, y0 + 1, x0 + 1);
      gx += gk * ((1.0 - ay) * (v01 - v00) + ay * (v11 - v10));
      gy += gk * ((1.0 - ax) * (v10 - v00) + ax * (v11 - v01));
      const std::array<std::pair<std::ptrdiff_t, std::ptrdiff_t>, 4> taps{
          {{y0, x0}, {y0, x0 + 1}, {y0 + 1, x0}, {y0 + 1, x0 + 1}}};
      const std::array<double, 4> wts{(1.0 - ay) * (1.0 - ax), (1.0 - ay) * ax, ay * (1.0 - ax), ay * ax};
      for (std::size_t q = 0; q < 4; ++q) {
        const auto [yy, xx] = taps[q];
        if (yy < 0 || xx < 0 || yy >= h || xx >= w) continue;
        r.dfeature[plane_off + static_cast<std::size_t>(yy * w + xx)] += gk * wts[q];
      }
    }
    for (std::size_t p = 0; p < kParamsPerHead; ++p) r.draw[p] += gx * pts[k].dx[p] + gy * pts[k].dy[p];
  }
  return r;
}

/// Tape op; `raw` holds the five raw head outputs in any shape.
inline ag::Var sample_window(ag::Var feature, ag::Var raw, const WindowCorners& corners, std::size_t s) {
  ag::Tape& tape = *feature.tape();
  const WindowTransform t = WindowTransform::from_raw(raw.value().data());
  return tape.record(sample_window(feature.value(), corners, t, s), {feature, raw},
                     [feature, raw, corners, s](ag::Tape& tape, const Tensor& g) {
                       const WindowTransform t = WindowTransform::from_raw(tape.value(raw).data());
                       auto r = sample_window_vjp(tape.value(feature), corners, t, s, g);
                       tape.accumulate(feature, r.dfeature);
                       Tensor draw(tape.value(raw).shape());
                       for (std::size_t p = 0; p < kParamsPerHead; ++p) draw[p] = r.draw[p];
                       tape.accumulate(raw, draw);
                     });
}

}  // namespace mtp::rvsa
