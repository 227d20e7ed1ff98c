// Copyright (c) 2026, The MTP Authors
// SPDX-License-Identifier: Apache-2.0
//
// Forward kernels and their vector-Jacobian products. Every `*_vjp` takes the
// forward inputs (and, where cheaper, the forward output) plus the output
// cotangent, and returns the input cotangents. Accumulation order is fixed
// so repeated calls are bit-identical.

#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "mtp/core/error.hpp"
#include "mtp/core/tensor.hpp"

namespace mtp::ops {

// ---------------------------------------------------------------- matmul

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul lhs");
  require_rank(b, 2, "matmul rhs");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " * " +
                     shape_str(b.shape()));
  }
  Tensor c({m, n});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* pc = c.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = pc + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
  return c;
}

inline Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  Tensor t({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) t[j * m + i] = a[i * n + j];
  return t;
}

/// Returns {dA, dB} for C = A B.
inline std::pair<Tensor, Tensor> matmul_vjp(const Tensor& a, const Tensor& b, const Tensor& g) {
  return {matmul(g, transpose(b)), matmul(transpose(a), g)};
}

// ---------------------------------------------------------- elementwise

inline Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor c = a;
  for (std::size_t i = 0; i < c.numel(); ++i) c[i] += b[i];
  return c;
}

inline Tensor scale(const Tensor& a, double s) {
  Tensor c = a;
  for (double& v : c.vec()) v *= s;
  return c;
}

inline void check_slope(double slope) {
  if (!(slope > 0.0 && slope < 1.0)) {
    throw ConfigError("leaky_relu slope must lie in (0, 1), got " + std::to_string(slope));
  }
}

inline constexpr double kDefaultLeakySlope = 0.01;

inline Tensor leaky_relu(const Tensor& x, double slope = kDefaultLeakySlope) {
  check_slope(slope);
  Tensor y = x;
  for (double& v : y.vec()) v = v >= 0.0 ? v : slope * v;
  return y;
}

inline Tensor leaky_relu_vjp(const Tensor& x, const Tensor& g, double slope = kDefaultLeakySlope) {
  check_slope(slope);
  Tensor dx = g;
  for (std::size_t i = 0; i < dx.numel(); ++i) dx[i] = x[i] >= 0.0 ? g[i] : slope * g[i];
  return dx;
}

/// Exact (erf) GELU.
inline Tensor gelu(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.vec()) v = 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
  return y;
}

inline Tensor gelu_vjp(const Tensor& x, const Tensor& g) {
  Tensor dx = g;
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  for (std::size_t i = 0; i < dx.numel(); ++i) {
    const double v = x[i];
    const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
    const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
    dx[i] = g[i] * (cdf + v * pdf);
  }
  return dx;
}

// -------------------------------------------------------------- softmax

inline Tensor softmax_rows(const Tensor& x) {
  require_rank(x, 2, "softmax_rows");
  const std::size_t m = x.dim(0), n = x.dim(1);
  Tensor y({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    const double* xr = x.data().data() + i * n;
    double* yr = y.data().data() + i * n;
    const double mx = *std::max_element(xr, xr + n);
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      sum += yr[j];
    }
    for (std::size_t j = 0; j < n; ++j) yr[j] /= sum;
  }
  return y;
}

/// Uses the forward output `y`.
inline Tensor softmax_rows_vjp(const Tensor& y, const Tensor& g) {
  require_same_shape(y, g, "softmax_rows_vjp");
  const std::size_t m = y.dim(0), n = y.dim(1);
  Tensor dx({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double dot = 0.0;
    for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * y[i * n + j];
    for (std::size_t j = 0; j < n; ++j) dx[i * n + j] = y[i * n + j] * (g[i * n + j] - dot);
  }
  return dx;
}

// ---------------------------------------------------------------- pooling

/// Global average pooling of a C x H x W map to a length-C vector.
inline Tensor gap(const Tensor& x) {
  require_rank(x, 3, "gap");
  const std::size_t c = x.dim(0), hw = x.dim(1) * x.dim(2);
  Tensor y({c});
  for (std::size_t ch = 0; ch < c; ++ch) {
    double sum = 0.0;
    for (std::size_t i = 0; i < hw; ++i) sum += x[ch * hw + i];
    y[ch] = sum / static_cast<double>(hw);
  }
  return y;
}

inline Tensor gap_vjp(const Shape& input_shape, const Tensor& g) {
  Tensor dx(input_shape);
  const std::size_t c = input_shape[0], hw = input_shape[1] * input_shape[2];
  if (g.numel() != c) throw ShapeError("gap_vjp: cotangent length mismatch");
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double v = g[ch] / static_cast<double>(hw);
    for (std::size_t i = 0; i < hw; ++i) dx[ch * hw + i] = v;
  }
  return dx;
}

// ----------------------------------------------------------------- linear

/// y = x W^T + b with x: N x in, W: out x in, b: out.
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  require_rank(x, 2, "linear input");
  require_rank(w, 2, "linear weight");
  if (x.dim(1) != w.dim(1) || b.numel() != w.dim(0)) {
    throw ShapeError("linear: input " + shape_str(x.shape()) + ", weight " + shape_str(w.shape()) +
                     ", bias " + shape_str(b.shape()));
  }
  const std::size_t n = x.dim(0), in = x.dim(1), out = w.dim(0);
  Tensor y({n, out});
  for (std::size_t i = 0; i < n; ++i) {
    const double* xr = x.data().data() + i * in;
    for (std::size_t o = 0; o < out; ++o) {
      const double* wr = w.data().data() + o * in;
      double acc = 0.0;
      for (std::size_t p = 0; p < in; ++p) acc += xr[p] * wr[p];
      y[i * out + o] = acc + b[o];
    }
  }
  return y;
}

struct LinearGrads {
  Tensor dx, dw, db;
};

inline LinearGrads linear_vjp(const Tensor& x, const Tensor& w, const Tensor& g) {
  const std::size_t n = x.dim(0), in = x.dim(1), out = w.dim(0);
  LinearGrads r{matmul(g, w), Tensor({out, in}), Tensor({out})};
  for (std::size_t i = 0; i < n; ++i) {
    const double* xr = x.data().data() + i * in;
    for (std::size_t o = 0; o < out; ++o) {
      const double go = g[i * out + o];
      double* dwr = r.dw.data().data() + o * in;
      for (std::size_t p = 0; p < in; ++p) dwr[p] += go * xr[p];
      r.db[o] += go;
    }
  }
  return r;
}

// ------------------------------------------------------------- layer norm

inline constexpr double kLayerNormEps = 1e-6;

/// Normalizes each row of an N x C matrix, then applies gain and bias.
inline Tensor layer_norm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias,
                              double eps = kLayerNormEps) {
  require_rank(x, 2, "layer_norm_rows");
  const std::size_t n = x.dim(0), c = x.dim(1);
  if (gain.numel() != c || bias.numel() != c) throw ShapeError("layer_norm_rows: gain/bias length");
  Tensor y({n, c});
  for (std::size_t i = 0; i < n; ++i) {
    const double* xr = x.data().data() + i * c;
    double mean = 0.0;
    for (std::size_t j = 0; j < c; ++j) mean += xr[j];
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= static_cast<double>(c);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) y[i * c + j] = (xr[j] - mean) * inv * gain[j] + bias[j];
  }
  return y;
}

struct LayerNormGrads {
  Tensor dx, dgain, dbias;
};

inline LayerNormGrads layer_norm_rows_vjp(const Tensor& x, const Tensor& gain, const Tensor& g,
                                          double eps = kLayerNormEps) {
  const std::size_t n = x.dim(0), c = x.dim(1);
  LayerNormGrads r{Tensor({n, c}), Tensor({c}), Tensor({c})};
  std::vector<double> xhat(c), dxhat(c);
  for (std::size_t i = 0; i < n; ++i) {
    const double* xr = x.data().data() + i * c;
    double mean = 0.0;
    for (std::size_t j = 0; j < c; ++j) mean += xr[j];
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= static_cast<double>(c);
    const double inv = 1.0 / std::sqrt(var + eps);
    double mean_d = 0.0, mean_dx = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      xhat[j] = (xr[j] - mean) * inv;
      const double gj = g[i * c + j];
      r.dgain[j] += gj * xhat[j];
      r.dbias[j] += gj;
      dxhat[j] = gj * gain[j];
      mean_d += dxhat[j];
      mean_dx += dxhat[j] * xhat[j];
    }
    mean_d /= static_cast<double>(c);
    mean_dx /= static_cast<double>(c);
    for (std::size_t j = 0; j < c; ++j) {
      r.dx[i * c + j] = inv * (dxhat[j] - mean_d - xhat[j] * mean_dx);
    }
  }
  return r;
}

}  // namespace mtp::ops
