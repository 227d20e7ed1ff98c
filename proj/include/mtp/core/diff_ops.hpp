// Copyright (c) 2026, The MTP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "mtp/core/gradcheck.hpp"
#include "mtp/core/ops.hpp"

namespace mtp::diff {

using Tensors = std::vector<Tensor>;

inline DifferentiableOp matmul() {
  return {"matmul", [](const Tensors& in) { return ops::matmul(in[0], in[1]); },
          [](const Tensors& in, const Tensor&, const Tensor& g) {
            auto [da, db] = ops::matmul_vjp(in[0], in[1], g);
            return Tensors{da, db};
          }};
}

inline DifferentiableOp transpose() {
  return {"transpose", [](const Tensors& in) { return ops::transpose(in[0]); },
          [](const Tensors&, const Tensor&, const Tensor& g) { return Tensors{ops::transpose(g)}; }};
}

inline DifferentiableOp softmax_rows() {
  return {"softmax_rows", [](const Tensors& in) { return ops::softmax_rows(in[0]); },
          [](const Tensors&, const Tensor& y, const Tensor& g) { return Tensors{ops::softmax_rows_vjp(y, g)}; }};
}

inline DifferentiableOp gap() {
  return {"gap", [](const Tensors& in) { return ops::gap(in[0]); },
          [](const Tensors& in, const Tensor&, const Tensor& g) { return Tensors{ops::gap_vjp(in[0].shape(), g)}; }};
}

inline DifferentiableOp leaky_relu(double slope = ops::kDefaultLeakySlope) {
  return {"leaky_relu", [slope](const Tensors& in) { return ops::leaky_relu(in[0], slope); },
          [slope](const Tensors& in, const Tensor&, const Tensor& g) {
            return Tensors{ops::leaky_relu_vjp(in[0], g, slope)};
          }};
}

inline DifferentiableOp gelu() {
  return {"gelu", [](const Tensors& in) { return ops::gelu(in[0]); },
          [](const Tensors& in, const Tensor&, const Tensor& g) { return Tensors{ops::gelu_vjp(in[0], g)}; }};
}

/// Inputs: x (N x in), weight (out x in), bias (out).
inline DifferentiableOp linear() {
  return {"linear", [](const Tensors& in) { return ops::linear(in[0], in[1], in[2]); },
          [](const Tensors& in, const Tensor&, const Tensor& g) {
            auto r = ops::linear_vjp(in[0], in[1], g);
            return Tensors{r.dx, r.dw, r.db};
          }};
}

/// Inputs: x (N x C), gain (C), bias (C).
inline DifferentiableOp layer_norm_rows() {
  return {"layer_norm", [](const Tensors& in) { return ops::layer_norm_rows(in[0], in[1], in[2]); },
          [](const Tensors& in, const Tensor&, const Tensor& g) {
            auto r = ops::layer_norm_rows_vjp(in[0], in[1], g);
            return Tensors{r.dx, r.dgain, r.dbias};
          }};
}

}  // namespace mtp::diff
