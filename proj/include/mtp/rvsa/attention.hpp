// Copyright (c) 2026, The MTP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <vector>

#include "mtp/core/autograd.hpp"
#include "mtp/core/ops.hpp"
#include "mtp/core/tensor.hpp"

namespace mtp::rvsa {

namespace detail {

inline void check_qkv(const Tensor& q, const Tensor& k, const Tensor& v) {
  require_rank(q, 2, "window_attention q");
  require_rank(k, 2, "window_attention k");
  require_rank(v, 2, "window_attention v");
  if (q.dim(1) != k.dim(1) || k.dim(0) != v.dim(0)) {
    throw ShapeError("window_attention: q " + shape_str(q.shape()) + ", k " + shape_str(k.shape()) + ", v " +
                     shape_str(v.shape()));
  }
}

inline Tensor attention_probs(const Tensor& q, const Tensor& k) {
  const double inv = 1.0 / std::sqrt(static_cast<double>(q.dim(1)));
  return ops::softmax_rows(ops::scale(ops::matmul(q, ops::transpose(k)), inv));
}

}  // namespace detail

/// softmax(q k^T / sqrt(C')) v for one window and one head.
inline Tensor window_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  detail::check_qkv(q, k, v);
  return ops::matmul(detail::attention_probs(q, k), v);
}

struct AttentionGrads {
  Tensor dq, dk, dv;
};

inline AttentionGrads window_attention_vjp(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& g) {
  detail::check_qkv(q, k, v);
  const double inv = 1.0 / std::sqrt(static_cast<double>(q.dim(1)));
  const Tensor p = detail::attention_probs(q, k);
  auto [dp, dv] = ops::matmul_vjp(p, v, g);
  const Tensor ds = ops::scale(ops::softmax_rows_vjp(p, dp), inv);
  auto [dq, dkt] = ops::matmul_vjp(q, ops::transpose(k), ds);
  return {std::move(dq), ops::transpose(dkt), std::move(dv)};
}

inline ag::Var window_attention(ag::Var q, ag::Var k, ag::Var v) {
  ag::Tape& t = *q.tape();
  return t.record(window_attention(q.value(), k.value(), v.value()), {q, k, v},
                  [q, k, v](ag::Tape& t, const Tensor& g) {
                    auto r = window_attention_vjp(t.value(q), t.value(k), t.value(v), g);
                    t.accumulate(q, r.dq);
                    t.accumulate(k, r.dk);
                    t.accumulate(v, r.dv);
                  });
}

}  // namespace mtp::rvsa
