// Copyright (c) 2026, The MTP Authors
// SPDX-License-Identifier: Apache-2.0
//
// A small reverse-mode tape. Each recorded node keeps its forward value and a
// closure that routes the node's cotangent through the per-op VJP into its
// parents. Nodes are replayed strictly in reverse creation order, which fixes
// the gradient accumulation order.

#pragma once

#include <deque>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "mtp/core/error.hpp"
#include "mtp/core/ops.hpp"
#include "mtp/core/tensor.hpp"

namespace mtp::ag {

class Tape;

class Var {
 public:
  Var() = default;
  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Tensor&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Differentiable input.
  Var leaf(Tensor value) { return push(std::move(value), true, {}); }

  /// Input that never receives a gradient.
  Var constant(Tensor value) { return push(std::move(value), false, {}); }

  Var record(Tensor value, std::initializer_list<Var> parents, Backward backward) {
    return record(std::move(value), std::vector<Var>(parents), std::move(backward));
  }

  Var record(Tensor value, const std::vector<Var>& parents, Backward backward) {
    bool needs = false;
    for (const Var& p : parents) {
      if (p.tape_ != this) throw Error("autograd: operand recorded on a different tape");
      needs = needs || nodes_[p.id_].requires_grad;
    }
    return push(std::move(value), needs, needs ? std::move(backward) : Backward{});
  }

  const Tensor& value(Var v) const { return nodes_.at(v.id_).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id_).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  void accumulate(Var v, const Tensor& g) {
    Node& n = nodes_.at(v.id_);
    if (!n.requires_grad) return;
    if (g.shape() != n.value.shape()) {
      throw ShapeError("autograd: gradient " + shape_str(g.shape()) + " for value " +
                       shape_str(n.value.shape()));
    }
    if (n.grad.empty()) {
      n.grad = g;
    } else {
      for (std::size_t i = 0; i < g.numel(); ++i) n.grad[i] += g[i];
    }
  }

  /// Seeds `root` with `seed` (ones when omitted) and propagates to leaves.
  void backward(Var root, Tensor seed = {}) {
    if (seed.empty()) seed = Tensor(value(root).shape(), 1.0);
    accumulate(root, seed);
    for (std::size_t i = root.id_ + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.backward || n.grad.empty()) continue;
      n.backward(*this, n.grad);
    }
  }

  /// Gradient of a node, zeros if nothing flowed into it.
  Tensor grad(Var v) const {
    const Node& n = nodes_.at(v.id_);
    return n.grad.empty() ? Tensor(n.value.shape()) : n.grad;
  }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    Backward backward;
  };

  Var push(Tensor value, bool requires_grad, Backward backward) {
    nodes_.push_back(Node{std::move(value), Tensor{}, requires_grad, std::move(backward)});
    return Var(this, nodes_.size() - 1);
  }

  std::deque<Node> nodes_;  // stable references across push_back
};

inline const Tensor& Var::value() const { return tape_->value(*this); }

// ------------------------------------------------------------- tape ops

inline Var matmul(Var a, Var b) {
  Tape& t = *a.tape();
  return t.record(ops::matmul(a.value(), b.value()), {a, b}, [a, b](Tape& t, const Tensor& g) {
    auto [da, db] = ops::matmul_vjp(t.value(a), t.value(b), g);
    t.accumulate(a, da);
    t.accumulate(b, db);
  });
}

inline Var transpose(Var a) {
  Tape& t = *a.tape();
  return t.record(ops::transpose(a.value()), {a},
                  [a](Tape& t, const Tensor& g) { t.accumulate(a, ops::transpose(g)); });
}

inline Var add(Var a, Var b) {
  Tape& t = *a.tape();
  return t.record(ops::add(a.value(), b.value()), {a, b}, [a, b](Tape& t, const Tensor& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

inline Var scale(Var a, double s) {
  Tape& t = *a.tape();
  return t.record(ops::scale(a.value(), s), {a},
                  [a, s](Tape& t, const Tensor& g) { t.accumulate(a, ops::scale(g, s)); });
}

/// Left-to-right sum of equally shaped values.
inline Var sum(const std::vector<Var>& xs) {
  if (xs.empty()) throw Error("autograd sum of empty list");
  Tape& t = *xs.front().tape();
  Tensor acc = xs.front().value();
  for (std::size_t i = 1; i < xs.size(); ++i) {
    require_same_shape(acc, xs[i].value(), "sum");
    for (std::size_t j = 0; j < acc.numel(); ++j) acc[j] += xs[i].value()[j];
  }
  return t.record(std::move(acc), xs, [xs](Tape& t, const Tensor& g) {
    for (const Var& x : xs) t.accumulate(x, g);
  });
}

inline Var mean(const std::vector<Var>& xs) {
  return scale(sum(xs), 1.0 / static_cast<double>(xs.size()));
}

inline Var leaky_relu(Var x, double slope = ops::kDefaultLeakySlope) {
  Tape& t = *x.tape();
  return t.record(ops::leaky_relu(x.value(), slope), {x}, [x, slope](Tape& t, const Tensor& g) {
    t.accumulate(x, ops::leaky_relu_vjp(t.value(x), g, slope));
  });
}

inline Var gelu(Var x) {
  Tape& t = *x.tape();
  return t.record(ops::gelu(x.value()), {x},
                  [x](Tape& t, const Tensor& g) { t.accumulate(x, ops::gelu_vjp(t.value(x), g)); });
}

inline Var softmax_rows(Var x) {
  Tape& t = *x.tape();
  Tensor y = ops::softmax_rows(x.value());
  // The output is needed by the VJP; keep a private copy in the closure.
  return t.record(y, {x}, [x, y](Tape& t, const Tensor& g) {
    t.accumulate(x, ops::softmax_rows_vjp(y, g));
  });
}

inline Var gap(Var x) {
  Tape& t = *x.tape();
  return t.record(ops::gap(x.value()), {x}, [x](Tape& t, const Tensor& g) {
    t.accumulate(x, ops::gap_vjp(t.value(x).shape(), g));
  });
}

inline Var linear(Var x, Var w, Var b) {
  Tape& t = *x.tape();
  return t.record(ops::linear(x.value(), w.value(), b.value()), {x, w, b},
                  [x, w, b](Tape& t, const Tensor& g) {
                    auto r = ops::linear_vjp(t.value(x), t.value(w), g);
                    t.accumulate(x, r.dx);
                    t.accumulate(w, r.dw);
                    t.accumulate(b, r.db.reshaped(t.value(b).shape()));
                  });
}

inline Var layer_norm_rows(Var x, Var gain, Var bias) {
  Tape& t = *x.tape();
  return t.record(ops::layer_norm_rows(x.value(), gain.value(), bias.value()), {x, gain, bias},
                  [x, gain, bias](Tape& t, const Tensor& g) {
                    auto r = ops::layer_norm_rows_vjp(t.value(x), t.value(gain), g);
                    t.accumulate(x, r.dx);
                    t.accumulate(gain, r.dgain.reshaped(t.value(gain).shape()));
                    t.accumulate(bias, r.dbias.reshaped(t.value(bias).shape()));
                  });
}

inline Var reshape(Var x, Shape shape) {
  Tape& t = *x.tape();
  return t.record(x.value().reshaped(std::move(shape)), {x}, [x](Tape& t, const Tensor& g) {
    t.accumulate(x, g.reshaped(t.value(x).shape()));
  });
}

/// Columns [start, start + count) of a 2-D value.
inline Var slice_cols(Var x, std::size_t start, std::size_t count) {
  Tape& t = *x.tape();
  const Tensor& v = x.value();
  require_rank(v, 2, "slice_cols");
  const std::size_t n = v.dim(0), c = v.dim(1);
  if (start + count > c || count == 0) throw ShapeError("slice_cols: range outside " + shape_str(v.shape()));
  Tensor y({n, count});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < count; ++j) y[i * count + j] = v[i * c + start + j];
  return t.record(std::move(y), {x}, [x, start, count](Tape& t, const Tensor& g) {
    const Tensor& v = t.value(x);
    const std::size_t n = v.dim(0), c = v.dim(1);
    Tensor dx({n, c});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < count; ++j) dx[i * c + start + j] = g[i * count + j];
    t.accumulate(x, dx);
  });
}

inline Var concat_cols(const std::vector<Var>& xs) {
  if (xs.empty()) throw ShapeError("concat_cols of empty list");
  Tape& t = *xs.front().tape();
  const std::size_t n = xs.front().value().dim(0);
  std::size_t total = 0;
  for (const Var& x : xs) {
    require_rank(x.value(), 2, "concat_cols");
    if (x.value().dim(0) != n) throw ShapeError("concat_cols: row counts differ");
    total += x.value().dim(1);
  }
  Tensor y({n, total});
  std::size_t off = 0;
  for (const Var& x : xs) {
    const Tensor& v = x.value();
    const std::size_t c = v.dim(1);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < c; ++j) y[i * total + off + j] = v[i * c + j];
    off += c;
  }
  return t.record(std::move(y), xs, [xs, n, total](Tape& t, const Tensor& g) {
    std::size_t off = 0;
    for (const Var& x : xs) {
      const std::size_t c = t.value(x).dim(1);
      Tensor dx({n, c});
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) dx[i * c + j] = g[i * total + off + j];
      t.accumulate(x, dx);
      off += c;
    }
  });
}

/// Rows `index[i]` of a 2-D value, in order; repeated indices are allowed.
inline Var gather_rows(Var x, std::vector<std::size_t> index) {
  Tape& t = *x.tape();
  const Tensor& v = x.value();
  require_rank(v, 2, "gather_rows");
  const std::size_t n = v.dim(0), c = v.dim(1);
  if (index.empty()) throw ShapeError("gather_rows: empty index");
  Tensor y({index.size(), c});
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= n) throw ShapeError("gather_rows: row index out of range");
    std::copy_n(v.data().data() + index[i] * c, c, y.data().data() + i * c);
  }
  return t.record(std::move(y), {x}, [x, index = std::move(index)](Tape& t, const Tensor& g) {
    const Tensor& v = t.value(x);
    const std::size_t c = v.dim(1);
    Tensor dx(v.shape());
    for (std::size_t i = 0; i < index.size(); ++i)
      for (std::size_t j = 0; j < c; ++j) dx[index[i] * c + j] += g[i * c + j];
    t.accumulate(x, dx);
  });
}

inline Var concat_rows(const std::vector<Var>& xs) {
  if (xs.empty()) throw ShapeError("concat_rows of empty list");
  Tape& t = *xs.front().tape();
  const std::size_t c = xs.front().value().dim(1);
  std::vector<double> data;
  std::size_t rows = 0;
  for (const Var& x : xs) {
    require_rank(x.value(), 2, "concat_rows");
    if (x.value().dim(1) != c) throw ShapeError("concat_rows: column counts differ");
    data.insert(data.end(), x.value().vec().begin(), x.value().vec().end());
    rows += x.value().dim(0);
  }
  return t.record(Tensor({rows, c}, std::move(data)), xs, [xs](Tape& t, const Tensor& g) {
    std::size_t off = 0;
    for (const Var& x : xs) {
      const Tensor& v = t.value(x);
      std::vector<double> part(g.vec().begin() + static_cast<std::ptrdiff_t>(off),
                               g.vec().begin() + static_cast<std::ptrdiff_t>(off + v.numel()));
      t.accumulate(x, Tensor(v.shape(), std::move(part)));
      off += v.numel();
    }
  });
}

}  // namespace mtp::ag
