// Copyright (c) 2026, The MTP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mtp/core/autograd.hpp"
#include "mtp/core/error.hpp"
#include "mtp/core/rng.hpp"
#include "mtp/core/tensor.hpp"

namespace mtp {

/// A pure forward map with its vector-Jacobian product.
struct DifferentiableOp {
  std::string name;
  std::function<Tensor(const std::vector<Tensor>&)> forward;
  /// (inputs, output, output cotangent) -> one cotangent per input.
  std::function<std::vector<Tensor>(const std::vector<Tensor>&, const Tensor&, const Tensor&)> vjp;
};

/// Wraps a function built from tape ops: the forward records onto a fresh
/// tape and the VJP seeds the output node with the supplied cotangent.
inline DifferentiableOp tape_op(std::string name,
                                std::function<ag::Var(const std::vector<ag::Var>&)> build) {
  DifferentiableOp op;
  op.name = std::move(name);
  op.forward = [build](const std::vector<Tensor>& in) {
    ag::Tape tape;
    std::vector<ag::Var> vars;
    for (const Tensor& t : in) vars.push_back(tape.constant(t));
    return build(vars).value();
  };
  op.vjp = [build](const std::vector<Tensor>& in, const Tensor&, const Tensor& g) {
    ag::Tape tape;
    std::vector<ag::Var> vars;
    for (const Tensor& t : in) vars.push_back(tape.leaf(t));
    ag::Var out = build(vars);
    tape.backward(out, g);
    std::vector<Tensor> grads;
    for (const ag::Var& v : vars) grads.push_back(tape.grad(v));
    return grads;
  };
  return op;
}

struct GradCheckOptions {
  double h = 1e-5;
  std::uint64_t cotangent_seed = 0x5eed;
};

/// Largest |analytic - numeric| / max(1, |analytic|, |numeric|) over every
/// input coordinate. Non-scalar outputs are reduced with a fixed random
/// cotangent g, so each coordinate checks d<g, f(x)>/dx_i against a central
/// difference of <g, f>.
inline double grad_check(const DifferentiableOp& op, std::vector<Tensor> inputs,
                         GradCheckOptions opt = {}) {
  if (!(opt.h >= 1e-7 && opt.h <= 1e-3)) {
    throw ConfigError("grad_check step must lie in [1e-7, 1e-3]");
  }
  const Tensor y = op.forward(inputs);
  if (!y.all_finite()) throw EvaluationError(op.name + ": forward is not finite at the check point");

  Rng rng(opt.cotangent_seed);
  Tensor g(y.shape());
  if (y.numel() == 1) {
    g[0] = 1.0;
  } else {
    for (double& v : g.vec()) v = rng.normal();
  }
  const std::vector<Tensor> analytic = op.vjp(inputs, y, g);
  if (analytic.size() != inputs.size()) throw EvaluationError(op.name + ": vjp arity mismatch");

  auto project = [&](const std::vector<Tensor>& in) {
    const Tensor out = op.forward(in);
    if (!out.all_finite()) throw EvaluationError(op.name + ": forward is not finite near the check point");
    double s = 0.0;
    for (std::size_t i = 0; i < out.numel(); ++i) s += g[i] * out[i];
    return s;
  };

  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    require_same_shape(analytic[k], inputs[k], "grad_check cotangent");
    for (std::size_t i = 0; i < inputs[k].numel(); ++i) {
      const double x0 = inputs[k][i];
      inputs[k][i] = x0 + opt.h;
      const double fp = project(inputs);
      inputs[k][i] = x0 - opt.h;
      const double fm = project(inputs);
      inputs[k][i] = x0;
      const double numeric = (fp - fm) / (2.0 * opt.h);
      const double a = analytic[k][i];
      const double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace mtp
