// Copyright (c) 2026, The MTP Authors
// SPDX-License-Identifier: Apache-2.0
//
// Learning-rate schedule, layer-wise decay and AdamW.

#pragma once

#include <cmath>
#include <map>
#include <numbers>
#include <string>

#include "mtp/core/error.hpp"
#include "mtp/core/tensor.hpp"
#include "mtp/engine/heads.hpp"

namespace mtp::engine {

struct OptimConfig {
  double base_lr = 6e-5;
  double weight_decay = 0.05;
  double layer_decay = 0.9;
  std::size_t warmup_iters = 100;
  double warmup_init_lr = 1e-6;
  std::size_t total_iters = 80000;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  void validate() const {
    if (!(base_lr > 0) || !std::isfinite(base_lr)) throw ConfigError("base_lr must be positive");
    if (!(weight_decay >= 0)) throw ConfigError("weight_decay must be non-negative");
    if (!(layer_decay > 0) || layer_decay > 1) throw ConfigError("layer_decay must lie in (0, 1]");
    if (!(warmup_init_lr >= 0)) throw ConfigError("warmup_init_lr must be non-negative");
    if (warmup_iters > total_iters) throw ConfigError("warmup_iters exceeds total iterations");
  }
};

/// Linear warmup from warmup_init_lr to base_lr, then half-cosine to zero at
/// total_iters.
inline double lr_at(std::size_t iter, const OptimConfig& c) {
  if (iter > c.total_iters) {
    throw ScheduleError("iteration " + std::to_string(iter) + " outside [0, " + std::to_string(c.total_iters) + "]");
  }
  if (iter < c.warmup_iters) {
    return c.warmup_init_lr +
           (c.base_lr - c.warmup_init_lr) * static_cast<double>(iter) / static_cast<double>(c.warmup_iters);
  }
  const std::size_t span = c.total_iters - c.warmup_iters;
  if (span == 0) return 0.0;
  const double progress = static_cast<double>(iter - c.warmup_iters) / static_cast<double>(span);
  return c.base_lr * (1.0 + std::cos(std::numbers::pi * progress)) / 2.0;
}

/// Overload accepting signed input so negative indices report a schedule error.
inline double lr_at(long long iter, const OptimConfig& c) {
  if (iter < 0) throw ScheduleError("iteration " + std::to_string(iter) + " is negative");
  return lr_at(static_cast<std::size_t>(iter), c);
}
inline double lr_at(int iter, const OptimConfig& c) { return lr_at(static_cast<long long>(iter), c); }

/// rate^(depth + 1 - index). Index 0 is the embedding, 1..depth the blocks,
/// depth + 1 the task heads.
inline double layer_lr_scale(long long index, long long depth, double rate) {
  if (depth < 1) throw ConfigError("layer_lr_scale: depth must be positive");
  if (index < 0 || index > depth + 1) {
    throw ConfigError("layer index " + std::to_string(index) + " outside [0, " + std::to_string(depth + 1) + "]");
  }
  return std::pow(rate, static_cast<double>(depth + 1 - index));
}

/// Depth position of a parameter from its key.
inline std::size_t param_layer_index(const std::string& key, std::size_t depth) {
  if (is_head_key(key)) return depth + 1;
  if (key.rfind("embed.", 0) == 0) return 0;
  if (key.rfind("layer", 0) == 0 && key.size() > 7) {
    const std::size_t dot = key.find('.');
    const std::size_t l = static_cast<std::size_t>(std::stoul(key.substr(5, dot - 5)));
    if (l >= 1 && l <= depth) return l;
  }
  throw ConfigError("cannot place parameter '" + key + "' in the layer stack");
}

inline bool decays(const std::string& key) {
  auto ends = [&](const char* s) {
    const std::string suf(s);
    return key.size() >= suf.size() && key.compare(key.size() - suf.size(), suf.size(), suf) == 0;
  };
  return !ends(".bias") && !ends(".gain");
}

class AdamW {
 public:
  AdamW(OptimConfig cfg, std::size_t depth) : cfg_(cfg), depth_(depth) { cfg_.validate(); }

  std::size_t steps() const { return step_; }
  const OptimConfig& config() const { return cfg_; }
  const std::map<std::string, Tensor>& first_moment() const { return m_; }
  const std::map<std::string, Tensor>& second_moment() const { return v_; }

  /// One update at schedule position `iter`; `grads` must hold a tensor for
  /// every parameter. Returns the base learning rate used.
  double step(std::map<std::string, Tensor>& params, const std::map<std::string, Tensor>& grads, std::size_t iter) {
    for (const auto& [key, g] : grads) {
      if (!g.all_finite()) throw TrainingError("non-finite gradient for parameter '" + key + "'");
    }
    const double lr = lr_at(iter, cfg_);
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (auto& [key, p] : params) {
      auto git = grads.find(key);
      if (git == grads.end()) throw TrainingError("missing gradient for parameter '" + key + "'");
      const Tensor& g = git->second;
      require_same_shape(p, g, "AdamW");
      Tensor& m = m_.try_emplace(key, p.shape()).first->second;
      Tensor& v = v_.try_emplace(key, p.shape()).first->second;
      const double plr = lr * layer_lr_scale(static_cast<long long>(param_layer_index(key, depth_)),
                                             static_cast<long long>(depth_), cfg_.layer_decay);
      const double keep = decays(key) ? 1.0 - plr * cfg_.weight_decay : 1.0;
      for (std::size_t i = 0; i < p.numel(); ++i) {
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
        const double mhat = m[i] / bc1, vhat = v[i] / bc2;
        p[i] = p[i] * keep - plr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    }
    return lr;
  }

 private:
  OptimConfig cfg_;
  std::size_t depth_;
  std::size_t step_ = 0;
  std::map<std::string, Tensor> m_, v_;
};

}  // namespace mtp::engine
