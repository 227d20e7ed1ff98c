// Copyright (c) 2026, The MTP Authors
// SPDX-License-Identifier: Apache-2.0
//
// Multi-task pretraining loop. Every iteration draws one batch from each of
// the three streams, evaluates all four loss families on each, sums the
// twelve per-stream terms and takes a single optimizer step.

#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "mtp/annotation/sample.hpp"
#include "mtp/engine/heads.hpp"
#include "mtp/engine/losses.hpp"
#include "mtp/engine/optim.hpp"
#include "mtp/engine/report.hpp"
#include "mtp/rvsa/layer.hpp"

namespace mtp::engine {

using Datasets = std::array<annotation::Dataset, annotation::kNumStreams>;

struct TrainConfig {
  rvsa::RvsaConfig model = rvsa::toy_rvsa();
  OptimConfig optim;
  std::size_t batch_size = 1;
  std::uint64_t seed = 7;
};

struct Model {
  rvsa::RvsaConfig cfg;
  StreamClasses classes{};
  rvsa::ParamMap params;
};

/// Backbone and heads draw from independent streams of `seed`, so the heads
/// can be re-created without touching the backbone.
inline rvsa::ParamMap fresh_heads(const rvsa::RvsaConfig& cfg, const StreamClasses& classes, std::uint64_t seed) {
  Rng rng = Rng::derive(seed, 1);
  rvsa::ParamMap p;
  init_heads(p, cfg, classes, rng);
  return p;
}

inline Model init_model(const rvsa::RvsaConfig& cfg, const StreamClasses& classes, std::uint64_t seed) {
  Rng rng = Rng::derive(seed, 0);
  Model m{cfg, classes, rvsa::init_backbone(cfg, rng)};
  m.params.merge(fresh_heads(cfg, classes, seed));
  return m;
}

inline StreamClasses classes_of(const Datasets& ds) {
  StreamClasses k{};
  for (std::size_t i = 0; i < ds.size(); ++i) k[i] = ds[i].classes;
  return k;
}

/// A sample with its dense targets precomputed for a given model geometry.
struct PreparedSample {
  const annotation::MultiTaskSample* sample = nullptr;
  DenseTargets rotated, boxes;
  annotation::Mask foreground;
};

inline PreparedSample prepare(const annotation::MultiTaskSample& s, const rvsa::RvsaConfig& cfg, std::size_t classes) {
  const std::size_t grid = cfg.grid_side();
  const double stride = static_cast<double>(cfg.patch_size);
  return {&s, assign_targets(rotated_targets(s.rboxes), grid, stride, classes, 5),
          assign_targets(hbox_targets(s.instances), grid, stride, classes, 4),
          union_mask(s.instances, s.height(), s.width())};
}

struct StreamLossVars {
  ag::Var rod, ins_b, ins_m, sem;
};

inline StreamLossVars sample_losses(ag::Tape& tape, const rvsa::VarMap& vars, const rvsa::RvsaConfig& cfg,
                                    annotation::Stream stream, const PreparedSample& ps, ag::Var upsample) {
  const auto pyramid = rvsa::backbone_tokens(rvsa::embed_image(tape, ps.sample->image, cfg, vars), cfg, vars);
  const HeadOutputs out = heads_forward(pyramid, stream, vars, upsample);
  return {loss_var(out.rotated, loss_detection(out.rotated.value(), ps.rotated)),
          loss_var(out.ins_box, loss_detection(out.ins_box.value(), ps.boxes)),
          loss_var(out.ins_mask, loss_mask(out.ins_mask.value(), ps.foreground)),
          loss_var(out.semantic, loss_semantic(out.semantic.value(), ps.sample->semantic))};
}

using Batches = std::array<std::vector<const PreparedSample*>, annotation::kNumStreams>;

struct Objective {
  std::array<StreamLossVars, annotation::kNumStreams> streams;
  ag::Var total;
  MtpLossReport report;
};

/// Builds the summed objective on `tape`. Streams switched off in `include`
/// are evaluated but left out of the total.
inline Objective build_objective(ag::Tape& tape, const rvsa::VarMap& vars, const rvsa::RvsaConfig& cfg,
                                 const Batches& batches, ag::Var upsample,
                                 std::array<bool, annotation::kNumStreams> include = {true, true, true}) {
  Objective o;
  std::vector<StreamLosses> parts;
  std::vector<ag::Var> terms;
  for (std::size_t i = 0; i < annotation::kNumStreams; ++i) {
    if (batches[i].empty()) throw ConfigError("empty batch for stream " + std::to_string(i));
    std::vector<ag::Var> rod, ins_b, ins_m, sem;
    for (const PreparedSample* ps : batches[i]) {
      const StreamLossVars l = sample_losses(tape, vars, cfg, annotation::stream_from_index(i), *ps, upsample);
      rod.push_back(l.rod);
      ins_b.push_back(l.ins_b);
      ins_m.push_back(l.ins_m);
      sem.push_back(l.sem);
    }
    StreamLossVars& s = o.streams[i];
    s = {ag::mean(rod), ag::mean(ins_b), ag::mean(ins_m), ag::mean(sem)};
    parts.push_back({s.rod.value()[0], s.ins_b.value()[0], s.ins_m.value()[0], s.sem.value()[0]});
    if (include[i]) terms.insert(terms.end(), {s.rod, s.ins_b, s.ins_m, s.sem});
  }
  o.report = aggregate_mtp(parts);
  if (terms.empty()) throw ConfigError("objective includes no stream");
  o.total = ag::sum(terms);
  return o;
}

/// Round-robin over a stream, reshuffled at the start of every epoch.
class StreamSampler {
 public:
  StreamSampler(std::size_t n, Rng rng) : order_(n), pos_(n), rng_(rng) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
  }
  std::size_t next() {
    if (pos_ == order_.size()) {
      rng_.shuffle(order_);
      pos_ = 0;
    }
    return order_[pos_++];
  }

 private:
  std::vector<std::size_t> order_;
  std::size_t pos_;
  Rng rng_;
};

inline void check_datasets(const Datasets& ds, const rvsa::RvsaConfig& cfg) {
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const std::string name = annotation::stream_name(annotation::stream_from_index(i));
    if (ds[i].samples.empty()) throw ConfigError("stream '" + name + "' has no samples");
    if (ds[i].height != cfg.image_size || ds[i].width != cfg.image_size || ds[i].channels != cfg.in_channels) {
      throw ConfigError("stream '" + name + "' grid does not match the model input");
    }
  }
}

struct TrainResult {
  std::vector<TraceRecord> trace;
  rvsa::ParamMap params;
};

using TraceCallback = std::function<void(const TraceRecord&)>;

inline TrainResult train_mtp(const Datasets& ds, const TrainConfig& tc, const TraceCallback& on_record = {}) {
  tc.model.validate();
  tc.optim.validate();
  if (tc.batch_size == 0) throw ConfigError("batch_size must be positive");
  check_datasets(ds, tc.model);
  Model model = init_model(tc.model, classes_of(ds), tc.seed);
  std::array<std::vector<PreparedSample>, annotation::kNumStreams> prepared;
  std::vector<StreamSampler> samplers;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (const auto& s : ds[i].samples) prepared[i].push_back(prepare(s, tc.model, ds[i].classes));
    samplers.emplace_back(ds[i].samples.size(), Rng::derive(tc.seed, 2 + i));
  }
  const Tensor upsample = upsample_matrix(tc.model.grid_side(), tc.model.patch_size);
  AdamW opt(tc.optim, tc.model.depth);
  TrainResult result;
  for (std::size_t it = 0; it < tc.optim.total_iters; ++it) {
    Batches batches;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      for (std::size_t b = 0; b < tc.batch_size; ++b) batches[i].push_back(&prepared[i][samplers[i].next()]);
    }
    ag::Tape tape;
    const rvsa::VarMap vars = rvsa::bind_params(tape, model.params);
    const Objective obj = build_objective(tape, vars, tc.model, batches, tape.constant(upsample));
    const double total = obj.total.value()[0];
    if (!std::isfinite(total)) throw TrainingError("training diverged at iteration " + std::to_string(it));
    tape.backward(obj.total);
    std::map<std::string, Tensor> grads;
    for (const auto& [key, v] : vars) grads.emplace(key, tape.grad(v));
    TraceRecord rec{it, 0.0, obj.report};
    try {
      rec.lr = opt.step(model.params, grads, it);
    } catch (const TrainingError& e) {
      throw TrainingError("iteration " + std::to_string(it) + ": " + e.what());
    }
    if (on_record) on_record(rec);
    result.trace.push_back(rec);
  }
  result.params = std::move(model.params);
  return result;
}

}  // namespace mtp::engine
