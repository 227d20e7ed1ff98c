// Copyright (c) 2026, The MTP Authors
// SPDX-License-Identifier: Apache-2.0
//
// Pretraining config, a JSON object:
//
//   model           preset name ("toy", "vitb-rvsa", "vitl-rvsa")
//   window_size     optional override of the preset window side
//   streams         object with keys "sota", "sior", "fast"; each value is
//                   {"path": "<file.mtsd>"} (relative to the config file) or
//                   {"synth": {count, size, channels, classes, min_boxes,
//                              max_boxes, seed}}
//   iters           total iterations
//   seed            run seed (initialization and sampling)
//   base_lr         default 6e-5
//   weight_decay    default 0.05
//   layer_decay     default 0.9
//   warmup_iters    default 100 (clamped to iters)
//   warmup_init_lr  default 1e-6
//   batch_size      samples per stream per iteration, default 1

#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include "json.hpp"

#include "mtp/annotation/mtsd_io.hpp"
#include "mtp/engine/train.hpp"

namespace mtp::engine {

struct StreamSource {
  std::optional<std::string> path;
  std::optional<annotation::SynthSpec> synth;
};

struct PretrainConfig {
  TrainConfig train;
  std::array<StreamSource, annotation::kNumStreams> streams;
};

namespace detail {

template <typename T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("config key '") + key + "' has the wrong type");
  }
}

inline std::size_t get_count(const nlohmann::json& j, const char* key, std::size_t fallback) {
  if (j.contains(key) && !(j.at(key).is_number_unsigned() || (j.at(key).is_number_integer() && j.at(key).get<long long>() >= 0))) {
    throw ConfigError(std::string("config key '") + key + "' must be a non-negative integer");
  }
  return get_or<std::size_t>(j, key, fallback);
}

}  // namespace detail

inline PretrainConfig parse_pretrain_config(const std::string& text, const std::filesystem::path& base_dir = {}) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  PretrainConfig pc;
  TrainConfig& tc = pc.train;
  tc.model = rvsa::preset(detail::get_or<std::string>(j, "model", "toy"));
  tc.model.window_size = detail::get_count(j, "window_size", tc.model.window_size);
  tc.model.validate();
  tc.optim.total_iters = detail::get_count(j, "iters", 300);
  tc.seed = detail::get_or<std::uint64_t>(j, "seed", 7);
  tc.optim.base_lr = detail::get_or<double>(j, "base_lr", 6e-5);
  tc.optim.weight_decay = detail::get_or<double>(j, "weight_decay", 0.05);
  tc.optim.layer_decay = detail::get_or<double>(j, "layer_decay", 0.9);
  tc.optim.warmup_iters = std::min(detail::get_count(j, "warmup_iters", 100), tc.optim.total_iters);
  tc.optim.warmup_init_lr = detail::get_or<double>(j, "warmup_init_lr", 1e-6);
  tc.batch_size = detail::get_count(j, "batch_size", 1);
  tc.optim.validate();
  if (tc.batch_size == 0) throw ConfigError("config key 'batch_size' must be positive");

  if (!j.contains("streams") || !j["streams"].is_object()) throw ConfigError("config key 'streams' missing");
  const auto& streams = j["streams"];
  for (std::size_t i = 0; i < annotation::kNumStreams; ++i) {
    const auto stream = annotation::stream_from_index(i);
    const std::string key = annotation::stream_name(stream);
    if (!streams.contains(key)) throw ConfigError("config key 'streams." + key + "' missing");
    const auto& s = streams[key];
    StreamSource& src = pc.streams[i];
    if (s.contains("path")) {
      std::filesystem::path p = detail::get_or<std::string>(s, "path", "");
      src.path = (p.is_relative() && !base_dir.empty() ? base_dir / p : p).string();
    } else if (s.contains("synth")) {
      const auto& g = s["synth"];
      annotation::SynthSpec spec;
      spec.count = detail::get_count(g, "count", spec.count);
      spec.size = detail::get_count(g, "size", tc.model.image_size);
      spec.channels = detail::get_count(g, "channels", tc.model.in_channels);
      spec.classes = detail::get_count(g, "classes", spec.classes);
      spec.min_boxes = detail::get_count(g, "min_boxes", spec.min_boxes);
      spec.max_boxes = detail::get_count(g, "max_boxes", spec.max_boxes);
      spec.seed = detail::get_or<std::uint64_t>(g, "seed", tc.seed + i);
      spec.stream = stream;
      annotation::validate(spec);
      src.synth = spec;
    } else {
      throw ConfigError("config key 'streams." + key + "' needs 'path' or 'synth'");
    }
  }
  return pc;
}

inline PretrainConfig load_pretrain_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_pretrain_config(ss.str(), std::filesystem::path(path).parent_path());
}

inline Datasets materialize_streams(const PretrainConfig& pc) {
  Datasets ds;
  for (std::size_t i = 0; i < annotation::kNumStreams; ++i) {
    const StreamSource& src = pc.streams[i];
    ds[i] = src.path ? annotation::load_dataset(*src.path) : annotation::synth_dataset(*src.synth);
    ds[i].stream = annotation::stream_from_index(i);
    for (auto& s : ds[i].samples) s.stream = ds[i].stream;
  }
  return ds;
}

}  // namespace mtp::engine
