// Copyright (c) 2026, The MTP Authors
// SPDX-License-Identifier: Apache-2.0
//
// Checkpoints are TNSR1 containers keyed by parameter name. Backbone keys are
// "embed.*" and "layerNN.*"; task heads live under "heads.*".

#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "mtp/core/tnsr_io.hpp"
#include "mtp/engine/heads.hpp"

namespace mtp::engine {

enum class LoadMode { kBackboneOnly, kWithDecoders };

struct LoadReport {
  rvsa::ParamMap params;
  std::vector<std::string> restored;       // taken from the checkpoint
  std::vector<std::string> reinitialized;  // head keys left at their fresh values
  std::vector<std::string> unused;         // checkpoint keys the model did not take
};

inline void save_checkpoint(std::ostream& os, const rvsa::ParamMap& params) { io::write_container(os, params); }

inline void save_checkpoint(const std::string& path, const rvsa::ParamMap& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw CheckpointError("cannot open " + path + " for writing");
  save_checkpoint(os, params);
  if (!os) throw CheckpointError("write failed for " + path);
}

inline rvsa::ParamMap read_checkpoint(std::istream& is) {
  try {
    return io::read_container(is);
  } catch (const FormatError& e) {
    throw CheckpointError(std::string("corrupt checkpoint: ") + e.what());
  }
}

/// Merges checkpoint weights into `fresh` (a freshly initialized model).
/// Every backbone key of `fresh` must be present with a matching shape.
inline LoadReport load_checkpoint(const rvsa::ParamMap& stored, const rvsa::ParamMap& fresh, LoadMode mode) {
  LoadReport r;
  r.params = fresh;
  for (auto& [key, value] : r.params) {
    const bool head = is_head_key(key);
    auto it = stored.find(key);
    if (it == stored.end()) {
      if (!head) throw CheckpointError("checkpoint lacks backbone key '" + key + "'");
      r.reinitialized.push_back(key);
      continue;
    }
    if (it->second.shape() != value.shape()) {
      if (!head) {
        throw CheckpointError("backbone key '" + key + "' has shape " + shape_str(it->second.shape()) +
                              ", model expects " + shape_str(value.shape()));
      }
      r.reinitialized.push_back(key);
      continue;
    }
    if (head && mode == LoadMode::kBackboneOnly) {
      r.reinitialized.push_back(key);
      continue;
    }
    value = it->second;
    r.restored.push_back(key);
  }
  for (const auto& [key, value] : stored) {
    auto it = r.params.find(key);
    const bool taken = it != r.params.end() && it->second.shape() == value.shape() &&
                       !(is_head_key(key) && mode == LoadMode::kBackboneOnly);
    if (!taken) r.unused.push_back(key);
  }
  return r;
}

inline LoadReport load_checkpoint(const std::string& path, const rvsa::ParamMap& fresh, LoadMode mode) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open " + path);
  return load_checkpoint(read_checkpoint(is), fresh, mode);
}

}  // namespace mtp::engine
