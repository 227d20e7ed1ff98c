// Copyright (c) 2026, The MTP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "mtp/annotation/sample.hpp"
#include "mtp/core/error.hpp"

namespace mtp::engine {

struct StreamLosses {
  double rod = 0, ins_b = 0, ins_m = 0, sem = 0;
  bool operator==(const StreamLosses&) const = default;
};

struct MtpLossReport {
  std::array<StreamLosses, annotation::kNumStreams> streams{};
  double total = 0;
  bool operator==(const MtpLossReport&) const = default;
};

/// Unweighted sum of all twelve terms, stream by stream, each stream in the
/// order rod, ins_b, ins_m, sem.
inline MtpLossReport aggregate_mtp(const std::vector<StreamLosses>& parts) {
  if (parts.size() != annotation::kNumStreams) {
    throw ConfigError("aggregate_mtp: expected 3 streams, got " + std::to_string(parts.size()));
  }
  MtpLossReport r;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    r.streams[i] = parts[i];
    r.total += parts[i].rod;
    r.total += parts[i].ins_b;
    r.total += parts[i].ins_m;
    r.total += parts[i].sem;
  }
  return r;
}

struct TraceRecord {
  std::size_t iter = 0;
  double lr = 0;
  MtpLossReport report;
  bool operator==(const TraceRecord&) const = default;
};

inline std::string fmt_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_trace_header(std::ostream& os) {
  os << "iter,lr";
  for (const char* term : {"l_rod", "l_ins_b", "l_ins_m", "l_sem"})
    for (int i = 1; i <= 3; ++i) os << ',' << term << '_' << i;
  os << ",total\n";
}

inline void write_trace_row(std::ostream& os, const TraceRecord& r) {
  os << r.iter << ',' << fmt_g17(r.lr);
  for (int t = 0; t < 4; ++t) {
    for (const StreamLosses& s : r.report.streams) {
      const double v = t == 0 ? s.rod : t == 1 ? s.ins_b : t == 2 ? s.ins_m : s.sem;
      os << ',' << fmt_g17(v);
    }
  }
  os << ',' << fmt_g17(r.report.total) << '\n';
}

inline void write_trace(std::ostream& os, const std::vector<TraceRecord>& trace) {
  write_trace_header(os);
  for (const auto& r : trace) write_trace_row(os, r);
}

}  // namespace mtp::engine
