// Copyright (c) 2026, The MTP Authors
// SPDX-License-Identifier: Apache-2.0
//
// Finetuning schedule arithmetic:
//
//   total samples      n_to_sa = n_tr_im * n_tr_ep   (or n_to_it * s_b)
//   total iterations   n_to_it = n_tr_im * n_tr_ep / s_b
//   iterations/class   ai_c    = n_to_it / n_c
//   pixels/class       ap_c    = n_to_sa * s_tr_im / n_c
//
// Every quotient is rounded half to even. When a schedule states its
// iteration count, that count is used as is and drives n_to_sa.

#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mtp/core/error.hpp"

namespace mtp::analytics {

struct ScheduleConfig {
  std::string name;
  std::uint64_t n_tr_im = 0;
  std::optional<std::uint64_t> n_tr_ep;
  std::optional<std::uint64_t> n_to_it;
  std::uint64_t s_b = 0;
  std::uint64_t s_tr_im = 0;
  std::uint64_t n_c = 0;
  bool operator==(const ScheduleConfig&) const = default;
};

struct ScheduleRow {
  std::uint64_t n_to_sa = 0, n_to_it = 0, ai_c = 0, ap_c = 0;
  bool operator==(const ScheduleRow&) const = default;
};

/// a / b rounded to nearest, ties to even.
inline std::uint64_t div_round_half_even(std::uint64_t a, std::uint64_t b) {
  if (b == 0) throw ConfigError("division by zero");
  const std::uint64_t q = a / b, r = a % b;
  const std::uint64_t twice = 2 * r;  // r < b <= 2^63 keeps this exact
  if (twice > b || (twice == b && (q & 1))) return q + 1;
  return q;
}

inline std::uint64_t checked_mul(std::uint64_t a, std::uint64_t b, const std::string& what) {
  if (a != 0 && b > UINT64_MAX / a) throw ConfigError(what + ": product overflows 64 bits");
  return a * b;
}

inline void validate(const ScheduleConfig& c) {
  const std::string tag = "schedule '" + c.name + "'";
  if (c.n_tr_im == 0 || c.s_b == 0 || c.s_tr_im == 0 || c.n_c == 0) {
    throw ConfigError(tag + ": image count, batch size, image size and class count must be positive");
  }
  if (!c.n_tr_ep && !c.n_to_it) throw ConfigError(tag + ": needs an epoch or an iteration count");
  if ((c.n_tr_ep && *c.n_tr_ep == 0) || (c.n_to_it && *c.n_to_it == 0)) {
    throw ConfigError(tag + ": epoch and iteration counts must be positive");
  }
}

inline ScheduleRow derive_row(const ScheduleConfig& c) {
  validate(c);
  ScheduleRow r;
  if (c.n_to_it) {
    r.n_to_it = *c.n_to_it;
    r.n_to_sa = checked_mul(r.n_to_it, c.s_b, c.name);
  } else {
    r.n_to_sa = checked_mul(c.n_tr_im, *c.n_tr_ep, c.name);
    r.n_to_it = div_round_half_even(r.n_to_sa, c.s_b);
  }
  r.ai_c = div_round_half_even(r.n_to_it, c.n_c);
  r.ap_c = div_round_half_even(checked_mul(r.n_to_sa, c.s_tr_im, c.name), c.n_c);
  return r;
}

/// A schedule together with the derived values it is expected to produce.
struct FixtureEntry {
  ScheduleConfig config;
  std::optional<ScheduleRow> expected;
};

inline constexpr const char* kCellNames[4] = {"n_to_sa", "n_to_it", "ai_c", "ap_c"};

inline std::uint64_t cell(const ScheduleRow& r, std::size_t i) {
  switch (i) {
    case 0: return r.n_to_sa;
    case 1: return r.n_to_it;
    case 2: return r.ai_c;
    default: return r.ap_c;
  }
}

struct CellMismatch {
  std::string dataset;
  std::string cell;
  std::uint64_t expected = 0, derived = 0;
};

struct Reconciliation {
  std::vector<ScheduleRow> rows;
  std::size_t cells = 0, matched = 0;
  std::vector<CellMismatch> mismatches;
  bool ok() const { return mismatches.empty(); }
};

inline Reconciliation reconcile_table(const std::vector<FixtureEntry>& entries) {
  Reconciliation rec;
  for (const FixtureEntry& e : entries) {
    const ScheduleRow row = derive_row(e.config);
    rec.rows.push_back(row);
    if (!e.expected) continue;
    for (std::size_t i = 0; i < 4; ++i) {
      ++rec.cells;
      if (cell(row, i) == cell(*e.expected, i)) {
        ++rec.matched;
      } else {
        rec.mismatches.push_back({e.config.name, kCellNames[i], cell(*e.expected, i), cell(row, i)});
      }
    }
  }
  return rec;
}

inline void emit_report(std::ostream& os, const std::vector<ScheduleConfig>& configs,
                        const std::vector<ScheduleRow>& rows) {
  if (configs.size() != rows.size()) throw ConfigError("emit_report: config and row counts differ");
  os << "dataset,n_tr_im,n_tr_ep,s_b,s_tr_im,n_c,n_to_sa,n_to_it,ai_c,ap_c\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const ScheduleConfig& c = configs[i];
    const ScheduleRow& r = rows[i];
    os << c.name << ',' << c.n_tr_im << ',';
    if (c.n_tr_ep) os << *c.n_tr_ep;
    os << ',' << c.s_b << ',' << c.s_tr_im << ',' << c.n_c << ',' << r.n_to_sa << ',' << r.n_to_it << ','
       << r.ai_c << ',' << r.ap_c << '\n';
  }
}

inline std::string emit_report(const std::vector<FixtureEntry>& entries, const Reconciliation& rec) {
  std::vector<ScheduleConfig> configs;
  for (const auto& e : entries) configs.push_back(e.config);
  std::ostringstream os;
  emit_report(os, configs, rec.rows);
  return os.str();
}

// ------------------------------------------------------------------ fixture
//
// Either a JSON array of schedule objects or an object {"rows": [...]}.
// A schedule object has "name", "n_tr_im", "s_b", "s_tr_im", "n_c", one or
// both of "n_tr_ep" / "n_to_it", and optionally "expected" with the four
// derived values.

namespace detail {

inline std::uint64_t get_uint(const nlohmann::json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw FixtureError(where + ": missing '" + key + "'");
  const auto& v = j.at(key);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
    throw FixtureError(where + ": '" + key + "' must be a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

inline std::optional<std::uint64_t> get_opt(const nlohmann::json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return get_uint(j, key, where);
}

}  // namespace detail

inline std::vector<FixtureEntry> parse_fixture(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FixtureError(std::string("fixture is not valid JSON: ") + e.what());
  }
  if (j.is_object()) {
    if (!j.contains("rows")) throw FixtureError("fixture object needs a 'rows' array");
    j = j.at("rows");
  }
  if (!j.is_array()) throw FixtureError("fixture must be a JSON array of schedules");
  std::vector<FixtureEntry> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto& o = j[i];
    const std::string where = "fixture row " + std::to_string(i);
    if (!o.is_object()) throw FixtureError(where + ": not an object");
    FixtureEntry e;
    if (!o.contains("name") || !o["name"].is_string()) throw FixtureError(where + ": missing 'name'");
    e.config.name = o["name"].get<std::string>();
    if (e.config.name.find_first_of(",\n\"") != std::string::npos) {
      throw FixtureError(where + ": name must not contain commas, quotes or newlines");
    }
    e.config.n_tr_im = detail::get_uint(o, "n_tr_im", where);
    e.config.n_tr_ep = detail::get_opt(o, "n_tr_ep", where);
    e.config.n_to_it = detail::get_opt(o, "n_to_it", where);
    e.config.s_b = detail::get_uint(o, "s_b", where);
    e.config.s_tr_im = detail::get_uint(o, "s_tr_im", where);
    e.config.n_c = detail::get_uint(o, "n_c", where);
    if (o.contains("expected")) {
      const auto& x = o["expected"];
      e.expected = ScheduleRow{detail::get_uint(x, "n_to_sa", where), detail::get_uint(x, "n_to_it", where),
                               detail::get_uint(x, "ai_c", where), detail::get_uint(x, "ap_c", where)};
    }
    try {
      validate(e.config);
    } catch (const ConfigError& err) {
      throw FixtureError(where + ": " + err.what());
    }
    out.push_back(std::move(e));
  }
  return out;
}

inline std::vector<FixtureEntry> load_fixture(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FixtureError("cannot open fixture " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_fixture(ss.str());
}

}  // namespace mtp::analytics
