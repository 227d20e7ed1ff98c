// Copyright (c) 2026, The MTP Authors
// SPDX-License-Identifier: Apache-2.0
//
// MTSD1 dataset file, one file per stream:
//
//   "MTSD1 <count> <height> <width> <channels> <classes> <stream>\n"
//   count records of
//     image                 TNSR1 dump, channels x height x width
//     semantic              height*width bytes, row-major, 255 = ignore
//     u32 n_instances
//       n_instances times   i32 x_min y_min x_max y_max, u32 class,
//                           u32 n_runs, n_runs x u32 run lengths
//     u32 n_rboxes
//       n_rboxes times      f64 cx cy w h theta, u32 class
//     u32 dropped
//
// Integers and floats are little-endian. Mask runs alternate 0 and 1 over
// the row-major mask, starting with a (possibly empty) run of zeros.

#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>

#include "mtp/annotation/sample.hpp"
#include "mtp/core/tnsr_io.hpp"

namespace mtp::annotation {

inline constexpr const char* kDatasetMagic = "MTSD1";

inline std::vector<std::uint32_t> encode_runs(const Mask& m) {
  std::vector<std::uint32_t> runs;
  std::uint8_t cur = 0;
  std::uint32_t len = 0;
  for (auto b : m.bits) {
    const std::uint8_t v = b ? 1 : 0;
    if (v != cur) {
      runs.push_back(len);
      cur = v;
      len = 0;
    }
    ++len;
  }
  runs.push_back(len);
  return runs;
}

inline Mask decode_runs(const std::vector<std::uint32_t>& runs, std::size_t h, std::size_t w) {
  Mask m(h, w);
  std::size_t pos = 0;
  std::uint8_t v = 0;
  for (auto len : runs) {
    if (pos + len > h * w) throw FormatError("mask runs overflow the grid");
    for (std::uint32_t i = 0; i < len; ++i) m.bits[pos++] = v;
    v ^= 1;
  }
  if (pos != h * w) throw FormatError("mask runs do not cover the grid");
  return m;
}

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(b, 4);
}

inline std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > UINT32_MAX) throw FormatError(std::string(what) + " does not fit in 32 bits");
  return static_cast<std::uint32_t>(v);
}

inline std::string offset_str(std::istream& is) {
  return "offset " + std::to_string(static_cast<long long>(is.tellg()));
}

inline std::uint32_t get_u32(std::istream& is, const char* what) {
  const std::string where = offset_str(is);
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) {
    throw FormatError(std::string("truncated ") + what + " at " + where);
  }
  return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
         static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
}

inline double get_f64(std::istream& is, const char* what) {
  const std::string where = offset_str(is);
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) {
    throw FormatError(std::string("truncated ") + what + " at " + where);
  }
  return std::bit_cast<double>(io::read_u64_le(b));
}

}  // namespace detail

inline void write_dataset(std::ostream& os, const Dataset& ds) {
  os << kDatasetMagic << ' ' << ds.samples.size() << ' ' << ds.height << ' ' << ds.width << ' '
     << ds.channels << ' ' << ds.classes << ' ' << static_cast<std::uint32_t>(ds.stream) << '\n';
  for (const MultiTaskSample& s : ds.samples) {
    if (s.image.shape() != Shape{ds.channels, ds.height, ds.width}) {
      throw ShapeError("write_dataset: sample image " + shape_str(s.image.shape()) + " off the dataset grid");
    }
    io::write_tensor(os, s.image);
    os.write(reinterpret_cast<const char*>(s.semantic.labels.data()),
             static_cast<std::streamsize>(s.semantic.labels.size()));
    detail::put_u32(os, detail::checked_u32(s.instances.size(), "instance count"));
    for (const InstanceAnnotation& inst : s.instances) {
      for (int v : {inst.hbox.x_min, inst.hbox.y_min, inst.hbox.x_max, inst.hbox.y_max}) {
        detail::put_u32(os, static_cast<std::uint32_t>(v));
      }
      detail::put_u32(os, detail::checked_u32(inst.class_id, "class id"));
      const auto runs = encode_runs(inst.mask);
      detail::put_u32(os, detail::checked_u32(runs.size(), "run count"));
      for (auto r : runs) detail::put_u32(os, r);
    }
    detail::put_u32(os, detail::checked_u32(s.rboxes.size(), "rbox count"));
    for (const RotatedBox& b : s.rboxes) {
      for (double v : {b.cx, b.cy, b.w, b.h, b.theta}) io::write_u64_le(os, std::bit_cast<std::uint64_t>(v));
      detail::put_u32(os, detail::checked_u32(b.class_id, "class id"));
    }
    detail::put_u32(os, detail::checked_u32(s.dropped, "dropped count"));
  }
}

inline Dataset read_dataset(std::istream& is) {
  const auto pos = static_cast<std::streamoff>(is.tellg());
  std::istringstream header(io::detail::read_line(is, "dataset header"));
  std::string magic;
  std::size_t count = 0, stream = 0;
  Dataset ds;
  if (!(header >> magic >> count >> ds.height >> ds.width >> ds.channels >> ds.classes >> stream) ||
      magic != kDatasetMagic || ds.height == 0 || ds.width == 0 || ds.channels == 0 || stream >= kNumStreams) {
    throw FormatError("bad MTSD1 header at offset " + std::to_string(static_cast<long long>(pos)));
  }
  ds.stream = static_cast<Stream>(stream);
  const std::size_t plane = ds.height * ds.width;
  for (std::size_t i = 0; i < count; ++i) {
    MultiTaskSample s;
    s.stream = ds.stream;
    const std::string where = detail::offset_str(is);
    s.image = io::read_tensor(is);
    if (s.image.shape() != Shape{ds.channels, ds.height, ds.width}) {
      throw FormatError("image grid does not match header at " + where);
    }
    s.semantic = {ds.height, ds.width, std::vector<std::uint8_t>(plane)};
    const std::string sem_where = detail::offset_str(is);
    if (!is.read(reinterpret_cast<char*>(s.semantic.labels.data()), static_cast<std::streamsize>(plane))) {
      throw FormatError("truncated semantic map at " + sem_where);
    }
    const std::uint32_t n_inst = detail::get_u32(is, "instance count");
    for (std::uint32_t k = 0; k < n_inst; ++k) {
      InstanceAnnotation inst;
      inst.hbox.x_min = static_cast<int>(detail::get_u32(is, "hbox"));
      inst.hbox.y_min = static_cast<int>(detail::get_u32(is, "hbox"));
      inst.hbox.x_max = static_cast<int>(detail::get_u32(is, "hbox"));
      inst.hbox.y_max = static_cast<int>(detail::get_u32(is, "hbox"));
      inst.class_id = detail::get_u32(is, "class id");
      const std::string runs_where = detail::offset_str(is);
      const std::uint32_t n_runs = detail::get_u32(is, "run count");
      if (n_runs > plane + 1) throw FormatError("implausible run count at " + runs_where);
      std::vector<std::uint32_t> runs(n_runs);
      for (auto& r : runs) r = detail::get_u32(is, "run length");
      try {
        inst.mask = decode_runs(runs, ds.height, ds.width);
      } catch (const FormatError& e) {
        throw FormatError(std::string(e.what()) + " at " + runs_where);
      }
      s.instances.push_back(std::move(inst));
    }
    const std::uint32_t n_rbox = detail::get_u32(is, "rbox count");
    for (std::uint32_t k = 0; k < n_rbox; ++k) {
      RotatedBox b;
      b.cx = detail::get_f64(is, "rbox");
      b.cy = detail::get_f64(is, "rbox");
      b.w = detail::get_f64(is, "rbox");
      b.h = detail::get_f64(is, "rbox");
      b.theta = detail::get_f64(is, "rbox");
      b.class_id = detail::get_u32(is, "class id");
      s.rboxes.push_back(b);
    }
    s.dropped = detail::get_u32(is, "dropped count");
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

inline void save_dataset(const std::string& path, const Dataset& ds) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  write_dataset(os, ds);
  if (!os) throw FormatError("write failed for " + path);
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path);
  return read_dataset(is);
}

}  // namespace mtp::annotation
