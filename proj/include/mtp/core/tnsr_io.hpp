// Copyright (c) 2026, The MTP Authors
// SPDX-License-Identifier: Apache-2.0
//
// TNSR1 tensor dump:
//
//   "TNSR1\n"
//   <rank as ASCII decimal>"\n"
//   <dims as ASCII decimals separated by single spaces>"\n"
//   <numel little-endian IEEE-754 binary64 values, row-major>
//
// TNSR1 container (named collection, used for checkpoints):
//
//   "TNSR1-CONTAINER "<count>"\n"
//   count times: <key>"\n" followed by one TNSR1 dump
//
// Keys are written in ascending byte order, so equal collections produce
// equal files.

#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>

#include "mtp/core/error.hpp"
#include "mtp/core/tensor.hpp"

namespace mtp::io {

inline constexpr const char* kTensorMagic = "TNSR1";
inline constexpr const char* kContainerMagic = "TNSR1-CONTAINER";

inline void write_u64_le(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(b, 8);
}

inline std::uint64_t read_u64_le(const unsigned char* b) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline void write_tensor(std::ostream& os, const Tensor& t) {
  os << kTensorMagic << '\n' << t.rank() << '\n';
  for (std::size_t i = 0; i < t.rank(); ++i) {
    if (i) os << ' ';
    os << t.dim(i);
  }
  os << '\n';
  for (double v : t.vec()) write_u64_le(os, std::bit_cast<std::uint64_t>(v));
}

namespace detail {

inline std::string read_line(std::istream& is, const char* what) {
  const auto pos = is.tellg();
  std::string line;
  if (!std::getline(is, line)) {
    throw FormatError(std::string("unexpected end of stream reading ") + what + " at offset " +
                      std::to_string(static_cast<long long>(pos)));
  }
  return line;
}

inline std::size_t parse_size(const std::string& s, const char* what, std::streamoff offset) {
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos || s.size() > 18) {
    throw FormatError(std::string("malformed ") + what + " '" + s + "' at offset " +
                      std::to_string(static_cast<long long>(offset)));
  }
  return static_cast<std::size_t>(std::stoull(s));
}

}  // namespace detail

inline Tensor read_tensor(std::istream& is) {
  auto pos = static_cast<std::streamoff>(is.tellg());
  if (detail::read_line(is, "magic") != kTensorMagic) {
    throw FormatError("bad TNSR1 magic at offset " + std::to_string(static_cast<long long>(pos)));
  }
  pos = static_cast<std::streamoff>(is.tellg());
  const std::size_t rank = detail::parse_size(detail::read_line(is, "rank"), "rank", pos);
  if (rank == 0 || rank > 16) {
    throw FormatError("unsupported rank " + std::to_string(rank) + " at offset " +
                      std::to_string(static_cast<long long>(pos)));
  }
  pos = static_cast<std::streamoff>(is.tellg());
  std::istringstream dims_line(detail::read_line(is, "dims"));
  Shape shape;
  std::string tok;
  while (std::getline(dims_line, tok, ' ')) shape.push_back(detail::parse_size(tok, "dimension", pos));
  if (shape.size() != rank) {
    throw FormatError("dimension count does not match rank at offset " +
                      std::to_string(static_cast<long long>(pos)));
  }
  for (std::size_t d : shape) {
    if (d == 0) throw FormatError("zero dimension at offset " + std::to_string(static_cast<long long>(pos)));
  }
  const std::size_t n = shape_numel(shape);
  std::vector<double> data(n);
  std::vector<unsigned char> raw(n * 8);
  pos = static_cast<std::streamoff>(is.tellg());
  if (!is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
    throw FormatError("truncated tensor payload at offset " + std::to_string(static_cast<long long>(pos)));
  }
  for (std::size_t i = 0; i < n; ++i) data[i] = std::bit_cast<double>(read_u64_le(raw.data() + 8 * i));
  return Tensor(std::move(shape), std::move(data));
}

using TensorMap = std::map<std::string, Tensor>;

inline void write_container(std::ostream& os, const TensorMap& tensors) {
  os << kContainerMagic << ' ' << tensors.size() << '\n';
  for (const auto& [key, t] : tensors) {
    if (key.empty() || key.find('\n') != std::string::npos) throw FormatError("invalid container key");
    os << key << '\n';
    write_tensor(os, t);
  }
}

inline TensorMap read_container(std::istream& is) {
  const auto pos = static_cast<std::streamoff>(is.tellg());
  const std::string header = detail::read_line(is, "container header");
  const std::string prefix = std::string(kContainerMagic) + " ";
  if (header.rfind(prefix, 0) != 0) {
    throw FormatError("bad container header at offset " + std::to_string(static_cast<long long>(pos)));
  }
  const std::size_t count = detail::parse_size(header.substr(prefix.size()), "entry count", pos);
  TensorMap out;
  for (std::size_t i = 0; i < count; ++i) {
    const auto kpos = static_cast<std::streamoff>(is.tellg());
    std::string key = detail::read_line(is, "entry key");
    if (key.empty()) throw FormatError("empty key at offset " + std::to_string(static_cast<long long>(kpos)));
    Tensor t = read_tensor(is);
    if (!out.emplace(std::move(key), std::move(t)).second) {
      throw FormatError("duplicate key at offset " + std::to_string(static_cast<long long>(kpos)));
    }
  }
  return out;
}

inline void save_tensor(const std::string& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  write_tensor(os, t);
}

inline Tensor load_tensor(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path);
  return read_tensor(is);
}

}  // namespace mtp::io
