// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

#include "lmpc/error.hpp"

namespace lmpc::io {

template <class U>
void put_le(std::ostream& out, U v) {
  char buf[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(buf, sizeof(U));
}

template <class U>
U get_le(std::istream& in) {
  unsigned char buf[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof(U))) {
    throw FormatError("unexpected end of file");
  }
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
  return v;
}

inline void put_u32(std::ostream& o, std::uint32_t v) { put_le(o, v); }
inline void put_u64(std::ostream& o, std::uint64_t v) { put_le(o, v); }
inline void put_f64(std::ostream& o, double v) { put_le(o, std::bit_cast<std::uint64_t>(v)); }
inline std::uint32_t get_u32(std::istream& i) { return get_le<std::uint32_t>(i); }
inline std::uint64_t get_u64(std::istream& i) { return get_le<std::uint64_t>(i); }
inline double get_f64(std::istream& i) { return std::bit_cast<double>(get_le<std::uint64_t>(i)); }

inline void put_magic(std::ostream& o, const char (&magic)[5]) { o.write(magic, 4); }

inline void expect_magic(std::istream& in, const char (&magic)[5], const char* what) {
  char buf[4];
  if (!in.read(buf, 4) || std::string(buf, 4) != std::string(magic, 4)) {
    throw FormatError(std::string(what) + ": bad magic bytes");
  }
}

}  // namespace lmpc::io
