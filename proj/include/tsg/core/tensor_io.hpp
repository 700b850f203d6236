// Copyright 2026 The TSG Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Tensor binary format:
//   "TSG1" | u32 rows | u32 cols | u8 precision (1 = f32, 2 = f64) |
//   rows*cols little-endian IEEE values, row-major.

#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

#include "tsg/core/error.hpp"
#include "tsg/core/tensor.hpp"

namespace tsg {

namespace le {

inline void put_u8(std::ostream& os, std::uint8_t v) { os.put(static_cast<char>(v)); }

inline void put_u32(std::ostream& os, std::uint32_t v) {
  std::array<char, 4> b{};
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b.data(), 4);
}

inline void put_u64(std::ostream& os, std::uint64_t v) {
  std::array<char, 8> b{};
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b.data(), 8);
}

inline void put_u16(std::ostream& os, std::uint16_t v) {
  os.put(static_cast<char>(v & 0xff));
  os.put(static_cast<char>(v >> 8));
}

template <typename E = ParseError>
void read_exact(std::istream& is, char* dst, std::size_t n, const char* what) {
  is.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n) {
    throw E(detail::concat("unexpected end of data while reading ", what));
  }
}

template <typename E = ParseError>
std::uint8_t get_u8(std::istream& is, const char* what) {
  char c = 0;
  read_exact<E>(is, &c, 1, what);
  return static_cast<std::uint8_t>(c);
}

template <typename E = ParseError>
std::uint16_t get_u16(std::istream& is, const char* what) {
  std::array<unsigned char, 2> b{};
  read_exact<E>(is, reinterpret_cast<char*>(b.data()), 2, what);
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

template <typename E = ParseError>
std::uint32_t get_u32(std::istream& is, const char* what) {
  std::array<unsigned char, 4> b{};
  read_exact<E>(is, reinterpret_cast<char*>(b.data()), 4, what);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

template <typename E = ParseError>
std::uint64_t get_u64(std::istream& is, const char* what) {
  std::array<unsigned char, 8> b{};
  read_exact<E>(is, reinterpret_cast<char*>(b.data()), 8, what);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline void put_f32(std::ostream& os, float v) { put_u32(os, std::bit_cast<std::uint32_t>(v)); }
inline void put_f64(std::ostream& os, double v) { put_u64(os, std::bit_cast<std::uint64_t>(v)); }

template <typename E = ParseError>
float get_f32(std::istream& is, const char* what) {
  return std::bit_cast<float>(get_u32<E>(is, what));
}

template <typename E = ParseError>
double get_f64(std::istream& is, const char* what) {
  return std::bit_cast<double>(get_u64<E>(is, what));
}

}  // namespace le

inline constexpr std::array<char, 4> kTensorMagic = {'T', 'S', 'G', '1'};

template <Real T>
void write_tensor(std::ostream& os, const Tensor<T>& t) {
  os.write(kTensorMagic.data(), 4);
  le::put_u32(os, static_cast<std::uint32_t>(t.rows()));
  le::put_u32(os, static_cast<std::uint32_t>(t.cols()));
  le::put_u8(os, static_cast<std::uint8_t>(precision_of<T>()));
  for (T v : t.values()) {
    if constexpr (std::same_as<T, float>) le::put_f32(os, v);
    else le::put_f64(os, v);
  }
}

/// Reads one tensor. f32 data may be widened into a double tensor; narrowing
/// f64 data into a float tensor is refused.
template <Real T, typename E = ParseError>
Tensor<T> read_tensor(std::istream& is) {
  std::array<char, 4> magic{};
  le::read_exact<E>(is, magic.data(), 4, "tensor magic");
  if (magic != kTensorMagic) throw E("bad tensor magic (expected TSG1)");
  const std::uint32_t rows = le::get_u32<E>(is, "tensor rows");
  const std::uint32_t cols = le::get_u32<E>(is, "tensor cols");
  const std::uint8_t tag = le::get_u8<E>(is, "tensor precision");
  if (rows == 0 || cols == 0) throw E(detail::concat("tensor has zero dimension ", rows, "x", cols));
  if (tag != static_cast<std::uint8_t>(Precision::f32) &&
      tag != static_cast<std::uint8_t>(Precision::f64)) {
    throw E(detail::concat("unknown tensor precision tag ", int(tag)));
  }
  const bool src64 = tag == static_cast<std::uint8_t>(Precision::f64);
  if (src64 && std::same_as<T, float>) throw E("refusing to narrow f64 tensor data to f32");
  Tensor<T> t(rows, cols);
  for (auto& v : t.values()) {
    v = src64 ? static_cast<T>(le::get_f64<E>(is, "tensor values"))
              : static_cast<T>(le::get_f32<E>(is, "tensor values"));
  }
  return t;
}

}  // namespace tsg
