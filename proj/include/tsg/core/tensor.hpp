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

#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "tsg/core/error.hpp"

namespace tsg {

template <typename T>
concept Real = std::same_as<T, float> || std::same_as<T, double>;

// On-disk precision tags for the tensor binary format.
enum class Precision : std::uint8_t { f32 = 1, f64 = 2 };

template <Real T>
constexpr Precision precision_of() {
  return std::same_as<T, float> ? Precision::f32 : Precision::f64;
}

struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 0;
  friend bool operator==(const Shape&, const Shape&) = default;
};

inline std::string to_string(Shape s) {
  return detail::concat(s.rows, "x", s.cols);
}

/// Dense row-major matrix. A default-constructed tensor is an empty
/// placeholder; every tensor built through a sizing constructor has
/// positive dimensions.
template <Real T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  Tensor(std::size_t rows, std::size_t cols, T fill = T(0))
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {
    if (rows == 0 || cols == 0) {
      throw DimensionError(detail::concat("tensor dimensions must be positive, got ",
                                          rows, "x", cols));
    }
  }

  Tensor(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (rows == 0 || cols == 0) {
      throw DimensionError(detail::concat("tensor dimensions must be positive, got ",
                                          rows, "x", cols));
    }
    if (data_.size() != rows * cols) {
      throw DimensionError(detail::concat("tensor data length ", data_.size(),
                                          " does not match ", rows, "x", cols));
    }
  }

  // Nested-list construction, e.g. Tensor<double>{{1, 2}, {3, 4}}.
  Tensor(std::initializer_list<std::initializer_list<T>> rows) {
    rows_ = rows.size();
    cols_ = rows_ ? rows.begin()->size() : 0;
    if (rows_ == 0 || cols_ == 0) throw DimensionError("empty tensor literal");
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw DimensionError("ragged tensor literal");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static Tensor zeros(std::size_t rows, std::size_t cols) { return Tensor(rows, cols); }
  static Tensor full(std::size_t rows, std::size_t cols, T v) { return Tensor(rows, cols, v); }
  static Tensor identity(std::size_t n) {
    Tensor t(n, n);
    for (std::size_t i = 0; i < n; ++i) t(i, i) = T(1);
    return t;
  }
  static Tensor row_vector(std::span<const T> values) {
    return Tensor(1, values.size(), std::vector<T>(values.begin(), values.end()));
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  Shape shape() const { return {rows_, cols_}; }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  template <Real U>
  Tensor<U> cast() const {
    Tensor<U> out(rows_, cols_);
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return out;
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

inline void require_same_shape(Shape a, Shape b, const char* what) {
  if (a != b) {
    throw DimensionError(detail::concat(what, ": shape mismatch ", to_string(a), " vs ",
                                        to_string(b)));
  }
}

inline void require_finite_values(bool ok, const char* what) {
  if (!ok) throw NumericError(detail::concat(what, ": non-finite value produced"));
}

// Plain (non-differentiable) kernels. The autodiff tape is built on these.
namespace kernels {

template <Real T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError(detail::concat("matmul: cannot multiply ", to_string(a.shape()),
                                        " by ", to_string(b.shape())));
  }
  Tensor<T> out(a.rows(), b.cols());
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  const T* pa = a.values().data();
  const T* pb = b.values().data();
  T* po = out.values().data();
  for (std::size_t i = 0; i < n; ++i) {
    T* orow = po + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = pa[i * k + p];
      if (av == T(0)) continue;
      const T* brow = pb + p * m;
      for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

// a^T * b without materializing the transpose.
template <Real T>
Tensor<T> matmul_tn(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rows() != b.rows()) {
    throw DimensionError(detail::concat("matmul_tn: cannot multiply transpose of ",
                                        to_string(a.shape()), " by ", to_string(b.shape())));
  }
  Tensor<T> out(a.cols(), b.cols());
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  const T* pa = a.values().data();
  const T* pb = b.values().data();
  T* po = out.values().data();
  for (std::size_t r = 0; r < n; ++r) {
    const T* arow = pa + r * k;
    const T* brow = pb + r * m;
    for (std::size_t i = 0; i < k; ++i) {
      const T av = arow[i];
      if (av == T(0)) continue;
      T* orow = po + i * m;
      for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

// a * b^T without materializing the transpose.
template <Real T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.cols() != b.cols()) {
    throw DimensionError(detail::concat("matmul_nt: cannot multiply ", to_string(a.shape()),
                                        " by transpose of ", to_string(b.shape())));
  }
  Tensor<T> out(a.rows(), b.rows());
  const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
  const T* pa = a.values().data();
  const T* pb = b.values().data();
  for (std::size_t i = 0; i < n; ++i) {
    const T* arow = pa + i * k;
    for (std::size_t j = 0; j < m; ++j) {
      const T* brow = pb + j * k;
      T acc = T(0);
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      out(i, j) = acc;
    }
  }
  return out;
}

template <Real T>
Tensor<T> transpose(const Tensor<T>& a) {
  Tensor<T> out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

template <Real T>
void add_into(Tensor<T>& acc, const Tensor<T>& x) {
  require_same_shape(acc.shape(), x.shape(), "accumulate");
  auto dst = acc.values();
  auto src = x.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace kernels
}  // namespace tsg
