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

// Plain forward kernels shared by the tape and by callers that need no
// gradients: masked row softmax and elementwise activations.

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "tsg/core/tensor.hpp"

namespace tsg {

/// Boolean matrix; nonzero entries are kept, zero entries are masked out.
struct Mask {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> keep;

  Mask() = default;
  Mask(std::size_t r, std::size_t c, bool value = true)
      : rows(r), cols(c), keep(r * c, value ? 1 : 0) {}

  bool operator()(std::size_t r, std::size_t c) const { return keep[r * cols + c] != 0; }
  void set(std::size_t r, std::size_t c, bool v) { keep[r * cols + c] = v ? 1 : 0; }
  Shape shape() const { return {rows, cols}; }
};

struct Activation {
  enum class Kind { identity, relu, leaky_relu };
  Kind kind = Kind::identity;
  double slope = 0.2;

  static Activation identity() { return {Kind::identity, 0.0}; }
  static Activation relu() { return {Kind::relu, 0.0}; }
  static Activation leaky_relu(double slope = 0.2) {
    if (!(slope > 0.0 && slope < 1.0)) {
      throw ContractError(detail::concat("leaky_relu slope must lie in (0,1), got ", slope));
    }
    return {Kind::leaky_relu, slope};
  }
};

namespace kernels {

template <Real T>
T activate(T x, const Activation& act) {
  switch (act.kind) {
    case Activation::Kind::identity:
      return x;
    case Activation::Kind::relu:
      return x > T(0) ? x : T(0);
    case Activation::Kind::leaky_relu:
      return x > T(0) ? x : static_cast<T>(act.slope) * x;
  }
  return x;
}

// Derivative with the subgradient at 0 taken from the negative side.
template <Real T>
T activate_grad(T x, const Activation& act) {
  switch (act.kind) {
    case Activation::Kind::identity:
      return T(1);
    case Activation::Kind::relu:
      return x > T(0) ? T(1) : T(0);
    case Activation::Kind::leaky_relu:
      return x > T(0) ? T(1) : static_cast<T>(act.slope);
  }
  return T(1);
}

template <Real T>
Tensor<T> activation(const Tensor<T>& x, const Activation& act) {
  Tensor<T> out = x;
  for (auto& v : out.values()) v = activate(v, act);
  return out;
}

template <Real T>
Tensor<T> rowwise_softmax(const Tensor<T>& x, const Mask* mask = nullptr) {
  if (mask) require_same_shape(x.shape(), mask->shape(), "rowwise_softmax mask");
  Tensor<T> out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    T mx = -std::numeric_limits<T>::infinity();
    bool any = false;
    for (std::size_t j = 0; j < x.cols(); ++j) {
      if (mask && !(*mask)(i, j)) continue;
      any = true;
      mx = std::max(mx, x(i, j));
    }
    if (!any) {
      throw DegenerateRowError(detail::concat("rowwise_softmax: row ", i, " is fully masked"));
    }
    T total = T(0);
    for (std::size_t j = 0; j < x.cols(); ++j) {
      if (mask && !(*mask)(i, j)) continue;
      const T e = std::exp(x(i, j) - mx);
      out(i, j) = e;
      total += e;
    }
    for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) /= total;
  }
  return out;
}

}  // namespace kernels

template <Real T>
Tensor<T> rowwise_softmax(const Tensor<T>& x, const Mask* mask = nullptr) {
  return kernels::rowwise_softmax(x, mask);
}

template <Real T>
Tensor<T> activation(const Tensor<T>& x, const Activation& act) {
  return kernels::activation(x, act);
}

template <Real T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  return kernels::matmul(a, b);
}

}  // namespace tsg
