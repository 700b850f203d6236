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

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tsg/core/error.hpp"
#include "tsg/core/random.hpp"
#include "tsg/core/tensor.hpp"

namespace tsg {

/// Named trainable tensors, each paired with a same-shaped gradient slot.
/// Iteration order is lexicographic by name so serialization and optimizer
/// sweeps are reproducible.
template <Real T>
class ParamStore {
 public:
  struct Entry {
    Tensor<T> value;
    Tensor<T> grad;
  };

  void add(const std::string& name, Tensor<T> value) {
    if (value.empty()) throw ContractError(detail::concat("parameter '", name, "' is empty"));
    if (entries_.contains(name)) {
      throw ContractError(detail::concat("duplicate parameter name '", name, "'"));
    }
    Tensor<T> grad(value.rows(), value.cols());
    entries_.emplace(name, Entry{std::move(value), std::move(grad)});
  }

  // Replaces the value of an existing parameter; shape must match.
  void set(const std::string& name, Tensor<T> value) {
    auto& e = entry(name);
    require_same_shape(e.value.shape(), value.shape(), name.c_str());
    e.value = std::move(value);
  }

  bool contains(const std::string& name) const { return entries_.contains(name); }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  const Tensor<T>& value(const std::string& name) const { return entry(name).value; }
  Tensor<T>& value(const std::string& name) { return entry(name).value; }
  const Tensor<T>& grad(const std::string& name) const { return entry(name).grad; }
  Tensor<T>& grad(const std::string& name) { return entry(name).grad; }

  void zero_grad() {
    for (auto& [_, e] : entries_) e.grad.fill(T(0));
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [_, e] : entries_) n += e.value.size();
    return n;
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [k, _] : entries_) out.push_back(k);
    return out;
  }

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  friend bool operator==(const ParamStore& a, const ParamStore& b) {
    if (a.entries_.size() != b.entries_.size()) return false;
    auto ib = b.entries_.begin();
    for (const auto& [name, e] : a.entries_) {
      if (name != ib->first || !(e.value == ib->second.value)) return false;
      ++ib;
    }
    return true;
  }

 private:
  Entry& entry(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ContractError(detail::concat("unknown parameter '", name, "'"));
    return it->second;
  }
  const Entry& entry(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ContractError(detail::concat("unknown parameter '", name, "'"));
    return it->second;
  }

  std::map<std::string, Entry> entries_;
};

struct InitScheme {
  enum class Kind { xavier_uniform, zeros, constant };
  Kind kind = Kind::xavier_uniform;
  double value = 0.0;

  static InitScheme xavier() { return {Kind::xavier_uniform, 0.0}; }
  static InitScheme zero() { return {Kind::zeros, 0.0}; }
  static InitScheme constant(double c) { return {Kind::constant, c}; }
};

// Weights follow the row-vector convention (x * W), so fan_in = rows and
// fan_out = cols.
template <Real T>
Tensor<T> init_params(Shape shape, InitScheme scheme, std::uint64_t seed) {
  Tensor<T> out(shape.rows, shape.cols);
  switch (scheme.kind) {
    case InitScheme::Kind::zeros:
      break;
    case InitScheme::Kind::constant:
      out.fill(static_cast<T>(scheme.value));
      break;
    case InitScheme::Kind::xavier_uniform: {
      const double bound = std::sqrt(6.0 / static_cast<double>(shape.rows + shape.cols));
      Rng rng(seed);
      for (auto& v : out.values()) v = static_cast<T>(rng.uniform(-bound, bound));
      break;
    }
  }
  return out;
}

}  // namespace tsg
