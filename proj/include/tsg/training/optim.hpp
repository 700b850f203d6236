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

// Both optimizers read the gradient slots of the stores they are given and
// zero them afterwards. Parameters in stores that are not passed are never
// touched, which is how frozen sub-models stay bit-identical.

#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>

#include "tsg/core/error.hpp"
#include "tsg/core/params.hpp"

namespace tsg::training {

/// w <- w - lr * (g + weight_decay * w)
template <Real T>
void sgd_step(ParamStore<T>& params, double lr, double weight_decay = 0.0) {
  const T a = static_cast<T>(lr), wd = static_cast<T>(weight_decay);
  for (auto& [_, e] : params) {
    auto w = e.value.values();
    auto g = e.grad.values();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= a * (g[i] + wd * w[i]);
    e.grad.fill(T(0));
  }
}

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// Moment estimates keyed by parameter name, plus the shared step count.
template <Real T>
struct AdamState {
  std::map<std::string, std::pair<Tensor<T>, Tensor<T>>> moments;
  std::uint64_t step = 0;
};

/// One bias-corrected Adam step over several stores. The weight decay term
/// is folded into the gradient before the moment updates:
///   g' = g + wd*w;  m = b1 m + (1-b1) g';  v = b2 v + (1-b2) g'^2
///   w -= lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
template <Real T>
void adam_step(std::span<ParamStore<T>* const> stores, AdamState<T>& state, const AdamOptions& o) {
  ++state.step;
  const double t = static_cast<double>(state.step);
  const T c1 = static_cast<T>(1.0 - std::pow(o.beta1, t));
  const T c2 = static_cast<T>(1.0 - std::pow(o.beta2, t));
  const T b1 = static_cast<T>(o.beta1), b2 = static_cast<T>(o.beta2);
  const T lr = static_cast<T>(o.lr), eps = static_cast<T>(o.eps), wd = static_cast<T>(o.weight_decay);
  for (auto* store : stores) {
    for (auto& [name, e] : *store) {
      auto it = state.moments.find(name);
      if (it == state.moments.end()) {
        it = state.moments
                 .emplace(name, std::pair{Tensor<T>(e.value.rows(), e.value.cols()),
                                          Tensor<T>(e.value.rows(), e.value.cols())})
                 .first;
      }
      auto w = e.value.values();
      auto g = e.grad.values();
      auto m = it->second.first.values();
      auto v = it->second.second.values();
      if (m.size() != w.size()) {
        throw ContractError(detail::concat("adam: parameter '", name, "' changed shape"));
      }
      for (std::size_t i = 0; i < w.size(); ++i) {
        const T gi = g[i] + wd * w[i];
        m[i] = b1 * m[i] + (T(1) - b1) * gi;
        v[i] = b2 * v[i] + (T(1) - b2) * gi * gi;
        w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
      }
      e.grad.fill(T(0));
    }
  }
}

template <Real T>
void adam_step(ParamStore<T>& params, AdamState<T>& state, const AdamOptions& o) {
  ParamStore<T>* one[] = {&params};
  adam_step<T>(std::span<ParamStore<T>* const>(one), state, o);
}

}  // namespace tsg::training
