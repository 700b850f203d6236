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
#include <memory>
#include <span>
#include <vector>

#include "tsg/core/ops.hpp"
#include "tsg/core/tape.hpp"
#include "tsg/core/tensor.hpp"
#include "tsg/scene/extract.hpp"

namespace tsg::gnn {

/// D^-1/2 (A + I) D^-1/2 for an undirected graph with n nodes.
template <Real T>
struct NormalizedAdjacency {
  std::size_t n = 0;
  Tensor<T> matrix;
};

template <Real T>
NormalizedAdjacency<T> normalize_adjacency(const scene::EdgeSet& edges, std::size_t n) {
  if (n == 0) throw ContractError("normalize_adjacency: graph has no nodes");
  Tensor<T> a = Tensor<T>::identity(n);
  for (const auto& e : edges) {
    if (e.a >= n || e.b >= n || e.a == e.b) {
      throw ContractError(detail::concat("normalize_adjacency: invalid edge (", e.a, ",", e.b,
                                         ") for ", n, " nodes"));
    }
    a(e.a, e.b) = T(1);
    a(e.b, e.a) = T(1);
  }
  std::vector<T> inv_sqrt_deg(n);
  for (std::size_t i = 0; i < n; ++i) {
    T d = T(0);
    for (T v : a.row(i)) d += v;
    inv_sqrt_deg[i] = T(1) / std::sqrt(d);
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a(i, j) *= inv_sqrt_deg[i] * inv_sqrt_deg[j];
  return {n, std::move(a)};
}

// Row i averages the neighbours of i (self excluded); isolated rows are zero.
template <Real T>
Tensor<T> mean_aggregation_matrix(const scene::EdgeSet& edges, std::size_t n) {
  if (n == 0) throw ContractError("mean_aggregation_matrix: graph has no nodes");
  Tensor<T> m(n, n);
  std::vector<std::size_t> deg(n, 0);
  for (const auto& e : edges) {
    m(e.a, e.b) = T(1);
    m(e.b, e.a) = T(1);
    ++deg[e.a];
    ++deg[e.b];
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (deg[i] == 0) continue;
    for (auto& v : m.row(i)) v /= static_cast<T>(deg[i]);
  }
  return m;
}

// Attention support: neighbours, plus self when include_self is set. An
// isolated node always attends to itself so no row is empty.
inline Mask attention_mask(const scene::EdgeSet& edges, std::size_t n, bool include_self) {
  Mask m(n, n, false);
  std::vector<bool> has_neighbor(n, false);
  for (const auto& e : edges) {
    m.set(e.a, e.b, true);
    m.set(e.b, e.a, true);
    has_neighbor[e.a] = has_neighbor[e.b] = true;
  }
  for (std::size_t i = 0; i < n; ++i)
    if (include_self || !has_neighbor[i]) m.set(i, i, true);
  return m;
}

/// Per-graph constant operands, computed once per graph.
template <Real T>
struct PreparedGraph {
  Tensor<T> features;  // n x C one-hot
  Tensor<T> gcn_block;
  Tensor<T> mean_block;
  Mask attention_with_self;
  Mask attention_without_self;

  std::size_t num_nodes() const { return features.rows(); }

  static PreparedGraph from(const scene::SceneGraph& g) {
    const std::size_t n = g.num_nodes();
    return PreparedGraph{g.node_features<T>(), normalize_adjacency<T>(g.edges, n).matrix,
                         mean_aggregation_matrix<T>(g.edges, n), attention_mask(g.edges, n, true),
                         attention_mask(g.edges, n, false)};
  }
};

/// Block-diagonal composition of several graphs. Node rows of graph g occupy
/// ranges[g]; no operator ever mixes rows across ranges.
template <Real T>
struct GraphBatch {
  Tensor<T> features;
  std::shared_ptr<std::vector<RowRange>> ranges = std::make_shared<std::vector<RowRange>>();
  std::shared_ptr<std::vector<Tensor<T>>> gcn_blocks = std::make_shared<std::vector<Tensor<T>>>();
  std::shared_ptr<std::vector<Tensor<T>>> mean_blocks =
      std::make_shared<std::vector<Tensor<T>>>();
  std::vector<const Mask*> masks_with_self;
  std::vector<const Mask*> masks_without_self;

  std::size_t num_graphs() const { return ranges->size(); }

  // The prepared graphs must outlive the batch (masks are borrowed).
  static GraphBatch from(std::span<const PreparedGraph<T>* const> graphs) {
    if (graphs.empty()) throw ContractError("GraphBatch: no graphs");
    GraphBatch b;
    std::size_t rows = 0;
    const std::size_t c = graphs[0]->features.cols();
    for (const auto* g : graphs) {
      if (g->num_nodes() == 0) throw ContractError("GraphBatch: graph with no nodes");
      if (g->features.cols() != c) throw DimensionError("GraphBatch: feature width mismatch");
      b.ranges->push_back({rows, g->num_nodes()});
      rows += g->num_nodes();
    }
    b.features = Tensor<T>(rows, c);
    for (std::size_t i = 0; i < graphs.size(); ++i) {
      const auto* g = graphs[i];
      auto src = g->features.values();
      std::copy(src.begin(), src.end(), b.features.values().begin() + (*b.ranges)[i].begin * c);
      b.gcn_blocks->push_back(g->gcn_block);
      b.mean_blocks->push_back(g->mean_block);
      b.masks_with_self.push_back(&g->attention_with_self);
      b.masks_without_self.push_back(&g->attention_without_self);
    }
    return b;
  }

  static GraphBatch single(const PreparedGraph<T>& g) {
    const PreparedGraph<T>* one[] = {&g};
    return from(std::span<const PreparedGraph<T>* const>(one, 1));
  }
};

}  // namespace tsg::gnn
