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

// Graph layers over a GraphBatch. Node features are rows; every layer uses
// the row-vector convention H' = act(M H W [+ b]).

#pragma once

#include <optional>
#include <type_traits>
#include <vector>

#include "tsg/core/ops.hpp"
#include "tsg/core/tape.hpp"
#include "tsg/gnn/graph_batch.hpp"

namespace tsg::gnn {

namespace internal {

template <Real T>
Var<T> maybe_bias(Var<T> x, std::optional<Var<T>> bias) {
  return bias ? add_row(x, *bias) : x;
}

template <Real T>
void require_rows(Var<T> h, const GraphBatch<T>& batch, const char* op) {
  const auto& last = batch.ranges->back();
  if (h.rows() != last.begin + last.count) {
    throw DimensionError(detail::concat(op, ": ", h.rows(), " node rows for a batch of ",
                                        last.begin + last.count));
  }
}

}  // namespace internal

/// act(Â H W + b) with Â the symmetric normalized adjacency of each graph.
template <Real T>
Var<T> gcn_layer(Var<T> h, const GraphBatch<T>& batch, Var<T> w, Activation act,
                 std::type_identity_t<std::optional<Var<T>>> bias = std::nullopt) {
  internal::require_rows(h, batch, "gcn_layer");
  auto propagated = block_matmul<T>(batch.gcn_blocks, batch.ranges, h);
  return activation(internal::maybe_bias(matmul(propagated, w), bias), act);
}

/// act([h_v || mean_{u in N(v)} h_u] W + b). Isolated nodes aggregate zeros.
template <Real T>
Var<T> sage_layer(Var<T> h, const GraphBatch<T>& batch, Var<T> w, Activation act,
                  std::type_identity_t<std::optional<Var<T>>> bias = std::nullopt) {
  internal::require_rows(h, batch, "sage_layer");
  if (w.rows() != 2 * h.cols()) {
    throw DimensionError(detail::concat("sage_layer: W has ", w.rows(), " rows, expected ",
                                        2 * h.cols()));
  }
  auto neigh = block_matmul<T>(batch.mean_blocks, batch.ranges, h);
  return activation(internal::maybe_bias(matmul(concat_cols({h, neigh}), w), bias), act);
}

struct GatOptions {
  double slope = 0.2;
  bool include_self = true;
};

/// Single-head graph attention. `a` is a (2*out) x 1 column; the score of
/// edge i->j is leaky(a1 . z_i + a2 . z_j) with z = H W. When `attention` is
/// given it receives each graph's coefficient matrix.
template <Real T>
Var<T> gat_layer(Var<T> h, const GraphBatch<T>& batch, Var<T> w, Var<T> a, Activation act,
                 GatOptions opts = {},
                 std::type_identity_t<std::optional<Var<T>>> bias = std::nullopt,
                 std::vector<Tensor<T>>* attention = nullptr) {
  internal::require_rows(h, batch, "gat_layer");
  auto z = matmul(h, w);
  const std::size_t d = z.cols();
  if (a.rows() != 2 * d || a.cols() != 1) {
    throw DimensionError(detail::concat("gat_layer: attention vector is ", to_string(a.shape()),
                                        ", expected ", 2 * d, "x1"));
  }
  const auto leaky = Activation::leaky_relu(opts.slope);
  auto a_src = slice_rows(a, 0, d);
  auto a_dst = slice_rows(a, d, d);
  const auto& masks = opts.include_self ? batch.masks_with_self : batch.masks_without_self;
  std::vector<Var<T>> outs;
  outs.reserve(batch.num_graphs());
  if (attention) attention->clear();
  for (std::size_t g = 0; g < batch.num_graphs(); ++g) {
    const auto [b, n] = (*batch.ranges)[g];
    auto zg = slice_rows(z, b, n);
    auto scores = activation(outer_sum(matmul(zg, a_src), matmul(zg, a_dst)), leaky);
    auto alpha = rowwise_softmax(scores, masks[g]);
    if (attention) attention->push_back(alpha.value());
    outs.push_back(matmul(alpha, zg));
  }
  auto out = outs.size() == 1 ? outs[0] : concat_rows<T>(outs);
  return activation(internal::maybe_bias(out, bias), act);
}

/// Column-wise sum, mean or max over each graph's node rows.
template <Real T>
Var<T> readout(Var<T> h, const GraphBatch<T>& batch, Reduction mode) {
  internal::require_rows(h, batch, "readout");
  return segment_reduce(h, std::span<const RowRange>(*batch.ranges), mode);
}

}  // namespace tsg::gnn
