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

#include <numeric>
#include <vector>

#include "tsg/core/random.hpp"
#include "tsg/core/tensor.hpp"
#include "tsg/scene/extract.hpp"

namespace tsg::testing {

inline scene::SceneGraph random_scene_graph(Rng& rng, std::size_t min_nodes,
                                            std::size_t max_nodes, std::uint32_t classes,
                                            double edge_prob = 0.4) {
  scene::SceneGraph g;
  g.num_classes = classes;
  const auto n = static_cast<std::size_t>(
      rng.between(static_cast<std::int64_t>(min_nodes), static_cast<std::int64_t>(max_nodes)));
  for (std::size_t i = 0; i < n; ++i) {
    g.nodes.push_back({static_cast<std::uint32_t>(i),
                       static_cast<scene::ClassId>(rng.below(classes)), 1});
  }
  for (std::uint32_t a = 0; a < n; ++a)
    for (std::uint32_t b = a + 1; b < n; ++b)
      if (rng.bernoulli(edge_prob)) g.edges.push_back({a, b});
  return g;
}

// Random permutation of 0..n-1; perm[old] = new.
inline std::vector<std::uint32_t> random_permutation(Rng& rng, std::size_t n) {
  std::vector<std::uint32_t> p(n);
  std::iota(p.begin(), p.end(), 0u);
  rng.shuffle(p);
  return p;
}

inline scene::SceneGraph permute_graph(const scene::SceneGraph& g,
                                       const std::vector<std::uint32_t>& perm) {
  scene::SceneGraph out;
  out.num_classes = g.num_classes;
  out.nodes.resize(g.nodes.size());
  for (const auto& node : g.nodes) {
    out.nodes[perm[node.id]] = {perm[node.id], node.class_id, node.pixel_count};
  }
  for (const auto& e : g.edges) out.edges.push_back(scene::make_edge(perm[e.a], perm[e.b]));
  std::sort(out.edges.begin(), out.edges.end());
  return out;
}

// Rows of t moved so that row i lands at perm[i].
template <Real T>
Tensor<T> permute_rows(const Tensor<T>& t, const std::vector<std::uint32_t>& perm) {
  Tensor<T> out(t.rows(), t.cols());
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) out(perm[i], j) = t(i, j);
  return out;
}

}  // namespace tsg::testing
