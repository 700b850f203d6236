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

// Scene graph extraction from a semantic label map.
//
// Regions become nodes; two regions are joined by an edge when any pixel of
// one touches a pixel of the other. Region ids follow the raster order of
// each region's first pixel, so the same map always yields the same graph.

#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "tsg/core/error.hpp"
#include "tsg/core/tensor.hpp"
#include "tsg/scene/label_map.hpp"

namespace tsg::scene {

enum class NodeMode { component, class_level };

struct ExtractionOptions {
  int connectivity = 4;  // 4 or 8
  NodeMode node_mode = NodeMode::component;
  std::uint32_t min_region_pixels = 0;

  void validate() const {
    if (connectivity != 4 && connectivity != 8) {
      throw ContractError(detail::concat("connectivity must be 4 or 8, got ", connectivity));
    }
  }
};

struct Region {
  std::uint32_t id = 0;
  ClassId class_id = 0;
  std::uint32_t pixel_count = 0;
  std::uint32_t first_pixel = 0;  // raster index
  friend bool operator==(const Region&, const Region&) = default;
};

inline constexpr std::int32_t kDropped = -1;

/// Regions plus per-pixel membership (region id, or kDropped for pixels of
/// regions removed by min_region_pixels).
struct RegionLabeling {
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::vector<Region> regions;
  std::vector<std::int32_t> membership;

  std::int32_t at(std::uint32_t y, std::uint32_t x) const {
    return membership[static_cast<std::size_t>(y) * width + x];
  }
};

struct Edge {
  std::uint32_t a = 0;
  std::uint32_t b = 0;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

// Sorted by (a, b) with a < b and no duplicates.
using EdgeSet = std::vector<Edge>;

inline Edge make_edge(std::uint32_t u, std::uint32_t v) {
  return u < v ? Edge{u, v} : Edge{v, u};
}

namespace internal {

class DisjointSet {
 public:
  std::uint32_t make() {
    parent_.push_back(static_cast<std::uint32_t>(parent_.size()));
    return parent_.back();
  }
  std::uint32_t find(std::uint32_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  void unite(std::uint32_t a, std::uint32_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (a < b) parent_[b] = a;
    else parent_[a] = b;
  }

 private:
  std::vector<std::uint32_t> parent_;
};

// Two-pass connected-component labeling. Returns a provisional root per pixel.
inline std::vector<std::uint32_t> label_components(const LabelMap& map, int connectivity) {
  const std::uint32_t h = map.height(), w = map.width();
  std::vector<std::uint32_t> prov(map.size());
  DisjointSet sets;
  auto px = map.pixels();
  for (std::uint32_t y = 0; y < h; ++y) {
    for (std::uint32_t x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      const ClassId c = px[i];
      std::int64_t label = -1;
      auto consider = [&](std::size_t j) {
        if (px[j] != c) return;
        if (label < 0) label = prov[j];
        else sets.unite(static_cast<std::uint32_t>(label), prov[j]);
      };
      if (x > 0) consider(i - 1);
      if (y > 0) {
        consider(i - w);
        if (connectivity == 8) {
          if (x > 0) consider(i - w - 1);
          if (x + 1 < w) consider(i - w + 1);
        }
      }
      prov[i] = label < 0 ? sets.make() : static_cast<std::uint32_t>(label);
    }
  }
  for (auto& p : prov) p = sets.find(p);
  return prov;
}

}  // namespace internal

inline RegionLabeling extract_regions(const LabelMap& map, const ExtractionOptions& opts = {}) {
  opts.validate();
  if (map.empty()) throw ContractError("extract_regions: empty label map");
  RegionLabeling out;
  out.height = map.height();
  out.width = map.width();
  out.membership.assign(map.size(), kDropped);

  std::vector<std::uint32_t> key;  // per-pixel grouping key
  if (opts.node_mode == NodeMode::component) {
    key = internal::label_components(map, opts.connectivity);
  } else {
    auto px = map.pixels();
    key.assign(px.begin(), px.end());
  }

  // Number groups by first appearance in raster order.
  std::unordered_map<std::uint32_t, std::uint32_t> group_to_region;
  std::vector<Region> all;
  std::vector<std::uint32_t> region_of(map.size());
  for (std::size_t i = 0; i < map.size(); ++i) {
    auto [it, inserted] =
        group_to_region.try_emplace(key[i], static_cast<std::uint32_t>(all.size()));
    if (inserted) {
      all.push_back(Region{it->second, map.pixels()[i], 0, static_cast<std::uint32_t>(i)});
    }
    ++all[it->second].pixel_count;
    region_of[i] = it->second;
  }

  std::vector<std::int32_t> remap(all.size(), kDropped);
  for (const auto& r : all) {
    if (r.pixel_count < opts.min_region_pixels) continue;
    remap[r.id] = static_cast<std::int32_t>(out.regions.size());
    Region kept = r;
    kept.id = static_cast<std::uint32_t>(out.regions.size());
    out.regions.push_back(kept);
  }
  for (std::size_t i = 0; i < map.size(); ++i) out.membership[i] = remap[region_of[i]];
  return out;
}

/// Boundary scan: each row for horizontal neighbours, each column for
/// vertical neighbours, and with 8-connectivity both diagonals.
inline EdgeSet extract_adjacency(const LabelMap& map, const RegionLabeling& regions,
                                 const ExtractionOptions& opts = {}) {
  opts.validate();
  if (regions.height != map.height() || regions.width != map.width()) {
    throw ContractError("extract_adjacency: regions come from a different map");
  }
  const std::uint32_t h = map.height(), w = map.width();
  const std::size_t n = regions.regions.size();
  // Seen pairs: a dense bitmap for typical region counts, a hash set for
  // speckled maps with many regions.
  const bool dense = n <= 2048;
  std::vector<std::uint8_t> seen(dense ? n * n : 0, 0);
  std::unordered_set<std::uint64_t> seen_sparse;
  EdgeSet edges;
  auto link = [&](std::int32_t u, std::int32_t v) {
    if (u == v || u == kDropped || v == kDropped) return;
    const Edge e = make_edge(static_cast<std::uint32_t>(u), static_cast<std::uint32_t>(v));
    const std::uint64_t k = static_cast<std::uint64_t>(e.a) * n + e.b;
    const bool fresh = dense ? !std::exchange(seen[k], std::uint8_t{1})
                             : seen_sparse.insert(k).second;
    if (fresh) edges.push_back(e);
  };
  for (std::uint32_t y = 0; y < h; ++y)
    for (std::uint32_t x = 0; x + 1 < w; ++x) link(regions.at(y, x), regions.at(y, x + 1));
  for (std::uint32_t x = 0; x < w; ++x)
    for (std::uint32_t y = 0; y + 1 < h; ++y) link(regions.at(y, x), regions.at(y + 1, x));
  if (opts.connectivity == 8) {
    for (std::uint32_t y = 0; y + 1 < h; ++y) {
      for (std::uint32_t x = 0; x + 1 < w; ++x) {
        link(regions.at(y, x), regions.at(y + 1, x + 1));
        link(regions.at(y, x + 1), regions.at(y + 1, x));
      }
    }
  }
  std::sort(edges.begin(), edges.end());
  return edges;
}

struct SceneNode {
  std::uint32_t id = 0;
  ClassId class_id = 0;
  std::uint32_t pixel_count = 0;
  friend bool operator==(const SceneNode&, const SceneNode&) = default;
};

/// Nodes with one-hot class features plus an undirected edge set.
struct SceneGraph {
  std::uint32_t num_classes = 0;
  std::vector<SceneNode> nodes;
  EdgeSet edges;

  std::size_t num_nodes() const { return nodes.size(); }

  // n x num_classes one-hot feature matrix.
  template <Real T>
  Tensor<T> node_features() const {
    Tensor<T> x(nodes.size(), num_classes);
    for (const auto& node : nodes) x(node.id, node.class_id) = T(1);
    return x;
  }

  // Neighbour lists (self excluded), ascending.
  std::vector<std::vector<std::uint32_t>> neighbors() const {
    std::vector<std::vector<std::uint32_t>> out(nodes.size());
    for (const auto& e : edges) {
      out[e.a].push_back(e.b);
      out[e.b].push_back(e.a);
    }
    for (auto& l : out) std::sort(l.begin(), l.end());
    return out;
  }

  bool has_class_edge(ClassId u, ClassId v) const {
    for (const auto& e : edges) {
      const ClassId ca = nodes[e.a].class_id, cb = nodes[e.b].class_id;
      if ((ca == u && cb == v) || (ca == v && cb == u)) return true;
    }
    return false;
  }

  // Throws ContractError when an invariant is broken.
  void validate() const {
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (nodes[i].id != i) throw ContractError("scene graph node ids must be 0..n-1 in order");
      if (nodes[i].class_id >= num_classes) {
        throw ContractError(detail::concat("node ", i, " class ", nodes[i].class_id,
                                           " >= num_classes ", num_classes));
      }
    }
    for (std::size_t i = 0; i < edges.size(); ++i) {
      const auto& e = edges[i];
      if (e.a == e.b) throw ContractError(detail::concat("self edge on node ", e.a));
      if (e.a > e.b) throw ContractError("edge endpoints must be ordered a < b");
      if (e.b >= nodes.size()) throw ContractError("edge references a missing node");
      if (i > 0 && !(edges[i - 1] < e)) throw ContractError("edges must be sorted and unique");
    }
  }

  friend bool operator==(const SceneGraph&, const SceneGraph&) = default;
};

inline SceneGraph build_scene_graph(const LabelMap& map, const ExtractionOptions& opts = {}) {
  if (map.empty()) throw ContractError("build_scene_graph: empty label map");
  const auto regions = extract_regions(map, opts);
  if (regions.regions.empty()) {
    throw DataError("build_scene_graph: no region survives the min_region_pixels filter");
  }
  SceneGraph g;
  g.num_classes = map.num_classes();
  g.nodes.reserve(regions.regions.size());
  for (const auto& r : regions.regions) g.nodes.push_back({r.id, r.class_id, r.pixel_count});
  g.edges = extract_adjacency(map, regions, opts);
  return g;
}

}  // namespace tsg::scene
