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

// Reference adjacency by exhaustive enumeration. Shares no code with
// extract.hpp beyond the value types: regions come from a BFS flood fill and
// every pixel visits every neighbour offset in both directions.

#pragma once

#include <array>
#include <deque>
#include <map>
#include <set>
#include <vector>

#include "tsg/scene/extract.hpp"
#include "tsg/scene/label_map.hpp"

namespace tsg::scene {

namespace internal {

inline std::vector<std::array<int, 2>> neighbor_offsets(int connectivity) {
  std::vector<std::array<int, 2>> offs = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}};
  if (connectivity == 8) {
    offs.insert(offs.end(), {{-1, -1}, {-1, 1}, {1, -1}, {1, 1}});
  }
  return offs;
}

// Flood-fill region ids (raster order of first pixel; -1 for dropped).
inline std::vector<int> flood_fill_regions(const LabelMap& map, const ExtractionOptions& opts) {
  const int h = static_cast<int>(map.height()), w = static_cast<int>(map.width());
  std::vector<int> group(map.size(), -1);
  std::vector<int> sizes;
  const auto offs = neighbor_offsets(opts.connectivity);
  if (opts.node_mode == NodeMode::class_level) {
    std::map<int, int> class_group;
    for (int i = 0; i < h * w; ++i) {
      const int c = map.pixels()[i];
      auto it = class_group.find(c);
      if (it == class_group.end()) {
        it = class_group.emplace(c, static_cast<int>(sizes.size())).first;
        sizes.push_back(0);
      }
      group[i] = it->second;
      ++sizes[it->second];
    }
  } else {
    for (int start = 0; start < h * w; ++start) {
      if (group[start] >= 0) continue;
      const int id = static_cast<int>(sizes.size());
      sizes.push_back(0);
      std::deque<int> queue{start};
      group[start] = id;
      while (!queue.empty()) {
        const int p = queue.front();
        queue.pop_front();
        ++sizes[id];
        const int y = p / w, x = p % w;
        for (const auto& [dy, dx] : offs) {
          const int ny = y + dy, nx = x + dx;
          if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
          const int q = ny * w + nx;
          if (group[q] >= 0 || map.pixels()[q] != map.pixels()[p]) continue;
          group[q] = id;
          queue.push_back(q);
        }
      }
    }
  }
  std::vector<int> renumber(sizes.size(), -1);
  int next = 0;
  for (std::size_t g = 0; g < sizes.size(); ++g) {
    if (sizes[g] >= static_cast<int>(opts.min_region_pixels)) renumber[g] = next++;
  }
  for (auto& g : group) g = renumber[g];
  return group;
}

}  // namespace internal

inline EdgeSet brute_force_adjacency_oracle(const LabelMap& map,
                                            const ExtractionOptions& opts = {}) {
  opts.validate();
  const auto group = internal::flood_fill_regions(map, opts);
  const int h = static_cast<int>(map.height()), w = static_cast<int>(map.width());
  std::set<Edge> found;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (const auto& [dy, dx] : internal::neighbor_offsets(opts.connectivity)) {
        const int ny = y + dy, nx = x + dx;
        if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
        const int u = group[y * w + x], v = group[ny * w + nx];
        if (u < 0 || v < 0 || u == v) continue;
        found.insert(make_edge(static_cast<std::uint32_t>(u), static_cast<std::uint32_t>(v)));
      }
    }
  }
  return EdgeSet(found.begin(), found.end());
}

// Region count from the flood fill; used to cross-check node counts.
inline std::size_t brute_force_region_count(const LabelMap& map,
                                            const ExtractionOptions& opts = {}) {
  const auto group = internal::flood_fill_regions(map, opts);
  int mx = -1;
  for (int g : group) mx = std::max(mx, g);
  return static_cast<std::size_t>(mx + 1);
}

}  // namespace tsg::scene
