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

#include <vector>

#include "tsg/core/random.hpp"
#include "tsg/scene/label_map.hpp"

namespace tsg::testing {

// Random map up to max_side x max_side. Alternates between per-pixel noise
// (many tiny regions) and stacked rectangles (few large regions).
inline scene::LabelMap random_label_map(Rng& rng, std::uint32_t max_side,
                                        std::uint32_t classes) {
  const auto h = static_cast<std::uint32_t>(rng.between(1, max_side));
  const auto w = static_cast<std::uint32_t>(rng.between(1, max_side));
  std::vector<scene::ClassId> px(static_cast<std::size_t>(h) * w);
  const auto style = rng.below(3);
  if (style == 0) {
    for (auto& v : px) v = static_cast<scene::ClassId>(rng.below(classes));
  } else {
    const auto fill = static_cast<scene::ClassId>(rng.below(classes));
    for (auto& v : px) v = fill;
    const auto shapes = rng.between(1, style == 1 ? 4 : 12);
    for (std::int64_t s = 0; s < shapes; ++s) {
      const auto y0 = rng.below(h), x0 = rng.below(w);
      const auto y1 = y0 + rng.below(h - y0) + 1, x1 = x0 + rng.below(w - x0) + 1;
      const auto c = static_cast<scene::ClassId>(rng.below(classes));
      for (auto y = y0; y < y1; ++y)
        for (auto x = x0; x < x1; ++x) px[y * w + x] = c;
    }
  }
  return scene::LabelMap(h, w, classes, std::move(px));
}

}  // namespace tsg::testing
