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

#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

#include "tsg/core/error.hpp"

namespace tsg::scene {

using ClassId = std::uint16_t;

/// H x W raster of class indices in [0, num_classes).
class LabelMap {
 public:
  LabelMap() = default;

  LabelMap(std::uint32_t height, std::uint32_t width, std::uint32_t num_classes,
           ClassId fill = 0)
      : LabelMap(height, width, num_classes,
                 std::vector<ClassId>(static_cast<std::size_t>(height) * width, fill)) {}

  LabelMap(std::uint32_t height, std::uint32_t width, std::uint32_t num_classes,
           std::vector<ClassId> pixels)
      : height_(height), width_(width), num_classes_(num_classes), pixels_(std::move(pixels)) {
    if (height == 0 || width == 0) {
      throw ContractError(detail::concat("label map must be non-empty, got ", height, "x", width));
    }
    if (num_classes == 0 || num_classes > 65536) {
      throw ContractError(detail::concat("num_classes must lie in [1, 65536], got ", num_classes));
    }
    if (pixels_.size() != static_cast<std::size_t>(height) * width) {
      throw ContractError("label map pixel count does not match its dimensions");
    }
    for (std::size_t i = 0; i < pixels_.size(); ++i) {
      if (pixels_[i] >= num_classes_) {
        throw DataError(detail::concat("pixel (", i / width_, ",", i % width_, ") has class ",
                                       pixels_[i], " >= ", num_classes_));
      }
    }
  }

  // Row-list literal used mostly in tests.
  static LabelMap from_rows(std::initializer_list<std::initializer_list<int>> rows,
                            std::uint32_t num_classes) {
    std::vector<ClassId> px;
    const auto h = static_cast<std::uint32_t>(rows.size());
    const auto w = h ? static_cast<std::uint32_t>(rows.begin()->size()) : 0u;
    for (const auto& r : rows) {
      if (r.size() != w) throw ContractError("ragged label map literal");
      for (int v : r) px.push_back(static_cast<ClassId>(v));
    }
    return LabelMap(h, w, num_classes, std::move(px));
  }

  std::uint32_t height() const { return height_; }
  std::uint32_t width() const { return width_; }
  std::uint32_t num_classes() const { return num_classes_; }
  std::size_t size() const { return pixels_.size(); }
  bool empty() const { return pixels_.empty(); }

  ClassId operator()(std::uint32_t y, std::uint32_t x) const {
    return pixels_[static_cast<std::size_t>(y) * width_ + x];
  }
  std::span<const ClassId> pixels() const { return pixels_; }

  friend bool operator==(const LabelMap&, const LabelMap&) = default;

 private:
  std::uint32_t height_ = 0;
  std::uint32_t width_ = 0;
  std::uint32_t num_classes_ = 0;
  std::vector<ClassId> pixels_;
};

}  // namespace tsg::scene
