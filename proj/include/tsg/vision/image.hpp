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

// Images are stored interleaved (HWC) as 32-bit floats in [0, 1].
//
// Raw format:
//   IMGT  "IMGT" | u32 H | u32 W | u32 C | H*W*C little-endian f32 values

#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "tsg/core/error.hpp"
#include "tsg/core/tensor.hpp"
#include "tsg/core/tensor_io.hpp"
#include "tsg/io/png.hpp"

namespace tsg::vision {

class ImageTensor {
 public:
  ImageTensor() = default;

  ImageTensor(std::uint32_t height, std::uint32_t width, std::uint32_t channels, float fill = 0.0f)
      : ImageTensor(height, width, channels,
                    std::vector<float>(static_cast<std::size_t>(height) * width * channels, fill)) {}

  ImageTensor(std::uint32_t height, std::uint32_t width, std::uint32_t channels,
              std::vector<float> values)
      : height_(height), width_(width), channels_(channels), values_(std::move(values)) {
    if (height == 0 || width == 0) throw ContractError("ImageTensor: dimensions must be positive");
    if (channels != 1 && channels != 3) {
      throw ContractError(detail::concat("ImageTensor: channels must be 1 or 3, got ", channels));
    }
    if (values_.size() != static_cast<std::size_t>(height) * width * channels) {
      throw ContractError(detail::concat("ImageTensor: ", values_.size(), " values for ", height,
                                         "x", width, "x", channels));
    }
    for (std::size_t i = 0; i < values_.size(); ++i) {
      const float v = values_[i];
      if (!(v >= 0.0f && v <= 1.0f)) {
        throw DataError(detail::concat("ImageTensor: value ", v, " at index ", i,
                                       " is outside [0,1]"));
      }
    }
  }

  std::uint32_t height() const { return height_; }
  std::uint32_t width() const { return width_; }
  std::uint32_t channels() const { return channels_; }
  bool empty() const { return values_.empty(); }

  float operator()(std::uint32_t y, std::uint32_t x, std::uint32_t c) const {
    return values_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }
  std::span<const float> values() const { return values_; }

  friend bool operator==(const ImageTensor&, const ImageTensor&) = default;

 private:
  std::uint32_t height_ = 0;
  std::uint32_t width_ = 0;
  std::uint32_t channels_ = 0;
  std::vector<float> values_;
};

/// Splits an image into non-overlapping P x P patches in raster order. Each
/// patch row is channel-major: index c*P*P + py*P + px.
template <Real T>
Tensor<T> patchify(const ImageTensor& img, std::uint32_t patch) {
  if (img.empty()) throw ContractError("patchify: empty image");
  if (patch == 0) throw ContractError("patchify: patch size must be positive");
  if (img.height() % patch != 0 || img.width() % patch != 0) {
    throw DimensionError(detail::concat("patchify: ", img.height(), "x", img.width(),
                                        " image is not divisible by patch size ", patch));
  }
  const std::uint32_t gh = img.height() / patch, gw = img.width() / patch;
  const std::uint32_t c = img.channels();
  const std::size_t pp = static_cast<std::size_t>(patch) * patch;
  Tensor<T> out(static_cast<std::size_t>(gh) * gw, pp * c);
  for (std::uint32_t by = 0; by < gh; ++by)
    for (std::uint32_t bx = 0; bx < gw; ++bx) {
      auto row = out.row(static_cast<std::size_t>(by) * gw + bx);
      for (std::uint32_t ch = 0; ch < c; ++ch)
        for (std::uint32_t py = 0; py < patch; ++py)
          for (std::uint32_t px = 0; px < patch; ++px)
            row[ch * pp + py * patch + px] =
                static_cast<T>(img(by * patch + py, bx * patch + px, ch));
    }
  return out;
}

inline void write_image_raw(const std::filesystem::path& path, const ImageTensor& img) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError(detail::concat("cannot open ", path.string(), " for writing"));
  os.write("IMGT", 4);
  le::put_u32(os, img.height());
  le::put_u32(os, img.width());
  le::put_u32(os, img.channels());
  for (float v : img.values()) le::put_f32(os, v);
  if (!os) throw DataError(detail::concat("failed writing ", path.string()));
}

// 8-bit PNG; values are rounded to the nearest level.
inline void write_image_png(const std::filesystem::path& path, const ImageTensor& img) {
  std::vector<std::uint16_t> samples(img.values().size());
  for (std::size_t i = 0; i < samples.size(); ++i)
    samples[i] = static_cast<std::uint16_t>(std::lround(img.values()[i] * 255.0f));
  io::write_png(path, img.width(), img.height(), static_cast<int>(img.channels()), 8, samples);
}

inline ImageTensor read_image(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError(detail::concat("cannot open ", path.string()));
  char head[4] = {0, 0, 0, 0};
  is.read(head, 4);
  if (is.gcount() == 4 && std::string(head, 4) == "IMGT") {
    try {
      const auto h = le::get_u32<DataError>(is, "IMGT height");
      const auto w = le::get_u32<DataError>(is, "IMGT width");
      const auto c = le::get_u32<DataError>(is, "IMGT channels");
      if (h == 0 || w == 0 || (c != 1 && c != 3)) throw DataError("bad IMGT header");
      std::vector<float> values(static_cast<std::size_t>(h) * w * c);
      for (auto& v : values) v = le::get_f32<DataError>(is, "IMGT values");
      return ImageTensor(h, w, c, std::move(values));
    } catch (const Error& e) {
      throw DataError(detail::concat(path.string(), ": ", e.what()));
    }
  }
  is.close();
  auto raster = io::read_png(path, /*expand_palette=*/true);
  if (raster.channels != 1 && raster.channels != 3) {
    throw DataError(detail::concat(path.string(), ": image must be gray or RGB, has ",
                                   raster.channels, " channels"));
  }
  const float scale = raster.bit_depth == 16 ? 65535.0f : 255.0f;
  std::vector<float> values(raster.samples.size());
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = raster.samples[i] / scale;
  return ImageTensor(raster.height, raster.width, static_cast<std::uint32_t>(raster.channels),
                     std::move(values));
}

}  // namespace tsg::vision
