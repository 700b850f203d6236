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

// Thin libpng wrapper. Samples are returned raw (no gamma handling), which
// is what class-index rasters need.

#pragma once

#include <png.h>

#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tsg/core/error.hpp"

namespace tsg::io {

struct PngRaster {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  int channels = 0;   // after palette expansion (if requested) and alpha strip
  int bit_depth = 0;  // 8 or 16
  bool palette = false;
  std::vector<std::uint16_t> samples;  // interleaved, row-major
};

namespace detail {

struct PngErrorSink {
  char message[256] = {0};
};

[[noreturn]] inline void png_error_cb(png_structp png, png_const_charp msg) {
  auto* sink = static_cast<PngErrorSink*>(png_get_error_ptr(png));
  if (sink) std::snprintf(sink->message, sizeof(sink->message), "%s", msg);
  std::longjmp(png_jmpbuf(png), 1);
}

inline void png_warning_cb(png_structp, png_const_charp) {}

class File {
 public:
  File(const std::filesystem::path& p, const char* mode) : fp_(std::fopen(p.c_str(), mode)) {}
  ~File() {
    if (fp_) std::fclose(fp_);
  }
  File(const File&) = delete;
  File& operator=(const File&) = delete;
  std::FILE* get() const { return fp_; }

 private:
  std::FILE* fp_;
};

}  // namespace detail

/// Reads a PNG. Palette images keep their indices unless expand_palette is
/// set; alpha channels are dropped; bit depths below 8 are unpacked to 8.
inline PngRaster read_png(const std::filesystem::path& path, bool expand_palette) {
  detail::File file(path, "rb");
  if (!file.get()) throw DataError(tsg::detail::concat("cannot open ", path.string()));
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw DataError(tsg::detail::concat(path.string(), ": not a PNG file"));
  }
  detail::PngErrorSink sink;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &sink, detail::png_error_cb,
                                           detail::png_warning_cb);
  if (!png) throw DataError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw DataError("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError(tsg::detail::concat(path.string(), ": PNG decode error: ", sink.message));
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  int transforms = PNG_TRANSFORM_PACKING | PNG_TRANSFORM_STRIP_ALPHA;
  if (expand_palette) transforms |= PNG_TRANSFORM_EXPAND;
  png_read_png(png, info, transforms, nullptr);

  // libpng owns the row buffers; copying happens after all decoding calls.
  PngRaster out;
  out.width = png_get_image_width(png, info);
  out.height = png_get_image_height(png, info);
  out.channels = png_get_channels(png, info);
  out.bit_depth = png_get_bit_depth(png, info);
  out.palette = png_get_color_type(png, info) == PNG_COLOR_TYPE_PALETTE;
  png_bytepp rows = png_get_rows(png, info);
  const std::size_t per_row = static_cast<std::size_t>(out.width) * out.channels;
  out.samples.resize(per_row * out.height);
  for (std::uint32_t y = 0; y < out.height; ++y) {
    const png_bytep r = rows[y];
    for (std::size_t i = 0; i < per_row; ++i) {
      out.samples[y * per_row + i] =
          out.bit_depth == 16 ? static_cast<std::uint16_t>((r[2 * i] << 8) | r[2 * i + 1])
                              : static_cast<std::uint16_t>(r[i]);
    }
  }
  png_destroy_read_struct(&png, &info, nullptr);
  if (out.bit_depth != 8 && out.bit_depth != 16) {
    throw DataError(tsg::detail::concat(path.string(), ": unsupported bit depth ",
                                        out.bit_depth));
  }
  return out;
}

/// Writes a gray (1 channel) or RGB (3 channel) PNG with 8- or 16-bit samples.
/// Output bytes depend only on the inputs.
inline void write_png(const std::filesystem::path& path, std::uint32_t width,
                      std::uint32_t height, int channels, int bit_depth,
                      std::span<const std::uint16_t> samples) {
  if (channels != 1 && channels != 3) throw DataError("write_png: channels must be 1 or 3");
  if (bit_depth != 8 && bit_depth != 16) throw DataError("write_png: bit depth must be 8 or 16");
  const std::size_t per_row = static_cast<std::size_t>(width) * channels;
  if (samples.size() != per_row * height) throw DataError("write_png: sample count mismatch");
  const std::size_t bytes_per_row = per_row * (bit_depth / 8);
  std::vector<unsigned char> buffer(bytes_per_row * height);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (bit_depth == 16) {
      buffer[2 * i] = static_cast<unsigned char>(samples[i] >> 8);
      buffer[2 * i + 1] = static_cast<unsigned char>(samples[i] & 0xff);
    } else {
      buffer[i] = static_cast<unsigned char>(samples[i]);
    }
  }
  std::vector<png_bytep> rows(height);
  for (std::uint32_t y = 0; y < height; ++y) rows[y] = buffer.data() + y * bytes_per_row;

  detail::File file(path, "wb");
  if (!file.get()) throw DataError(tsg::detail::concat("cannot create ", path.string()));
  detail::PngErrorSink sink;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &sink, detail::png_error_cb,
                                            detail::png_warning_cb);
  if (!png) throw DataError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw DataError("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError(tsg::detail::concat(path.string(), ": PNG encode error: ", sink.message));
  }
  png_init_io(png, file.get());
  png_set_compression_level(png, 6);
  png_set_IHDR(png, info, width, height, bit_depth,
               channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_rows(png, info, rows.data());
  png_write_png(png, info, PNG_TRANSFORM_IDENTITY, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace tsg::io
