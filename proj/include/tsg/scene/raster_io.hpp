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

// Label map file formats:
//   PNG   8- or 16-bit single channel (palette indices accepted as-is)
//   PGM   binary P5, maxval < 65536
//   LMAP  "LMAP" | u32 H | u32 W | u32 C | H*W little-endian u16 indices

#pragma once

#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "tsg/core/error.hpp"
#include "tsg/core/tensor_io.hpp"
#include "tsg/io/png.hpp"
#include "tsg/scene/label_map.hpp"

namespace tsg::scene {

enum class RasterFormat { png, pgm, lmap };

namespace internal {

inline std::uint32_t infer_classes(const std::vector<ClassId>& px) {
  ClassId mx = 0;
  for (auto v : px) mx = std::max(mx, v);
  return static_cast<std::uint32_t>(mx) + 1;
}

inline LabelMap make_checked(const std::filesystem::path& path, std::uint32_t h, std::uint32_t w,
                             std::optional<std::uint32_t> classes, std::vector<ClassId> px) {
  const std::uint32_t c = classes ? *classes : infer_classes(px);
  try {
    return LabelMap(h, w, c, std::move(px));
  } catch (const Error& e) {
    throw DataError(detail::concat(path.string(), ": ", e.what()));
  }
}

inline std::string read_pgm_token(std::istream& is) {
  std::string tok;
  int ch;
  while ((ch = is.get()) != EOF) {
    if (ch == '#') {
      while ((ch = is.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  return tok;
}

inline LabelMap read_pgm(const std::filesystem::path& path,
                         std::optional<std::uint32_t> classes) {
  std::ifstream is(path, std::ios::binary);
  if (read_pgm_token(is) != "P5") throw DataError(path.string() + ": not a binary PGM (P5)");
  std::uint32_t w = 0, h = 0, maxval = 0;
  try {
    w = static_cast<std::uint32_t>(std::stoul(read_pgm_token(is)));
    h = static_cast<std::uint32_t>(std::stoul(read_pgm_token(is)));
    maxval = static_cast<std::uint32_t>(std::stoul(read_pgm_token(is)));
  } catch (const std::exception&) {
    throw DataError(path.string() + ": malformed PGM header");
  }
  if (maxval == 0 || maxval > 65535) throw DataError(path.string() + ": bad PGM maxval");
  std::vector<ClassId> px(static_cast<std::size_t>(w) * h);
  for (auto& v : px) {
    if (maxval < 256) {
      v = le::get_u8<DataError>(is, "PGM pixels");
    } else {
      const std::uint16_t hi = le::get_u8<DataError>(is, "PGM pixels");
      const std::uint16_t lo = le::get_u8<DataError>(is, "PGM pixels");
      v = static_cast<ClassId>((hi << 8) | lo);
    }
  }
  return make_checked(path, h, w, classes, std::move(px));
}

inline LabelMap read_lmap(const std::filesystem::path& path,
                          std::optional<std::uint32_t> classes) {
  std::ifstream is(path, std::ios::binary);
  char magic[4];
  le::read_exact<DataError>(is, magic, 4, "LMAP magic");
  if (std::string(magic, 4) != "LMAP") throw DataError(path.string() + ": bad LMAP magic");
  const auto h = le::get_u32<DataError>(is, "LMAP height");
  const auto w = le::get_u32<DataError>(is, "LMAP width");
  const auto c = le::get_u32<DataError>(is, "LMAP classes");
  if (classes && *classes != c) {
    throw DataError(detail::concat(path.string(), ": file declares ", c,
                                   " classes but ", *classes, " were expected"));
  }
  std::vector<ClassId> px(static_cast<std::size_t>(w) * h);
  for (auto& v : px) v = le::get_u16<DataError>(is, "LMAP pixels");
  return make_checked(path, h, w, c, std::move(px));
}

}  // namespace internal

inline RasterFormat sniff_raster_format(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError(detail::concat("cannot open ", path.string()));
  char head[4] = {0, 0, 0, 0};
  is.read(head, 4);
  const std::string h(head, static_cast<std::size_t>(is.gcount()));
  if (h.size() >= 4 && static_cast<unsigned char>(h[0]) == 0x89 && h.substr(1, 3) == "PNG") {
    return RasterFormat::png;
  }
  if (h.size() >= 2 && h[0] == 'P' && h[1] == '5') return RasterFormat::pgm;
  if (h == "LMAP") return RasterFormat::lmap;
  throw DataError(detail::concat(path.string(), ": unrecognized label map format"));
}

/// Loads a label map in any supported format. When num_classes is empty it
/// is taken from the file (LMAP) or inferred as max index + 1.
inline LabelMap read_label_map(const std::filesystem::path& path,
                               std::optional<std::uint32_t> num_classes = std::nullopt) {
  switch (sniff_raster_format(path)) {
    case RasterFormat::pgm:
      return internal::read_pgm(path, num_classes);
    case RasterFormat::lmap:
      return internal::read_lmap(path, num_classes);
    case RasterFormat::png: {
      auto raster = io::read_png(path, /*expand_palette=*/false);
      if (raster.channels != 1) {
        throw DataError(detail::concat(path.string(), ": label PNG must be single channel, has ",
                                       raster.channels));
      }
      std::vector<ClassId> px(raster.samples.begin(), raster.samples.end());
      return internal::make_checked(path, raster.height, raster.width, num_classes,
                                    std::move(px));
    }
  }
  throw DataError("unreachable");
}

inline void write_label_map(const std::filesystem::path& path, const LabelMap& map,
                            RasterFormat format) {
  switch (format) {
    case RasterFormat::png: {
      const int depth = map.num_classes() <= 256 ? 8 : 16;
      std::vector<std::uint16_t> samples(map.pixels().begin(), map.pixels().end());
      io::write_png(path, map.width(), map.height(), 1, depth, samples);
      return;
    }
    case RasterFormat::pgm: {
      std::ofstream os(path, std::ios::binary);
      const std::uint32_t maxval = std::max<std::uint32_t>(map.num_classes() - 1, 1);
      os << "P5\n" << map.width() << " " << map.height() << "\n" << maxval << "\n";
      for (auto v : map.pixels()) {
        if (maxval < 256) {
          os.put(static_cast<char>(v));
        } else {
          os.put(static_cast<char>(v >> 8));
          os.put(static_cast<char>(v & 0xff));
        }
      }
      if (!os) throw DataError(detail::concat("failed writing ", path.string()));
      return;
    }
    case RasterFormat::lmap: {
      std::ofstream os(path, std::ios::binary);
      os.write("LMAP", 4);
      le::put_u32(os, map.height());
      le::put_u32(os, map.width());
      le::put_u32(os, map.num_classes());
      for (auto v : map.pixels()) le::put_u16(os, v);
      if (!os) throw DataError(detail::concat("failed writing ", path.string()));
      return;
    }
  }
}

}  // namespace tsg::scene
