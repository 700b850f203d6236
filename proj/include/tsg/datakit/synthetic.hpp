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

// Synthetic scenes. Class 0 is the canvas; each object is an axis-aligned
// rectangle or disc of a class in [1, C), painted in order so later shapes
// occlude earlier ones. Pixels get the class base color plus a per-image
// brightness offset and uniform noise, with no anti-aliasing.
//
// Two binary predicates drive the labels:
//   motif:      the extracted graph has an edge between classes motif_a and motif_b
//   brightness: the image mean lies in the upper half of [0, 1]
// image_pattern generalizes brightness to K equal bands of the mean. Samples
// are drawn so labels are balanced (sample i targets label i mod K) and so
// the image mean keeps `band_margin` away from every band boundary.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tsg/core/error.hpp"
#include "tsg/core/parallel.hpp"
#include "tsg/core/random.hpp"
#include "tsg/datakit/dataset.hpp"
#include "tsg/scene/extract.hpp"
#include "tsg/scene/raster_io.hpp"
#include "tsg/vision/image.hpp"

namespace tsg::datakit {

enum class LabelRule { motif, image_pattern, xor_rule };

inline std::string_view to_string(LabelRule r) {
  switch (r) {
    case LabelRule::motif: return "motif";
    case LabelRule::image_pattern: return "image_pattern";
    case LabelRule::xor_rule: return "xor";
  }
  return "?";
}

inline LabelRule parse_label_rule(std::string_view s) {
  if (s == "motif") return LabelRule::motif;
  if (s == "image_pattern") return LabelRule::image_pattern;
  if (s == "xor") return LabelRule::xor_rule;
  throw ConfigError(detail::concat("unknown label_rule '", s, "' (motif, image_pattern, xor)"));
}

struct SyntheticSpec {
  std::uint32_t height = 16;
  std::uint32_t width = 16;
  std::uint32_t channels = 1;
  std::uint32_t num_object_classes = 6;  // C, including the canvas class 0
  std::uint32_t num_scene_classes = 2;   // K
  std::uint32_t min_objects = 2;
  std::uint32_t max_objects = 5;
  double min_extent = 0.2;  // object size as a fraction of the canvas side
  double max_extent = 0.5;
  bool rectangles = true;
  bool discs = true;
  double noise = 0.1;
  double band_margin = 0.04;
  LabelRule label_rule = LabelRule::motif;
  std::uint32_t motif_a = 1;
  std::uint32_t motif_b = 2;
  int connectivity = 4;
  std::uint32_t num_train = 200;
  std::uint32_t num_test = 50;
  std::uint64_t seed = 1;
  std::uint32_t max_attempts = 2000;

  void validate() const {
    auto fail = [](auto&&... parts) { throw ConfigError(detail::concat("synthetic: ", parts...)); };
    if (height == 0 || width == 0) fail("canvas must be non-empty");
    if (channels != 1 && channels != 3) fail("channels must be 1 or 3");
    if (num_object_classes < 3 || num_object_classes > 256) fail("num_object_classes must lie in [3, 256]");
    if (num_scene_classes < 2) fail("num_scene_classes must be at least 2");
    if (min_objects == 0 || max_objects < min_objects) fail("objects per scene must be a range [min >= 1, max]");
    if (!(min_extent > 0.0) || max_extent < min_extent || max_extent > 1.0) {
      fail("extents must satisfy 0 < min_extent <= max_extent <= 1");
    }
    if (!rectangles && !discs) fail("no shape kind enabled");
    if (!(noise >= 0.0) || noise > 0.5) fail("noise must lie in [0, 0.5]");
    const double band = 1.0 / num_scene_classes;
    if (!(band_margin >= 0.0) || 2.0 * band_margin >= band) fail("band_margin too wide for ", num_scene_classes, " bands");
    if (label_rule != LabelRule::image_pattern) {
      if (num_scene_classes != 2) fail("label_rule '", to_string(label_rule), "' is binary, num_scene_classes must be 2");
      if (motif_a == 0 || motif_b == 0 || motif_a == motif_b || motif_a >= num_object_classes ||
          motif_b >= num_object_classes) {
        fail("motif classes must be distinct object classes in [1, C)");
      }
      if (max_objects < 2) fail("motif needs at least two objects per scene");
    }
    if (connectivity != 4 && connectivity != 8) fail("connectivity must be 4 or 8");
    if (num_train + num_test == 0) fail("no samples requested");
    if (max_attempts == 0) fail("max_attempts must be positive");
  }

  friend bool operator==(const SyntheticSpec&, const SyntheticSpec&) = default;
};

inline nlohmann::json spec_to_json(const SyntheticSpec& s) {
  return {{"height", s.height},
          {"width", s.width},
          {"channels", s.channels},
          {"num_object_classes", s.num_object_classes},
          {"num_scene_classes", s.num_scene_classes},
          {"min_objects", s.min_objects},
          {"max_objects", s.max_objects},
          {"min_extent", s.min_extent},
          {"max_extent", s.max_extent},
          {"rectangles", s.rectangles},
          {"discs", s.discs},
          {"noise", s.noise},
          {"band_margin", s.band_margin},
          {"label_rule", std::string(to_string(s.label_rule))},
          {"motif_a", s.motif_a},
          {"motif_b", s.motif_b},
          {"connectivity", s.connectivity},
          {"num_train", s.num_train},
          {"num_test", s.num_test},
          {"seed", s.seed},
          {"max_attempts", s.max_attempts}};
}

// FNV-1a over the canonical JSON form.
inline std::string spec_hash(const SyntheticSpec& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : spec_to_json(s).dump()) h = (h ^ static_cast<unsigned char>(c)) * 0x100000001b3ULL;
  char buf[17];
  static constexpr char kHex[] = "0123456789abcdef";
  for (int i = 15; i >= 0; --i, h >>= 4) buf[i] = kHex[h & 0xf];
  buf[16] = '\0';
  return buf;
}

struct SceneFacts {
  bool motif = false;
  double mean_brightness = 0.0;
  std::uint32_t band = 0;
};

namespace internal {

// Per-dataset class colors in [0.3, 0.7], fixed by the root seed.
inline std::vector<std::array<float, 3>> class_colors(const SyntheticSpec& spec) {
  Rng rng(derive_seed(spec.seed, "colors"));
  std::vector<std::array<float, 3>> out(spec.num_object_classes);
  for (auto& c : out)
    for (auto& v : c) v = static_cast<float>(rng.uniform(0.3, 0.7));
  return out;
}

inline scene::LabelMap paint_layout(const SyntheticSpec& spec, Rng& rng) {
  const std::uint32_t h = spec.height, w = spec.width;
  std::vector<scene::ClassId> px(static_cast<std::size_t>(h) * w, 0);
  const auto count = static_cast<std::uint32_t>(rng.between(spec.min_objects, spec.max_objects));
  for (std::uint32_t o = 0; o < count; ++o) {
    const auto cls = static_cast<scene::ClassId>(rng.between(1, spec.num_object_classes - 1));
    const bool disc = spec.discs && (!spec.rectangles || rng.coin());
    const double fh = rng.uniform(spec.min_extent, spec.max_extent);
    const double fw = rng.uniform(spec.min_extent, spec.max_extent);
    if (disc) {
      const double r = 0.5 * std::min(fh * h, fw * w);
      const double cy = rng.uniform(0.0, h), cx = rng.uniform(0.0, w);
      for (std::uint32_t y = 0; y < h; ++y)
        for (std::uint32_t x = 0; x < w; ++x) {
          const double dy = y + 0.5 - cy, dx = x + 0.5 - cx;
          if (dy * dy + dx * dx <= r * r) px[static_cast<std::size_t>(y) * w + x] = cls;
        }
    } else {
      const auto rh = std::max<std::uint32_t>(1, static_cast<std::uint32_t>(std::lround(fh * h)));
      const auto rw = std::max<std::uint32_t>(1, static_cast<std::uint32_t>(std::lround(fw * w)));
      const auto y0 = static_cast<std::uint32_t>(rng.between(0, h - std::min(rh, h)));
      const auto x0 = static_cast<std::uint32_t>(rng.between(0, w - std::min(rw, w)));
      for (std::uint32_t y = y0; y < std::min(h, y0 + rh); ++y)
        for (std::uint32_t x = x0; x < std::min(w, x0 + rw); ++x)
          px[static_cast<std::size_t>(y) * w + x] = cls;
    }
  }
  return scene::LabelMap(h, w, spec.num_object_classes, std::move(px));
}

inline double image_mean(const vision::ImageTensor& img) {
  double s = 0.0;
  for (float v : img.values()) s += v;
  return s / static_cast<double>(img.values().size());
}

// Renders `map` so its mean brightness lands in `band`. The offset is drawn
// uniformly from the window that keeps the unclamped mean inside the band
// with margin; clamping can still move it, which the caller checks.
inline vision::ImageTensor render(const SyntheticSpec& spec, const scene::LabelMap& map,
                                  const std::vector<std::array<float, 3>>& colors,
                                  std::uint32_t band, Rng& rng) {
  const std::size_t n = map.size();
  const std::uint32_t c = spec.channels;
  double base_mean = 0.0;
  for (auto cls : map.pixels())
    for (std::uint32_t k = 0; k < c; ++k) base_mean += colors[cls][k];
  base_mean /= static_cast<double>(n * c);
  const double width = 1.0 / spec.num_scene_classes;
  const double lo = band * width + spec.band_margin, hi = (band + 1) * width - spec.band_margin;
  const double offset = rng.uniform(lo, hi) - base_mean;
  std::vector<float> v(n * c);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::uint32_t k = 0; k < c; ++k) {
      const double x = colors[map.pixels()[i]][k] + offset + spec.noise * rng.uniform(-1.0, 1.0);
      v[i * c + k] = static_cast<float>(std::clamp(x, 0.0, 1.0));
    }
  }
  return vision::ImageTensor(map.height(), map.width(), c, std::move(v));
}

}  // namespace internal

/// Recomputes both predicates of a sample from its map and image.
inline SceneFacts scene_facts(const SyntheticSpec& spec, const scene::LabelMap& map,
                              const vision::ImageTensor& img) {
  SceneFacts f;
  if (spec.label_rule != LabelRule::image_pattern) {
    const auto g = scene::build_scene_graph(map, {spec.connectivity, scene::NodeMode::component, 0});
    f.motif = g.has_class_edge(static_cast<scene::ClassId>(spec.motif_a),
                               static_cast<scene::ClassId>(spec.motif_b));
  }
  f.mean_brightness = internal::image_mean(img);
  f.band = std::min<std::uint32_t>(
      spec.num_scene_classes - 1,
      static_cast<std::uint32_t>(std::floor(f.mean_brightness * spec.num_scene_classes)));
  return f;
}

inline std::uint32_t label_from_facts(const SyntheticSpec& spec, const SceneFacts& f) {
  switch (spec.label_rule) {
    case LabelRule::motif: return f.motif ? 1u : 0u;
    case LabelRule::image_pattern: return f.band;
    case LabelRule::xor_rule: return (f.motif != (f.band == 1)) ? 1u : 0u;
  }
  return 0;
}

inline std::string sample_id(std::size_t index) {
  std::string digits = std::to_string(index);
  return "s" + std::string(digits.size() < 5 ? 5 - digits.size() : 0, '0') + digits;
}

/// Generates sample `index` in memory. Depends only on the spec and index,
/// so any thread schedule produces the same dataset.
inline Sample generate_sample(const SyntheticSpec& spec, std::size_t index) {
  spec.validate();
  const auto colors = internal::class_colors(spec);
  Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(index)));
  const std::uint32_t K = spec.num_scene_classes;
  const auto label = static_cast<std::uint32_t>(index % K);
  // Choose the brightness band and, where it matters, the motif value that
  // yield the target label.
  std::uint32_t band = 0;
  bool want_motif = false;
  switch (spec.label_rule) {
    case LabelRule::motif:
      band = static_cast<std::uint32_t>(rng.below(K));
      want_motif = label == 1;
      break;
    case LabelRule::image_pattern:
      band = label;
      break;
    case LabelRule::xor_rule:
      band = rng.coin() ? 1u : 0u;
      want_motif = (label == 1) != (band == 1);
      break;
  }
  const double width = 1.0 / K;
  for (std::uint32_t attempt = 0; attempt < spec.max_attempts; ++attempt) {
    auto map = internal::paint_layout(spec, rng);
    if (spec.label_rule != LabelRule::image_pattern) {
      const auto g = scene::build_scene_graph(map, {spec.connectivity, scene::NodeMode::component, 0});
      if (g.has_class_edge(static_cast<scene::ClassId>(spec.motif_a),
                           static_cast<scene::ClassId>(spec.motif_b)) != want_motif) {
        continue;
      }
    }
    auto img = internal::render(spec, map, colors, band, rng);
    const double mean = internal::image_mean(img);
    if (mean < band * width + spec.band_margin || mean > (band + 1) * width - spec.band_margin) continue;
    const Split split = index < spec.num_train ? Split::train : Split::test;
    return {sample_id(index), split, std::move(map), std::move(img), label};
  }
  throw ConfigError(detail::concat("synthetic: sample ", index, " found no layout with label ", label,
                                   " after ", spec.max_attempts, " attempts; spec is unsatisfiable"));
}

/// Writes the dataset under `out_dir` (maps/, images/, manifest.json,
/// labels.csv) and returns the manifest.
inline Manifest gen_synthetic(const SyntheticSpec& spec, const fs::path& out_dir,
                              std::size_t threads = 1) {
  spec.validate();
  std::error_code ec;
  fs::create_directories(out_dir / "maps", ec);
  fs::create_directories(out_dir / "images", ec);
  if (ec) throw DataError(detail::concat("cannot create ", out_dir.string(), ": ", ec.message()));
  const std::size_t total = static_cast<std::size_t>(spec.num_train) + spec.num_test;
  Manifest m;
  m.num_object_classes = spec.num_object_classes;
  m.num_scene_classes = spec.num_scene_classes;
  m.provenance = "synthetic:" + spec_hash(spec);
  m.root = out_dir;
  m.samples.resize(total);
  parallel_for(total, threads, [&](std::size_t i) {
    const auto s = generate_sample(spec, i);
    SampleEntry e{s.id, s.split, fs::path("maps") / (s.id + ".png"),
                  fs::path("images") / (s.id + ".imgt"), s.label};
    scene::write_label_map(out_dir / e.label_map, s.label_map, scene::RasterFormat::png);
    vision::write_image_raw(out_dir / e.image, s.image);
    m.samples[i] = std::move(e);
  });
  write_manifest(out_dir / "manifest.json", m);
  std::ofstream csv(out_dir / "labels.csv", std::ios::binary);
  csv << "sample_id,label,split\n";
  for (const auto& e : m.samples) csv << e.id << "," << e.label << "," << to_string(e.split) << "\n";
  if (!csv) throw DataError(detail::concat("failed writing ", (out_dir / "labels.csv").string()));
  return m;
}

}  // namespace tsg::datakit
