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

// Dataset layouts accepted by load_dataset:
//
//   Manifest file (JSON), paths relative to the manifest's directory:
//     {"format": "tsg-manifest", "version": 1,
//      "num_object_classes": C, "num_scene_classes": K, "provenance": "...",
//      "samples": [{"id": "...", "split": "train"|"test",
//                   "label_map": "maps/x.png", "image": "images/x.imgt",
//                   "label": 0}, ...]}
//
//   Annotated folder (ADE20K-style):
//     scene_labels.csv   header "sample_id,label" with optional ",split"
//     annotations/<id>.png   class-index maps (or .pgm / .lmap)
//     images/<id>.png        gray or RGB images (or .imgt)
//     meta.json              optional {"num_object_classes", "num_scene_classes"}
//   Without a split column every fifth sample (in file order) is test.

#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tsg/core/error.hpp"
#include "tsg/core/parallel.hpp"
#include "tsg/scene/label_map.hpp"
#include "tsg/scene/raster_io.hpp"
#include "tsg/vision/image.hpp"

namespace tsg::datakit {

namespace fs = std::filesystem;

enum class Split { train, test };

inline std::string_view to_string(Split s) { return s == Split::train ? "train" : "test"; }

inline Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  throw DataError(detail::concat("unknown split '", s, "' (expected train or test)"));
}

struct SampleEntry {
  std::string id;
  Split split = Split::train;
  fs::path label_map;  // absolute or relative to the manifest root
  fs::path image;
  std::uint32_t label = 0;
};

struct Manifest {
  std::uint32_t num_object_classes = 0;
  std::uint32_t num_scene_classes = 0;
  std::string provenance = "external";
  std::vector<SampleEntry> samples;
  fs::path root;  // directory that relative paths resolve against
};

struct Sample {
  std::string id;
  Split split = Split::train;
  scene::LabelMap label_map;
  vision::ImageTensor image;
  std::uint32_t label = 0;
};

inline nlohmann::json manifest_to_json(const Manifest& m) {
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& s : m.samples) {
    samples.push_back({{"id", s.id},
                       {"split", std::string(to_string(s.split))},
                       {"label_map", s.label_map.generic_string()},
                       {"image", s.image.generic_string()},
                       {"label", s.label}});
  }
  return {{"format", "tsg-manifest"},
          {"version", 1},
          {"num_object_classes", m.num_object_classes},
          {"num_scene_classes", m.num_scene_classes},
          {"provenance", m.provenance},
          {"samples", std::move(samples)}};
}

inline void write_manifest(const fs::path& path, const Manifest& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError(detail::concat("cannot open ", path.string(), " for writing"));
  os << manifest_to_json(m).dump(1) << "\n";
  if (!os) throw DataError(detail::concat("failed writing ", path.string()));
}

namespace internal {

inline void check_invariants(const Manifest& m) {
  if (m.num_object_classes == 0) throw DataError("dataset: num_object_classes must be positive");
  if (m.num_scene_classes < 2) throw DataError("dataset: num_scene_classes must be at least 2");
  if (m.samples.empty()) throw DataError("dataset: no samples");
  std::set<std::string> ids;
  for (const auto& s : m.samples) {
    if (s.id.empty()) throw DataError("dataset: sample with empty id");
    if (!ids.insert(s.id).second) throw DataError(detail::concat("dataset: duplicate sample id '", s.id, "'"));
    if (s.label >= m.num_scene_classes) {
      throw DataError(detail::concat("sample '", s.id, "': label ", s.label, " >= ",
                                     m.num_scene_classes, " scene classes"));
    }
    for (const auto& p : {s.label_map, s.image}) {
      const auto full = p.is_absolute() ? p : m.root / p;
      if (!fs::exists(full)) {
        throw DataError(detail::concat("sample '", s.id, "': missing file ", full.string()));
      }
    }
  }
}

template <typename V>
V json_field(const nlohmann::json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw DataError(detail::concat(where, ": missing field '", key, "'"));
  try {
    return j.at(key).get<V>();
  } catch (const nlohmann::json::exception&) {
    throw DataError(detail::concat(where, ": field '", key, "' has the wrong type"));
  }
}

inline Manifest read_manifest_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError(detail::concat("cannot open manifest ", path.string()));
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(detail::concat(path.string(), ": invalid JSON: ", e.what()));
  }
  const std::string where = path.string();
  if (json_field<std::string>(j, "format", where) != "tsg-manifest") {
    throw DataError(where + ": not a tsg-manifest");
  }
  if (json_field<int>(j, "version", where) != 1) throw DataError(where + ": unsupported manifest version");
  Manifest m;
  m.root = path.parent_path();
  m.num_object_classes = json_field<std::uint32_t>(j, "num_object_classes", where);
  m.num_scene_classes = json_field<std::uint32_t>(j, "num_scene_classes", where);
  m.provenance = j.value("provenance", std::string("external"));
  const auto& samples = j.at("samples");
  if (!samples.is_array()) throw DataError(where + ": 'samples' must be an array");
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    const std::string at = detail::concat(where, ": samples[", i, "]");
    SampleEntry e;
    e.id = json_field<std::string>(s, "id", at);
    e.split = parse_split(json_field<std::string>(s, "split", at));
    e.label_map = json_field<std::string>(s, "label_map", at);
    e.image = json_field<std::string>(s, "image", at);
    e.label = json_field<std::uint32_t>(s, "label", at);
    m.samples.push_back(std::move(e));
  }
  return m;
}

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  return out;
}

inline std::optional<fs::path> find_with_stem(const fs::path& dir, const std::string& id,
                                              std::initializer_list<const char*> exts) {
  for (const char* ext : exts) {
    auto p = dir / (id + ext);
    if (fs::exists(p)) return fs::path(dir.filename()) / (id + ext);
  }
  return std::nullopt;
}

inline Manifest read_folder(const fs::path& root) {
  const auto csv = root / "scene_labels.csv";
  std::ifstream is(csv);
  if (!is) throw DataError(detail::concat(root.string(), ": missing scene_labels.csv"));
  std::string line;
  if (!std::getline(is, line)) throw DataError(csv.string() + ": empty file");
  const auto header = split_csv(line);
  if (header.size() < 2 || header[0] != "sample_id" || header[1] != "label" ||
      (header.size() == 3 && header[2] != "split") || header.size() > 3) {
    throw DataError(csv.string() + ": header must be 'sample_id,label[,split]'");
  }
  const bool has_split = header.size() == 3;
  Manifest m;
  m.root = root;
  m.provenance = "external";
  std::uint32_t max_label = 0;
  std::size_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size()) {
      throw DataError(detail::concat(csv.string(), ": line ", row, " has ", cells.size(), " fields"));
    }
    SampleEntry e;
    e.id = cells[0];
    try {
      std::size_t used = 0;
      const unsigned long v = std::stoul(cells[1], &used);
      if (used != cells[1].size()) throw std::invalid_argument("trailing");
      e.label = static_cast<std::uint32_t>(v);
    } catch (const std::exception&) {
      throw DataError(detail::concat(csv.string(), ": line ", row, ": bad label '", cells[1], "'"));
    }
    e.split = has_split ? parse_split(cells[2])
                        : (m.samples.size() % 5 == 4 ? Split::test : Split::train);
    const auto map = find_with_stem(root / "annotations", e.id, {".png", ".pgm", ".lmap"});
    const auto img = find_with_stem(root / "images", e.id, {".png", ".imgt"});
    if (!map) throw DataError(detail::concat("sample '", e.id, "': no annotation in annotations/"));
    if (!img) throw DataError(detail::concat("sample '", e.id, "': no image in images/"));
    e.label_map = *map;
    e.image = *img;
    max_label = std::max(max_label, e.label);
    m.samples.push_back(std::move(e));
  }
  const auto meta_path = root / "meta.json";
  if (fs::exists(meta_path)) {
    std::ifstream ms(meta_path);
    nlohmann::json meta;
    try {
      meta = nlohmann::json::parse(ms);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(detail::concat(meta_path.string(), ": invalid JSON: ", e.what()));
    }
    m.num_object_classes = json_field<std::uint32_t>(meta, "num_object_classes", meta_path.string());
    m.num_scene_classes = json_field<std::uint32_t>(meta, "num_scene_classes", meta_path.string());
  } else {
    std::uint32_t classes = 0;
    for (const auto& s : m.samples) {
      const auto lm = scene::read_label_map(root / s.label_map);
      classes = std::max(classes, lm.num_classes());
    }
    m.num_object_classes = classes;
    m.num_scene_classes = std::max<std::uint32_t>(2, max_label + 1);
  }
  return m;
}

}  // namespace internal

/// Validated index over a dataset; samples are decoded on demand.
class Dataset {
 public:
  explicit Dataset(Manifest m) : manifest_(std::move(m)) { internal::check_invariants(manifest_); }

  const Manifest& manifest() const { return manifest_; }
  std::size_t size() const { return manifest_.samples.size(); }
  std::uint32_t num_object_classes() const { return manifest_.num_object_classes; }
  std::uint32_t num_scene_classes() const { return manifest_.num_scene_classes; }

  std::size_t count(Split split) const {
    return static_cast<std::size_t>(std::count_if(manifest_.samples.begin(), manifest_.samples.end(),
                                                  [&](const auto& s) { return s.split == split; }));
  }

  Sample load(std::size_t i) const {
    const auto& e = manifest_.samples.at(i);
    auto resolve = [&](const fs::path& p) { return p.is_absolute() ? p : manifest_.root / p; };
    try {
      Sample s{e.id, e.split, scene::read_label_map(resolve(e.label_map), manifest_.num_object_classes),
               vision::read_image(resolve(e.image)), e.label};
      if (s.image.height() != s.label_map.height() || s.image.width() != s.label_map.width()) {
        throw DataError(detail::concat("image is ", s.image.height(), "x", s.image.width(),
                                       " but label map is ", s.label_map.height(), "x",
                                       s.label_map.width()));
      }
      return s;
    } catch (const Error& err) {
      throw DataError(detail::concat("sample '", e.id, "': ", err.what()));
    }
  }

  // Every sample of one split, in manifest order.
  std::vector<Sample> load_split(Split split, std::size_t threads = 1) const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < size(); ++i)
      if (manifest_.samples[i].split == split) idx.push_back(i);
    std::vector<Sample> out(idx.size());
    parallel_for(idx.size(), threads, [&](std::size_t k) { out[k] = load(idx[k]); });
    return out;
  }

 private:
  Manifest manifest_;
};

/// Opens a manifest file or an annotated folder.
inline Dataset load_dataset(const fs::path& path) {
  if (!fs::exists(path)) throw DataError(detail::concat("dataset path ", path.string(), " does not exist"));
  return Dataset(fs::is_directory(path) ? internal::read_folder(path)
                                        : internal::read_manifest_file(path));
}

}  // namespace tsg::datakit
