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

// One JSON document configures a run. Every key is optional; unknown keys
// are rejected. `tsg config` prints the full document with defaults filled in.
//
//   seed                         root seed (1); all other seeds derive from it
//   data.path                    dataset manifest or annotated folder ("data/manifest.json")
//   data.synthetic.*             generator settings for gen-data (see SyntheticSpec)
//   extraction.connectivity      4 | 8 (4)
//   extraction.node_mode         "component" | "class_level" ("component")
//   extraction.min_region_pixels (0)
//   gnn.kind                     "gcn" | "sage" | "gat" ("gcn")
//   gnn.hidden_dim (64), gnn.readout "sum" | "mean" | "max" ("mean"), gnn.use_bias (true)
//   gnn.gat_slope (0.2), gnn.gat_include_self (true)
//   vit.patch_size (4), vit.embed_dim (64), vit.depth (4), vit.num_heads (4), vit.mlp_ratio (4)
//   fusion.mode                  "cross_attention" | "concat" | "sum" | "average" | "product" |
//                                "vote_soft" | "vote_hard" ("cross_attention")
//   fusion.fused_dim (64), fusion.head_hidden (64), fusion.swap_roles (false),
//   fusion.project_concat (false)
//   train.stage                  "graph_stream" | "image_stream" | "fusion" | "end_to_end"
//   train.optimizer "adam" | "sgd" ("adam"), train.learning_rate (0.001),
//   train.weight_decay (0), train.beta1 (0.9), train.beta2 (0.999), train.eps (1e-8),
//   train.batch_size (32), train.epochs (50), train.freeze_graph (true),
//   train.freeze_image (true), train.info_nce_weight (0), train.temperature (0.07)
//   train.init                   checkpoints whose gnn.* / vit.* / fuse.* tensors seed the run ([])
//
// Image size and channel count, the one-hot width and the number of scene
// classes are taken from the dataset rather than configured.

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <string>
#include <type_traits>
#include <vector>

#include <nlohmann/json.hpp>

#include "tsg/core/error.hpp"
#include "tsg/datakit/synthetic.hpp"
#include "tsg/fusion/fusion.hpp"
#include "tsg/gnn/model.hpp"
#include "tsg/scene/extract.hpp"
#include "tsg/training/trainer.hpp"

namespace tsg::cli {

struct VitSettings {
  std::uint32_t patch_size = 4;
  std::size_t embed_dim = 64;
  std::size_t depth = 4;
  std::size_t num_heads = 4;
  std::size_t mlp_ratio = 4;
  friend bool operator==(const VitSettings&, const VitSettings&) = default;
};

struct RunConfig {
  std::uint64_t seed = 1;
  std::string data_path = "data/manifest.json";
  datakit::SyntheticSpec synthetic;  // seed field is ignored; derived from `seed`
  scene::ExtractionOptions extraction;
  gnn::GnnConfig gnn;                // input_dim / num_outputs come from the dataset
  VitSettings vit;
  fusion::FusionConfig fusion;       // widths come from gnn / vit
  training::TrainConfig train;       // seed field is ignored; derived from `seed`
  std::vector<std::string> init;

  datakit::SyntheticSpec synthetic_spec() const {
    auto s = synthetic;
    s.seed = derive_seed(seed, "data");
    return s;
  }

  training::TrainConfig train_config() const {
    auto t = train;
    t.seed = derive_seed(seed, detail::concat("train:", training::to_string(t.stage)));
    return t;
  }

  std::uint64_t model_seed(std::string_view which) const { return derive_seed(seed, which); }
};

namespace internal {

// Walks one JSON object, remembering which keys were read.
class Section {
 public:
  Section(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(detail::concat("config: '", label(), "' must be an object"));
  }

  template <typename V>
  void read(const char* key, V& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const auto& v = j_.at(key);
    try {
      if constexpr (std::is_same_v<V, bool>) {
        if (!v.is_boolean()) throw std::invalid_argument("bool");
      } else if constexpr (std::is_integral_v<V>) {
        if (!v.is_number_integer()) throw std::invalid_argument("int");
        if (v.is_number_unsigned()) {
          if (v.get<std::uint64_t>() > static_cast<std::uint64_t>(std::numeric_limits<V>::max()))
            throw std::out_of_range("range");
        } else {
          const auto s = v.get<std::int64_t>();
          if constexpr (std::is_unsigned_v<V>) {
            if (s < 0) throw std::out_of_range("negative");
          } else if (s < std::numeric_limits<V>::min() || s > std::numeric_limits<V>::max()) {
            throw std::out_of_range("range");
          }
        }
      } else if constexpr (std::is_floating_point_v<V>) {
        if (!v.is_number()) throw std::invalid_argument("number");
      } else if constexpr (std::is_same_v<V, std::string>) {
        if (!v.is_string()) throw std::invalid_argument("string");
      }
      out = v.get<V>();
    } catch (const std::exception&) {
      throw ConfigError(detail::concat("config: '", label(), key, "' has the wrong type or range"));
    }
  }

  std::string text(const char* key, std::string_view fallback) {
    std::string s(fallback);
    read(key, s);
    return s;
  }

  Section child(const char* key) {
    seen_.insert(key);
    static const nlohmann::json kEmpty = nlohmann::json::object();
    return Section(j_.contains(key) ? j_.at(key) : kEmpty, label() + key);
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.contains(it.key())) {
        throw ConfigError(detail::concat("config: unknown key '", label(), it.key(), "'"));
      }
    }
  }

 private:
  std::string label() const { return path_.empty() ? std::string() : path_ + "."; }

  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline const char* node_mode_name(scene::NodeMode m) {
  return m == scene::NodeMode::component ? "component" : "class_level";
}

}  // namespace internal

inline nlohmann::json to_json(const RunConfig& c) {
  const auto& s = c.synthetic;
  auto syn = datakit::spec_to_json(s);
  syn.erase("seed");
  const auto& t = c.train;
  return {
      {"seed", c.seed},
      {"data", {{"path", c.data_path}, {"synthetic", syn}}},
      {"extraction",
       {{"connectivity", c.extraction.connectivity},
        {"node_mode", internal::node_mode_name(c.extraction.node_mode)},
        {"min_region_pixels", c.extraction.min_region_pixels}}},
      {"gnn",
       {{"kind", std::string(gnn::to_string(c.gnn.kind))},
        {"hidden_dim", c.gnn.hidden_dim},
        {"readout", std::string(gnn::to_string(c.gnn.readout))},
        {"use_bias", c.gnn.use_bias},
        {"gat_slope", c.gnn.gat.slope},
        {"gat_include_self", c.gnn.gat.include_self}}},
      {"vit",
       {{"patch_size", c.vit.patch_size},
        {"embed_dim", c.vit.embed_dim},
        {"depth", c.vit.depth},
        {"num_heads", c.vit.num_heads},
        {"mlp_ratio", c.vit.mlp_ratio}}},
      {"fusion",
       {{"mode", std::string(fusion::to_string(c.fusion.mode))},
        {"fused_dim", c.fusion.fused_dim},
        {"head_hidden", c.fusion.head_hidden},
        {"swap_roles", c.fusion.swap_roles},
        {"project_concat", c.fusion.project_concat}}},
      {"train",
       {{"stage", std::string(training::to_string(t.stage))},
        {"optimizer", std::string(training::to_string(t.optimizer))},
        {"learning_rate", t.learning_rate},
        {"weight_decay", t.weight_decay},
        {"beta1", t.beta1},
        {"beta2", t.beta2},
        {"eps", t.eps},
        {"batch_size", t.batch_size},
        {"epochs", t.epochs},
        {"freeze_graph", t.freeze_graph},
        {"freeze_image", t.freeze_image},
        {"info_nce_weight", t.info_nce_weight},
        {"temperature", t.temperature},
        {"init", c.init}}},
  };
}

inline void validate(const RunConfig& c) {
  c.synthetic_spec().validate();
  if (c.extraction.connectivity != 4 && c.extraction.connectivity != 8) {
    throw ConfigError(detail::concat("config: extraction.connectivity must be 4 or 8, got ", c.extraction.connectivity));
  }
  if (c.gnn.hidden_dim == 0) throw ConfigError("config: gnn.hidden_dim must be positive");
  if (!(c.gnn.gat.slope > 0.0 && c.gnn.gat.slope < 1.0)) throw ConfigError("config: gnn.gat_slope must lie in (0, 1)");
  const auto& v = c.vit;
  if (v.patch_size == 0) throw ConfigError("config: vit.patch_size must be positive");
  if (v.embed_dim == 0 || v.num_heads == 0 || v.embed_dim % v.num_heads != 0) {
    throw ConfigError("config: vit.embed_dim must be a positive multiple of vit.num_heads");
  }
  if (v.mlp_ratio == 0) throw ConfigError("config: vit.mlp_ratio must be positive");
  if (c.fusion.fused_dim == 0) throw ConfigError("config: fusion.fused_dim must be positive");
  c.train_config().validate();
}

/// Parses and validates a config document. Values absent from `j` keep
/// their defaults.
inline RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig c;
  internal::Section root(j, "");
  root.read("seed", c.seed);
  {
    auto data = root.child("data");
    data.read("path", c.data_path);
    auto syn = data.child("synthetic");
    auto& s = c.synthetic;
    syn.read("height", s.height);
    syn.read("width", s.width);
    syn.read("channels", s.channels);
    syn.read("num_object_classes", s.num_object_classes);
    syn.read("num_scene_classes", s.num_scene_classes);
    syn.read("min_objects", s.min_objects);
    syn.read("max_objects", s.max_objects);
    syn.read("min_extent", s.min_extent);
    syn.read("max_extent", s.max_extent);
    syn.read("rectangles", s.rectangles);
    syn.read("discs", s.discs);
    syn.read("noise", s.noise);
    syn.read("band_margin", s.band_margin);
    s.label_rule = datakit::parse_label_rule(syn.text("label_rule", datakit::to_string(s.label_rule)));
    syn.read("motif_a", s.motif_a);
    syn.read("motif_b", s.motif_b);
    syn.read("connectivity", s.connectivity);
    syn.read("num_train", s.num_train);
    syn.read("num_test", s.num_test);
    syn.read("max_attempts", s.max_attempts);
    syn.finish();
    data.finish();
  }
  {
    auto ex = root.child("extraction");
    ex.read("connectivity", c.extraction.connectivity);
    const auto mode = ex.text("node_mode", internal::node_mode_name(c.extraction.node_mode));
    if (mode == "component") c.extraction.node_mode = scene::NodeMode::component;
    else if (mode == "class_level") c.extraction.node_mode = scene::NodeMode::class_level;
    else throw ConfigError(detail::concat("config: unknown extraction.node_mode '", mode, "'"));
    ex.read("min_region_pixels", c.extraction.min_region_pixels);
    ex.finish();
  }
  {
    auto g = root.child("gnn");
    c.gnn.kind = gnn::parse_layer_kind(g.text("kind", gnn::to_string(c.gnn.kind)));
    g.read("hidden_dim", c.gnn.hidden_dim);
    c.gnn.readout = gnn::parse_readout(g.text("readout", gnn::to_string(c.gnn.readout)));
    g.read("use_bias", c.gnn.use_bias);
    g.read("gat_slope", c.gnn.gat.slope);
    g.read("gat_include_self", c.gnn.gat.include_self);
    g.finish();
  }
  {
    auto v = root.child("vit");
    v.read("patch_size", c.vit.patch_size);
    v.read("embed_dim", c.vit.embed_dim);
    v.read("depth", c.vit.depth);
    v.read("num_heads", c.vit.num_heads);
    v.read("mlp_ratio", c.vit.mlp_ratio);
    v.finish();
  }
  {
    auto f = root.child("fusion");
    c.fusion.mode = fusion::parse_fusion_mode(f.text("mode", fusion::to_string(c.fusion.mode)));
    f.read("fused_dim", c.fusion.fused_dim);
    f.read("head_hidden", c.fusion.head_hidden);
    f.read("swap_roles", c.fusion.swap_roles);
    f.read("project_concat", c.fusion.project_concat);
    f.finish();
  }
  {
    auto t = root.child("train");
    auto& tc = c.train;
    tc.stage = training::parse_stage(t.text("stage", training::to_string(tc.stage)));
    tc.optimizer = training::parse_optimizer(t.text("optimizer", training::to_string(tc.optimizer)));
    t.read("learning_rate", tc.learning_rate);
    t.read("weight_decay", tc.weight_decay);
    t.read("beta1", tc.beta1);
    t.read("beta2", tc.beta2);
    t.read("eps", tc.eps);
    t.read("batch_size", tc.batch_size);
    t.read("epochs", tc.epochs);
    t.read("freeze_graph", tc.freeze_graph);
    t.read("freeze_image", tc.freeze_image);
    t.read("info_nce_weight", tc.info_nce_weight);
    t.read("temperature", tc.temperature);
    t.read("init", c.init);
    t.finish();
  }
  root.finish();
  validate(c);
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError(detail::concat("cannot open config ", path.string()));
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is, nullptr, true, /*ignore_comments=*/true);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(detail::concat(path.string(), ": invalid JSON: ", e.what()));
  }
  return run_config_from_json(j);
}

}  // namespace tsg::cli
