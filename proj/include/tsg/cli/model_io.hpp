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

// Saving and restoring a ModelBundle. The checkpoint config holds
//   {"stage": ..., "extraction": {...}, "models": {"gnn": {...}, "vit": {...},
//    "fusion": {...}}, "run": <RunConfig snapshot>}
// and the tensor table holds each present sub-model under its own namespace.

#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "tsg/cli/checkpoint.hpp"
#include "tsg/core/error.hpp"
#include "tsg/fusion/fusion.hpp"
#include "tsg/gnn/model.hpp"
#include "tsg/scene/extract.hpp"
#include "tsg/training/trainer.hpp"
#include "tsg/vision/vit.hpp"

namespace tsg::cli {

inline nlohmann::json to_json(const gnn::GnnConfig& c) {
  return {{"kind", std::string(gnn::to_string(c.kind))},
          {"input_dim", c.input_dim},
          {"hidden_dim", c.hidden_dim},
          {"num_outputs", c.num_outputs},
          {"readout", std::string(gnn::to_string(c.readout))},
          {"use_bias", c.use_bias},
          {"gat_slope", c.gat.slope},
          {"gat_include_self", c.gat.include_self}};
}

inline nlohmann::json to_json(const vision::VitConfig& c) {
  return {{"image_height", c.image_height}, {"image_width", c.image_width},
          {"channels", c.channels},         {"patch_size", c.patch_size},
          {"embed_dim", c.embed_dim},       {"depth", c.depth},
          {"num_heads", c.num_heads},       {"mlp_ratio", c.mlp_ratio},
          {"num_outputs", c.num_outputs}};
}

inline nlohmann::json to_json(const fusion::FusionConfig& c) {
  return {{"mode", std::string(fusion::to_string(c.mode))},
          {"graph_dim", c.graph_dim},
          {"image_dim", c.image_dim},
          {"fused_dim", c.fused_dim},
          {"num_outputs", c.num_outputs},
          {"head_hidden", c.head_hidden},
          {"swap_roles", c.swap_roles},
          {"project_concat", c.project_concat}};
}

inline nlohmann::json to_json(const scene::ExtractionOptions& e) {
  return {{"connectivity", e.connectivity},
          {"node_mode", e.node_mode == scene::NodeMode::component ? "component" : "class_level"},
          {"min_region_pixels", e.min_region_pixels}};
}

namespace internal {

// Checkpoint configs were written by this code, so any mismatch is corruption.
template <typename V>
V ck_field(const nlohmann::json& j, const char* key) {
  try {
    return j.at(key).get<V>();
  } catch (const nlohmann::json::exception&) {
    throw CheckpointError(detail::concat("checkpoint config: missing or invalid '", key, "'"));
  }
}

template <typename F>
auto rethrow_as_checkpoint(F&& f) {
  try {
    return f();
  } catch (const ConfigError& e) {
    throw CheckpointError(detail::concat("checkpoint config: ", e.what()));
  }
}

}  // namespace internal

inline gnn::GnnConfig gnn_config_from_json(const nlohmann::json& j) {
  using internal::ck_field;
  return internal::rethrow_as_checkpoint([&] {
    gnn::GnnConfig c;
    c.kind = gnn::parse_layer_kind(ck_field<std::string>(j, "kind"));
    c.input_dim = ck_field<std::size_t>(j, "input_dim");
    c.hidden_dim = ck_field<std::size_t>(j, "hidden_dim");
    c.num_outputs = ck_field<std::size_t>(j, "num_outputs");
    c.readout = gnn::parse_readout(ck_field<std::string>(j, "readout"));
    c.use_bias = ck_field<bool>(j, "use_bias");
    c.gat.slope = ck_field<double>(j, "gat_slope");
    c.gat.include_self = ck_field<bool>(j, "gat_include_self");
    c.validate();
    return c;
  });
}

inline vision::VitConfig vit_config_from_json(const nlohmann::json& j) {
  using internal::ck_field;
  return internal::rethrow_as_checkpoint([&] {
    vision::VitConfig c;
    c.image_height = ck_field<std::uint32_t>(j, "image_height");
    c.image_width = ck_field<std::uint32_t>(j, "image_width");
    c.channels = ck_field<std::uint32_t>(j, "channels");
    c.patch_size = ck_field<std::uint32_t>(j, "patch_size");
    c.embed_dim = ck_field<std::size_t>(j, "embed_dim");
    c.depth = ck_field<std::size_t>(j, "depth");
    c.num_heads = ck_field<std::size_t>(j, "num_heads");
    c.mlp_ratio = ck_field<std::size_t>(j, "mlp_ratio");
    c.num_outputs = ck_field<std::size_t>(j, "num_outputs");
    c.validate();
    return c;
  });
}

inline fusion::FusionConfig fusion_config_from_json(const nlohmann::json& j) {
  using internal::ck_field;
  return internal::rethrow_as_checkpoint([&] {
    fusion::FusionConfig c;
    c.mode = fusion::parse_fusion_mode(ck_field<std::string>(j, "mode"));
    c.graph_dim = ck_field<std::size_t>(j, "graph_dim");
    c.image_dim = ck_field<std::size_t>(j, "image_dim");
    c.fused_dim = ck_field<std::size_t>(j, "fused_dim");
    c.num_outputs = ck_field<std::size_t>(j, "num_outputs");
    c.head_hidden = ck_field<std::size_t>(j, "head_hidden");
    c.swap_roles = ck_field<bool>(j, "swap_roles");
    c.project_concat = ck_field<bool>(j, "project_concat");
    c.validate();
    return c;
  });
}

inline scene::ExtractionOptions extraction_from_json(const nlohmann::json& j) {
  using internal::ck_field;
  scene::ExtractionOptions e;
  e.connectivity = ck_field<int>(j, "connectivity");
  const auto mode = ck_field<std::string>(j, "node_mode");
  if (mode != "component" && mode != "class_level") throw CheckpointError("checkpoint config: bad node_mode");
  e.node_mode = mode == "component" ? scene::NodeMode::component : scene::NodeMode::class_level;
  e.min_region_pixels = ck_field<std::uint32_t>(j, "min_region_pixels");
  if (e.connectivity != 4 && e.connectivity != 8) throw CheckpointError("checkpoint config: bad connectivity");
  return e;
}

/// A restored bundle plus what is needed to feed it.
template <Real T>
struct LoadedModels {
  training::ModelBundle<T> models;
  training::Stage stage = training::Stage::graph_stream;
  scene::ExtractionOptions extraction;
  nlohmann::json run;
};

template <Real T>
Checkpoint<T> bundle_to_checkpoint(const training::ModelBundle<T>& m, training::Stage stage,
                                   const scene::ExtractionOptions& extraction, const nlohmann::json& run) {
  Checkpoint<T> ck;
  nlohmann::json models = nlohmann::json::object();
  if (m.gnn) {
    models["gnn"] = to_json(m.gnn->config);
    ck.add_params(m.gnn->params);
  }
  if (m.vit) {
    models["vit"] = to_json(m.vit->config);
    ck.add_params(m.vit->params);
  }
  if (m.fusion) {
    models["fusion"] = to_json(m.fusion->config);
    ck.add_params(m.fusion->params);
  }
  ck.config = {{"stage", std::string(training::to_string(stage))},
               {"extraction", to_json(extraction)},
               {"models", models},
               {"run", run}};
  return ck;
}

/// Rebuilds every sub-model recorded in the checkpoint and loads its tensors.
template <Real T>
LoadedModels<T> bundle_from_checkpoint(const Checkpoint<T>& ck) {
  LoadedModels<T> out;
  const auto& cfg = ck.config;
  try {
    out.stage = training::parse_stage(internal::ck_field<std::string>(cfg, "stage"));
  } catch (const ConfigError& e) {
    throw CheckpointError(detail::concat("checkpoint config: ", e.what()));
  }
  out.extraction = extraction_from_json(cfg.contains("extraction") ? cfg.at("extraction") : nlohmann::json());
  out.run = cfg.value("run", nlohmann::json::object());
  const auto models = cfg.value("models", nlohmann::json::object());
  if (models.contains("gnn")) {
    out.models.gnn = gnn::GnnModel<T>::create(gnn_config_from_json(models.at("gnn")), 0);
    ck.load_params(out.models.gnn->params, "gnn.");
  }
  if (models.contains("vit")) {
    out.models.vit = vision::VitModel<T>::create(vit_config_from_json(models.at("vit")), 0);
    ck.load_params(out.models.vit->params, "vit.");
  }
  if (models.contains("fusion")) {
    out.models.fusion = fusion::FusionModel<T>::create(fusion_config_from_json(models.at("fusion")), 0);
    ck.load_params(out.models.fusion->params, "fuse.");
  }
  // The stage's predictor must be present.
  try {
    training::StageRunner<T> check(out.models, out.stage);
  } catch (const ConfigError& e) {
    throw CheckpointError(detail::concat("checkpoint: ", e.what()));
  }
  return out;
}

}  // namespace tsg::cli
