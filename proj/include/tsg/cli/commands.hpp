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

// The subcommands of the `tsg` binary, callable without a process boundary.
// Each returns normally on success and throws a tsg::Error subclass otherwise;
// the binary maps the class to an exit code.

#pragma once

#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tsg/cli/checkpoint.hpp"
#include "tsg/cli/model_io.hpp"
#include "tsg/cli/run_config.hpp"
#include "tsg/datakit/dataset.hpp"
#include "tsg/datakit/synthetic.hpp"
#include "tsg/scene/graph_io.hpp"
#include "tsg/scene/raster_io.hpp"
#include "tsg/training/metrics.hpp"
#include "tsg/training/trainer.hpp"
#include "tsg/vision/image.hpp"

namespace tsg::cli {

namespace fs = std::filesystem;

// Models built by the binary are single precision.
using Scalar = float;

/// Shape facts the models need from the data.
struct DataShape {
  std::uint32_t num_object_classes = 0;
  std::uint32_t num_scene_classes = 0;
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::uint32_t channels = 0;
};

inline DataShape data_shape(const datakit::Dataset& ds) {
  if (ds.size() == 0) throw DataError("dataset has no samples");
  const auto first = ds.load(0);
  return {ds.num_object_classes(), ds.num_scene_classes(), first.image.height(), first.image.width(),
          first.image.channels()};
}

namespace internal {

inline bool needs_graph(training::Stage s) { return s != training::Stage::image_stream; }
inline bool needs_image(training::Stage s) { return s != training::Stage::graph_stream; }
inline bool needs_fusion(training::Stage s) {
  return s == training::Stage::fusion || s == training::Stage::end_to_end;
}

}  // namespace internal

/// Builds the models the configured stage needs. Sections found in an init
/// checkpoint replace the run config's section for that sub-model, then the
/// checkpoint's tensors overwrite the fresh initialisation by namespace.
inline training::ModelBundle<Scalar> build_models(const RunConfig& rc, const DataShape& shape) {
  const auto stage = rc.train.stage;
  std::vector<std::pair<std::string, Checkpoint<Scalar>>> inits;
  for (const auto& p : rc.init) inits.emplace_back(p, read_checkpoint<Scalar>(p));

  gnn::GnnConfig gc = rc.gnn;
  gc.input_dim = shape.num_object_classes;
  gc.num_outputs = shape.num_scene_classes;
  vision::VitConfig vc{shape.height,          shape.width,      shape.channels,
                       rc.vit.patch_size,     rc.vit.embed_dim, rc.vit.depth,
                       rc.vit.num_heads,      rc.vit.mlp_ratio, shape.num_scene_classes};
  std::optional<fusion::FusionConfig> fc_override;
  for (const auto& [path, ck] : inits) {
    const auto models = ck.config.value("models", nlohmann::json::object());
    if (models.contains("gnn") && internal::needs_graph(stage)) gc = gnn_config_from_json(models.at("gnn"));
    if (models.contains("vit") && internal::needs_image(stage)) vc = vit_config_from_json(models.at("vit"));
    if (models.contains("fusion") && internal::needs_fusion(stage)) {
      fc_override = fusion_config_from_json(models.at("fusion"));
    }
  }
  if (gc.input_dim != shape.num_object_classes || gc.num_outputs != shape.num_scene_classes) {
    throw ConfigError(detail::concat("init graph model expects ", gc.input_dim, " object / ", gc.num_outputs,
                                     " scene classes; the dataset has ", shape.num_object_classes, " / ",
                                     shape.num_scene_classes));
  }
  if (vc.image_height != shape.height || vc.image_width != shape.width || vc.channels != shape.channels ||
      vc.num_outputs != shape.num_scene_classes) {
    throw ConfigError("init image model does not match the dataset's image size, channels or classes");
  }

  training::ModelBundle<Scalar> m;
  if (internal::needs_graph(stage)) {
    gc.validate();
    m.gnn = gnn::GnnModel<Scalar>::create(gc, rc.model_seed("gnn"));
  }
  if (internal::needs_image(stage)) {
    vc.validate();
    m.vit = vision::VitModel<Scalar>::create(vc, rc.model_seed("vit"));
  }
  if (internal::needs_fusion(stage)) {
    fusion::FusionConfig fc = fc_override.value_or(rc.fusion);
    if (!fc_override) {
      fc.graph_dim = gc.hidden_dim;
      fc.image_dim = vc.embed_dim;
      fc.num_outputs = shape.num_scene_classes;
    }
    fc.validate();
    m.fusion = fusion::FusionModel<Scalar>::create(fc, rc.model_seed("fusion"));
  }
  for (const auto& [path, ck] : inits) {
    if (m.gnn && ck.has_prefix("gnn.")) ck.load_params(m.gnn->params, "gnn.");
    if (m.vit && ck.has_prefix("vit.")) ck.load_params(m.vit->params, "vit.");
    if (m.fusion && ck.has_prefix("fuse.")) ck.load_params(m.fusion->params, "fuse.");
  }
  // Surfaces width mismatches between init'd backbones and the fusion head.
  training::StageRunner<Scalar> check(m, stage);
  return m;
}

inline std::optional<std::uint32_t> patch_size_of(const training::ModelBundle<Scalar>& m) {
  if (!m.vit) return std::nullopt;
  return m.vit->config.patch_size;
}

// gen-data: writes the synthetic dataset described by the run config.
inline datakit::Manifest cmd_gen_data(const RunConfig& rc, const fs::path& out_dir, std::size_t threads) {
  return datakit::gen_synthetic(rc.synthetic_spec(), out_dir, threads);
}

// extract-graph: label map in, JSON graph out. `num_classes` bounds the
// indices when known; otherwise any index the file can hold is accepted.
inline std::string cmd_extract_graph(const fs::path& map_path, const scene::ExtractionOptions& opts,
                                     std::optional<std::uint32_t> num_classes) {
  const auto map = scene::read_label_map(map_path, num_classes);
  return scene::write_graph_json(scene::build_scene_graph(map, opts));
}

struct TrainOutputs {
  training::MetricsHistory history;
  fs::path checkpoint;
};

// train: writes checkpoint.tsck, metrics.csv, metrics.json and timing.json
// under `out_dir`. Wall time is kept out of the metrics files so they are
// reproducible byte for byte.
inline TrainOutputs cmd_train(const RunConfig& rc, const fs::path& out_dir, std::size_t threads,
                              std::ostream* log = nullptr) {
  validate(rc);
  const auto ds = datakit::load_dataset(rc.data_path);
  const auto shape = data_shape(ds);
  auto models = build_models(rc, shape);
  const auto patch = patch_size_of(models);
  const auto train_raw = ds.load_split(datakit::Split::train, threads);
  const auto test_raw = ds.load_split(datakit::Split::test, threads);
  const auto train_set = training::prepare_samples<Scalar>(train_raw, rc.extraction, patch, threads);
  const auto test_set = training::prepare_samples<Scalar>(test_raw, rc.extraction, patch, threads);

  const auto history = training::train<Scalar>(
      models, train_set, test_set, rc.train_config(), [&](const training::EpochMetrics& e) {
        if (log) {
          *log << "epoch " << e.epoch << " train_loss=" << training::format_number(e.train_loss)
               << " train_acc=" << training::format_number(e.train_accuracy);
          if (e.test_accuracy) *log << " test_acc=" << training::format_number(*e.test_accuracy);
          *log << "\n";
        }
        return true;
      });

  fs::create_directories(out_dir);
  TrainOutputs out{history, out_dir / "checkpoint.tsck"};
  write_checkpoint(out.checkpoint, bundle_to_checkpoint(models, rc.train.stage, rc.extraction, to_json(rc)));
  training::write_text(out_dir / "metrics.csv", training::metrics_csv(history));
  training::write_text(out_dir / "metrics.json", training::metrics_json(history).dump(2) + "\n");
  const nlohmann::json timing = {{"wall_seconds", history.wall_seconds}, {"threads", threads}};
  training::write_text(out_dir / "timing.json", timing.dump(2) + "\n");
  return out;
}

enum class ReportFormat { json, csv };

inline ReportFormat parse_format(std::string_view s) {
  if (s == "json") return ReportFormat::json;
  if (s == "csv") return ReportFormat::csv;
  throw ConfigError(detail::concat("unknown format '", s, "' (json, csv)"));
}

namespace internal {

inline void check_data_matches(const LoadedModels<Scalar>& lm, const datakit::Dataset& ds) {
  const auto outputs = training::model_outputs(lm.models, lm.stage);
  if (ds.num_scene_classes() > outputs) {
    throw DataError(detail::concat("dataset has ", ds.num_scene_classes(), " scene classes; the checkpoint predicts ",
                                   outputs));
  }
  if (lm.models.gnn && ds.num_object_classes() != lm.models.gnn->config.input_dim) {
    throw DataError(detail::concat("dataset has ", ds.num_object_classes(),
                                   " object classes; the checkpoint's graph model expects ",
                                   lm.models.gnn->config.input_dim));
  }
}

}  // namespace internal

struct EvalOutputs {
  training::EvalResult result;
  std::string report;  // in the requested format
};

// eval: scores a checkpoint on one split of a dataset.
inline EvalOutputs cmd_eval(const fs::path& checkpoint, const fs::path& data, datakit::Split split,
                            ReportFormat format, std::size_t threads) {
  const auto lm = bundle_from_checkpoint(read_checkpoint<Scalar>(checkpoint));
  const auto ds = datakit::load_dataset(data);
  internal::check_data_matches(lm, ds);
  const auto raw = ds.load_split(split, threads);
  if (raw.empty()) throw DataError(detail::concat("the ", datakit::to_string(split), " split is empty"));
  const auto samples = training::prepare_samples<Scalar>(raw, lm.extraction, patch_size_of(lm.models), threads);
  EvalOutputs out;
  out.result = training::evaluate<Scalar>(lm.models, lm.stage, samples);
  const std::string name(datakit::to_string(split));
  out.report = format == ReportFormat::csv ? training::eval_csv(name, out.result)
                                           : training::eval_json(name, out.result).dump(2) + "\n";
  return out;
}

// predict: class scores for one scene. The stage decides which inputs are read.
inline nlohmann::json cmd_predict(const fs::path& checkpoint, const std::optional<fs::path>& map_path,
                                  const std::optional<fs::path>& image_path) {
  const auto lm = bundle_from_checkpoint(read_checkpoint<Scalar>(checkpoint));
  const bool graph = internal::needs_graph(lm.stage);
  const bool image = internal::needs_image(lm.stage);
  if (graph && !map_path) throw ConfigError("predict: this checkpoint needs --map");
  if (image && !image_path) throw ConfigError("predict: this checkpoint needs --image");

  training::PreparedSample<Scalar> s;
  s.id = "input";
  try {
    std::optional<scene::LabelMap> map;
    if (graph) {
      map = scene::read_label_map(*map_path, static_cast<std::uint32_t>(lm.models.gnn->config.input_dim));
      s.graph = gnn::PreparedGraph<Scalar>::from(scene::build_scene_graph(*map, lm.extraction));
    }
    if (image) {
      const auto img = vision::read_image(*image_path);
      vision::require_image_fits<Scalar>(img, lm.models.vit->config);
      if (map && (map->height() != img.height() || map->width() != img.width())) {
        throw DataError("predict: image and label map sizes differ");
      }
      s.patches = vision::patchify<Scalar>(img, lm.models.vit->config.patch_size);
    }
  } catch (const DataError&) {
    throw;
  } catch (const Error& e) {
    throw DataError(detail::concat("predict: ", e.what()));
  }

  training::StageRunner<Scalar> runner(lm.models, lm.stage);
  Tape<Scalar> tape;
  const std::size_t idx = 0;
  const auto out = runner.forward(tape, std::span<const training::PreparedSample<Scalar>>(&s, 1),
                                  std::span<const std::size_t>(&idx, 1));
  const auto& z = out.logits.value();
  std::vector<double> logits(z.cols()), probs(z.cols());
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < z.cols(); ++k) mx = std::max(mx, logits[k] = static_cast<double>(z(0, k)));
  double total = 0.0;
  for (std::size_t k = 0; k < z.cols(); ++k) total += probs[k] = std::exp(logits[k] - mx);
  for (auto& p : probs) p /= total;
  return {{"stage", std::string(training::to_string(lm.stage))},
          {"predicted_class", training::internal::argmax_row(z, 0)},
          {"logits", logits},
          {"probabilities", probs}};
}

}  // namespace tsg::cli
