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

// Staged training. graph_stream and image_stream fit one backbone on the
// scene label; fusion fits the fusion parameters on top of (by default
// frozen) backbones; end_to_end fits all three together. Each epoch walks a
// seeded permutation of the training set in mini-batches, so a run is fully
// determined by the seed and the initial parameters.

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tsg/core/error.hpp"
#include "tsg/core/parallel.hpp"
#include "tsg/core/random.hpp"
#include "tsg/core/tape.hpp"
#include "tsg/datakit/dataset.hpp"
#include "tsg/fusion/fusion.hpp"
#include "tsg/gnn/model.hpp"
#include "tsg/scene/extract.hpp"
#include "tsg/training/metrics.hpp"
#include "tsg/training/optim.hpp"
#include "tsg/vision/vit.hpp"

namespace tsg::training {

enum class Stage { graph_stream, image_stream, fusion, end_to_end };
enum class OptimizerKind { sgd, adam };

inline std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::graph_stream: return "graph_stream";
    case Stage::image_stream: return "image_stream";
    case Stage::fusion: return "fusion";
    case Stage::end_to_end: return "end_to_end";
  }
  return "?";
}

inline Stage parse_stage(std::string_view s) {
  for (auto st : {Stage::graph_stream, Stage::image_stream, Stage::fusion, Stage::end_to_end})
    if (s == to_string(st)) return st;
  throw ConfigError(detail::concat("unknown stage '", s,
                                   "' (graph_stream, image_stream, fusion, end_to_end)"));
}

inline std::string_view to_string(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adam"; }

inline OptimizerKind parse_optimizer(std::string_view s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "adam") return OptimizerKind::adam;
  throw ConfigError(detail::concat("unknown optimizer '", s, "' (sgd, adam)"));
}

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::adam;
  double learning_rate = 1e-3;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t batch_size = 32;
  std::size_t epochs = 50;
  std::uint64_t seed = 1;
  Stage stage = Stage::graph_stream;
  // Only read by the fusion stage; end_to_end trains every sub-model.
  bool freeze_graph = true;
  bool freeze_image = true;
  double info_nce_weight = 0.0;  // auxiliary contrastive term on projected embeddings
  double temperature = 0.07;

  void validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
      throw ConfigError(detail::concat("train: learning_rate must be positive, got ", learning_rate));
    }
    if (epochs == 0) throw ConfigError("train: epochs must be at least 1");
    if (batch_size == 0) throw ConfigError("train: batch_size must be at least 1");
    if (!(weight_decay >= 0.0)) throw ConfigError("train: weight_decay must be non-negative");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
      throw ConfigError("train: adam betas must lie in [0, 1)");
    }
    if (!(eps > 0.0)) throw ConfigError("train: eps must be positive");
    if (!(info_nce_weight >= 0.0)) throw ConfigError("train: info_nce_weight must be non-negative");
    if (!(temperature > 0.0)) throw ConfigError("train: temperature must be positive");
  }

  bool trains_graph() const {
    return stage == Stage::graph_stream || stage == Stage::end_to_end ||
           (stage == Stage::fusion && !freeze_graph);
  }
  bool trains_image() const {
    return stage == Stage::image_stream || stage == Stage::end_to_end ||
           (stage == Stage::fusion && !freeze_image);
  }
  bool trains_fusion() const { return stage == Stage::fusion || stage == Stage::end_to_end; }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

template <Real T>
struct ModelBundle {
  std::optional<gnn::GnnModel<T>> gnn;
  std::optional<vision::VitModel<T>> vit;
  std::optional<fusion::FusionModel<T>> fusion;
};

/// A sample with graph extraction and patchify already done.
template <Real T>
struct PreparedSample {
  std::string id;
  gnn::PreparedGraph<T> graph;
  Tensor<T> patches;  // empty when no image model is in play
  std::uint32_t label = 0;
};

template <Real T>
PreparedSample<T> prepare_sample(const datakit::Sample& s, const scene::ExtractionOptions& extraction,
                                 std::optional<std::uint32_t> patch_size) {
  try {
    PreparedSample<T> out{s.id, gnn::PreparedGraph<T>::from(scene::build_scene_graph(s.label_map, extraction)),
                          {}, s.label};
    if (patch_size) out.patches = vision::patchify<T>(s.image, *patch_size);
    return out;
  } catch (const Error& e) {
    throw DataError(detail::concat("sample '", s.id, "': ", e.what()));
  }
}

template <Real T>
std::vector<PreparedSample<T>> prepare_samples(std::span<const datakit::Sample> samples,
                                               const scene::ExtractionOptions& extraction,
                                               std::optional<std::uint32_t> patch_size,
                                               std::size_t threads = 1) {
  std::vector<PreparedSample<T>> out(samples.size());
  parallel_for(samples.size(), threads,
               [&](std::size_t i) { out[i] = prepare_sample<T>(samples[i], extraction, patch_size); });
  return out;
}

namespace internal {

template <Real T>
std::uint32_t argmax_row(const Tensor<T>& t, std::size_t r) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < t.cols(); ++j)
    if (t(r, j) > t(r, best)) best = j;
  return static_cast<std::uint32_t>(best);
}

// Stream outputs of one sample, kept when both backbones are frozen.
template <Real T>
struct CachedStreams {
  Tensor<T> graph_embedding, graph_nodes, image_cls, image_tokens, graph_logits, image_logits;
};

template <Real T>
Tensor<T> stack(std::span<const Tensor<T>* const> parts) {
  std::size_t rows = 0;
  for (const auto* p : parts) rows += p->rows();
  Tensor<T> out(rows, parts[0]->cols());
  auto dst = out.values().begin();
  for (const auto* p : parts) dst = std::copy(p->values().begin(), p->values().end(), dst);
  return out;
}

}  // namespace internal

template <Real T>
struct BatchForward {
  Var<T> logits;
  fusion::FusionOutput<T> fused;  // set for fusion stages
};

/// Shared forward pass for training and evaluation.
template <Real T>
class StageRunner {
 public:
  StageRunner(const ModelBundle<T>& models, Stage stage) : models_(models), stage_(stage) {
    check_models();
  }

  Stage stage() const { return stage_; }

  // Precomputes stream outputs so frozen backbones run once per sample.
  void cache_streams(std::span<const PreparedSample<T>> samples) {
    cache_.clear();
    cache_.reserve(samples.size());
    for (const auto& s : samples) {
      Tape<T> tape;
      const auto batch = gnn::GraphBatch<T>::single(s.graph);
      const auto f = fusion::run_streams(tape, *models_.gnn, *models_.vit, batch, s.patches);
      cache_.push_back({f.graph_embedding.value(), f.graph_nodes.value(), f.image_cls.value(),
                        f.image_tokens.value(), f.graph_logits.value(), f.image_logits.value()});
    }
  }
  void clear_cache() { cache_.clear(); }
  bool cached() const { return !cache_.empty(); }

  // `indices` index into the sample span used for cache_streams when cached.
  BatchForward<T> forward(Tape<T>& tape, std::span<const PreparedSample<T>> samples,
                          std::span<const std::size_t> indices) const {
    BatchForward<T> out;
    std::vector<const gnn::PreparedGraph<T>*> graphs;
    std::vector<const Tensor<T>*> patches;
    graphs.reserve(indices.size());
    patches.reserve(indices.size());
    for (auto i : indices) {
      graphs.push_back(&samples[i].graph);
      patches.push_back(&samples[i].patches);
    }
    switch (stage_) {
      case Stage::graph_stream:
        out.logits = gnn::gnn_forward(tape, *models_.gnn, gnn::GraphBatch<T>::from(graphs)).logits;
        return out;
      case Stage::image_stream:
        out.logits = vision::vit_forward(tape, *models_.vit, vision::stack_patches<T>(patches)).logits;
        return out;
      case Stage::fusion:
      case Stage::end_to_end:
        break;
    }
    fusion::StreamFeatures<T> streams;
    if (cached()) {
      streams = cached_features(tape, indices);
    } else {
      streams = fusion::run_streams(tape, *models_.gnn, *models_.vit, gnn::GraphBatch<T>::from(graphs),
                                    vision::stack_patches<T>(patches));
    }
    out.fused = fusion::fuse_streams(tape, *models_.fusion, streams);
    out.logits = out.fused.logits;
    return out;
  }

 private:
  void check_models() const {
    const bool need_graph = stage_ != Stage::image_stream;
    const bool need_image = stage_ != Stage::graph_stream;
    const bool need_fusion = stage_ == Stage::fusion || stage_ == Stage::end_to_end;
    if (need_graph && !models_.gnn) throw ConfigError(detail::concat("stage ", to_string(stage_), " needs a graph model"));
    if (need_image && !models_.vit) throw ConfigError(detail::concat("stage ", to_string(stage_), " needs an image model"));
    if (need_fusion && !models_.fusion) throw ConfigError(detail::concat("stage ", to_string(stage_), " needs a fusion model"));
    if (need_fusion) {
      const auto& fc = models_.fusion->config;
      if (fc.graph_dim != models_.gnn->config.hidden_dim || fc.image_dim != models_.vit->config.embed_dim) {
        throw ConfigError(detail::concat("fusion expects stream widths ", fc.graph_dim, " and ", fc.image_dim,
                                         " but the backbones produce ", models_.gnn->config.hidden_dim,
                                         " and ", models_.vit->config.embed_dim));
      }
      if (fc.num_outputs != models_.gnn->config.num_outputs ||
          fc.num_outputs != models_.vit->config.num_outputs) {
        throw ConfigError("fusion and stream models disagree on the number of scene classes");
      }
    }
  }

  fusion::StreamFeatures<T> cached_features(Tape<T>& tape, std::span<const std::size_t> indices) const {
    std::vector<const Tensor<T>*> ge, gn, ic, it, gl, il;
    fusion::StreamFeatures<T> f;
    std::size_t row = 0;
    for (auto i : indices) {
      const auto& c = cache_.at(i);
      ge.push_back(&c.graph_embedding);
      gn.push_back(&c.graph_nodes);
      ic.push_back(&c.image_cls);
      it.push_back(&c.image_tokens);
      gl.push_back(&c.graph_logits);
      il.push_back(&c.image_logits);
      f.node_ranges.push_back({row, c.graph_nodes.rows()});
      row += c.graph_nodes.rows();
    }
    f.graph_embedding = tape.constant(internal::stack<T>(ge));
    f.graph_nodes = tape.constant(internal::stack<T>(gn));
    f.image_cls = tape.constant(internal::stack<T>(ic));
    f.image_tokens = tape.constant(internal::stack<T>(it));
    f.tokens_per_image = models_.vit->config.tokens();
    f.graph_logits = tape.constant(internal::stack<T>(gl));
    f.image_logits = tape.constant(internal::stack<T>(il));
    return f;
  }

  const ModelBundle<T>& models_;
  Stage stage_;
  std::vector<internal::CachedStreams<T>> cache_;
};

template <Real T>
std::size_t model_outputs(const ModelBundle<T>& m, Stage stage) {
  switch (stage) {
    case Stage::graph_stream: return m.gnn->config.num_outputs;
    case Stage::image_stream: return m.vit->config.num_outputs;
    default: return m.fusion->config.num_outputs;
  }
}

namespace internal {

template <Real T>
void check_labels(std::span<const PreparedSample<T>> samples, std::size_t outputs) {
  for (const auto& s : samples) {
    if (s.label >= outputs) {
      throw ConfigError(detail::concat("sample '", s.id, "' has label ", s.label,
                                       " but the model predicts ", outputs, " classes"));
    }
  }
}

template <Real T>
EvalResult evaluate_with(const StageRunner<T>& runner, std::span<const PreparedSample<T>> samples,
                         std::size_t batch_size) {
  EvalResult r;
  r.count = samples.size();
  if (samples.empty()) return r;
  std::size_t correct = 0;
  double loss = 0.0;
  std::vector<std::size_t> idx;
  std::vector<std::size_t> labels;
  for (std::size_t b = 0; b < samples.size(); b += batch_size) {
    const std::size_t n = std::min(batch_size, samples.size() - b);
    idx.resize(n);
    labels.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      idx[k] = b + k;
      labels[k] = samples[b + k].label;
    }
    Tape<T> tape;
    const auto out = runner.forward(tape, samples, idx);
    loss += static_cast<double>(cross_entropy(out.logits, std::span<const std::size_t>(labels)).value()(0, 0)) *
            static_cast<double>(n);
    const auto& z = out.logits.value();
    for (std::size_t k = 0; k < n; ++k) {
      const auto pred = argmax_row(z, k);
      r.predictions.push_back(pred);
      correct += pred == labels[k];
    }
  }
  r.loss = loss / static_cast<double>(samples.size());
  r.accuracy = static_cast<double>(correct) / static_cast<double>(samples.size());
  return r;
}

}  // namespace internal

/// Top-1 accuracy and mean cross entropy of the stage's predictor.
template <Real T>
EvalResult evaluate(const ModelBundle<T>& models, Stage stage, std::span<const PreparedSample<T>> samples,
                    std::size_t batch_size = 64) {
  if (batch_size == 0) throw ConfigError("evaluate: batch_size must be at least 1");
  StageRunner<T> runner(models, stage);
  internal::check_labels(samples, model_outputs(models, stage));
  return internal::evaluate_with(runner, samples, batch_size);
}

/// Called after each epoch; returning false stops training early.
using EpochCallback = std::function<bool(const EpochMetrics&)>;

/// Trains `models` in place and returns the per-epoch history.
template <Real T>
MetricsHistory train(ModelBundle<T>& models, std::span<const PreparedSample<T>> train_set,
                     std::span<const PreparedSample<T>> test_set, const TrainConfig& cfg,
                     const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (train_set.empty()) throw DataError("train: the training split is empty");
  StageRunner<T> runner(models, cfg.stage);
  const std::size_t outputs = model_outputs(models, cfg.stage);
  internal::check_labels(train_set, outputs);
  internal::check_labels(test_set, outputs);

  std::vector<ParamStore<T>*> stores;
  if (cfg.trains_graph()) stores.push_back(&models.gnn->params);
  if (cfg.trains_image()) stores.push_back(&models.vit->params);
  if (cfg.trains_fusion()) stores.push_back(&models.fusion->params);
  const bool vote = cfg.trains_fusion() && fusion::is_vote(models.fusion->config.mode);
  if (vote && (cfg.trains_graph() || cfg.trains_image())) {
    throw ConfigError("vote fusion passes no gradient to the backbones; train the streams separately");
  }
  const bool contrastive = cfg.info_nce_weight > 0.0;
  if (contrastive && (!cfg.trains_fusion() || !models.fusion->config.uses_projection())) {
    throw ConfigError("info_nce_weight needs a fusion stage whose mode projects both streams");
  }
  for (auto* s : stores) s->zero_grad();

  const bool both_frozen = cfg.trains_fusion() && !cfg.trains_graph() && !cfg.trains_image();
  StageRunner<T> eval_runner(models, cfg.stage);
  if (both_frozen) {
    runner.cache_streams(train_set);
    eval_runner.cache_streams(test_set);
  }

  const auto t0 = std::chrono::steady_clock::now();
  MetricsHistory history;
  history.stage = std::string(to_string(cfg.stage));
  AdamState<T> adam;
  const AdamOptions adam_opts{cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay};
  Rng shuffle_rng(derive_seed(cfg.seed, "shuffle"));
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::vector<std::size_t> labels;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t n = std::min(cfg.batch_size, order.size() - b);
      const std::span<const std::size_t> idx(order.data() + b, n);
      labels.resize(n);
      for (std::size_t k = 0; k < n; ++k) labels[k] = train_set[idx[k]].label;
      Tape<T> tape;
      if (!cfg.trains_graph()) tape.freeze("gnn.");
      if (!cfg.trains_image()) tape.freeze("vit.");
      if (!cfg.trains_fusion()) tape.freeze("fuse.");
      const auto out = runner.forward(tape, train_set, idx);
      auto loss = cross_entropy(out.logits, std::span<const std::size_t>(labels));
      loss_sum += static_cast<double>(loss.value()(0, 0)) * static_cast<double>(n);
      if (contrastive && n >= 2) {
        loss = add(loss, scale(fusion::info_nce_loss(out.fused.graph_projected, out.fused.image_projected,
                                                     static_cast<T>(cfg.temperature)),
                               static_cast<T>(cfg.info_nce_weight)));
      }
      const auto& z = out.logits.value();
      for (std::size_t k = 0; k < n; ++k) correct += internal::argmax_row(z, k) == labels[k];
      if (vote) continue;
      switch (stores.size()) {
        case 1: tape.backward(loss, {stores[0]}); break;
        case 2: tape.backward(loss, {stores[0], stores[1]}); break;
        default: tape.backward(loss, {stores[0], stores[1], stores[2]}); break;
      }
      if (cfg.optimizer == OptimizerKind::sgd) {
        for (auto* s : stores) sgd_step(*s, cfg.learning_rate, cfg.weight_decay);
      } else {
        adam_step<T>(std::span<ParamStore<T>* const>(stores), adam, adam_opts);
      }
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = loss_sum / static_cast<double>(train_set.size());
    m.train_accuracy = static_cast<double>(correct) / static_cast<double>(train_set.size());
    if (!test_set.empty()) {
      const auto r = internal::evaluate_with(eval_runner, test_set, std::max<std::size_t>(cfg.batch_size, 64));
      m.test_loss = r.loss;
      m.test_accuracy = r.accuracy;
    }
    history.epochs.push_back(m);
    if (on_epoch && !on_epoch(m)) break;
  }
  history.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return history;
}

}  // namespace tsg::training
