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

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

#include "tsg/core/params.hpp"
#include "tsg/core/random.hpp"
#include "tsg/core/tape.hpp"
#include "tsg/gnn/graph_batch.hpp"
#include "tsg/gnn/layers.hpp"
#include "tsg/scene/extract.hpp"

namespace tsg::gnn {

enum class LayerKind { gcn, sage, gat };

inline constexpr std::size_t kNumLayers = 3;

inline std::string_view to_string(LayerKind k) {
  switch (k) {
    case LayerKind::gcn:
      return "gcn";
    case LayerKind::sage:
      return "sage";
    case LayerKind::gat:
      return "gat";
  }
  return "?";
}

inline LayerKind parse_layer_kind(std::string_view s) {
  if (s == "gcn") return LayerKind::gcn;
  if (s == "sage") return LayerKind::sage;
  if (s == "gat") return LayerKind::gat;
  throw ConfigError(detail::concat("unknown layer kind '", s, "' (expected gcn, sage or gat)"));
}

inline std::string_view to_string(Reduction r) {
  switch (r) {
    case Reduction::sum:
      return "sum";
    case Reduction::mean:
      return "mean";
    case Reduction::max:
      return "max";
  }
  return "?";
}

inline Reduction parse_readout(std::string_view s) {
  if (s == "sum") return Reduction::sum;
  if (s == "mean") return Reduction::mean;
  if (s == "max") return Reduction::max;
  throw ConfigError(detail::concat("unknown readout '", s, "' (expected sum, mean or max)"));
}

struct GnnConfig {
  LayerKind kind = LayerKind::gcn;
  std::size_t input_dim = 0;  // one-hot width C
  std::size_t hidden_dim = 64;
  std::size_t num_outputs = 2;
  Reduction readout = Reduction::mean;
  bool use_bias = true;
  GatOptions gat;

  void validate() const {
    if (input_dim == 0) throw ConfigError("gnn: input_dim must be positive");
    if (hidden_dim == 0) throw ConfigError("gnn: hidden_dim must be positive");
    if (num_outputs == 0) throw ConfigError("gnn: num_outputs must be positive");
    if (!(gat.slope > 0.0 && gat.slope < 1.0)) throw ConfigError("gnn: gat slope must lie in (0,1)");
  }

  friend bool operator==(const GnnConfig& a, const GnnConfig& b) {
    return a.kind == b.kind && a.input_dim == b.input_dim && a.hidden_dim == b.hidden_dim &&
           a.num_outputs == b.num_outputs && a.readout == b.readout && a.use_bias == b.use_bias &&
           a.gat.slope == b.gat.slope && a.gat.include_self == b.gat.include_self;
  }
};

inline std::string layer_param(std::size_t layer, std::string_view what) {
  return detail::concat("gnn.layer", layer + 1, ".", what);
}

template <Real T>
struct GnnModel {
  GnnConfig config;
  ParamStore<T> params;

  static constexpr std::array<Activation::Kind, kNumLayers> kActivations = {
      Activation::Kind::relu, Activation::Kind::relu, Activation::Kind::identity};

  // Initialized weights: Xavier for W, a and the head; zeros for biases.
  static GnnModel create(const GnnConfig& config, std::uint64_t seed) {
    config.validate();
    GnnModel m{config, {}};
    for (std::size_t l = 0; l < kNumLayers; ++l) {
      const std::size_t in = l == 0 ? config.input_dim : config.hidden_dim;
      const std::size_t rows = config.kind == LayerKind::sage ? 2 * in : in;
      const auto wname = layer_param(l, "w");
      m.params.add(wname, init_params<T>({rows, config.hidden_dim}, InitScheme::xavier(),
                                         derive_seed(seed, wname)));
      if (config.kind == LayerKind::gat) {
        const auto aname = layer_param(l, "a");
        m.params.add(aname, init_params<T>({2 * config.hidden_dim, 1}, InitScheme::xavier(),
                                           derive_seed(seed, aname)));
      }
      if (config.use_bias) m.params.add(layer_param(l, "b"), Tensor<T>(1, config.hidden_dim));
    }
    m.params.add("gnn.head.w", init_params<T>({config.hidden_dim, config.num_outputs},
                                              InitScheme::xavier(), derive_seed(seed, "gnn.head.w")));
    m.params.add("gnn.head.b", Tensor<T>(1, config.num_outputs));
    return m;
  }
};

template <Real T>
struct GnnOutput {
  Var<T> node_embeddings;   // N x hidden after the third layer
  Var<T> graph_embeddings;  // B x hidden, the readout
  Var<T> logits;            // B x num_outputs
};

template <Real T>
GnnOutput<T> gnn_forward(Tape<T>& tape, const GnnModel<T>& model, const GraphBatch<T>& batch) {
  const auto& cfg = model.config;
  if (batch.features.cols() != cfg.input_dim) {
    throw DimensionError(detail::concat("gnn: graph has ", batch.features.cols(),
                                        " classes but the model expects ", cfg.input_dim));
  }
  auto h = tape.constant(batch.features);
  for (std::size_t l = 0; l < kNumLayers; ++l) {
    const Activation act{GnnModel<T>::kActivations[l], 0.0};
    auto w = tape.param(model.params, layer_param(l, "w"));
    std::optional<Var<T>> b;
    if (cfg.use_bias) b = tape.param(model.params, layer_param(l, "b"));
    switch (cfg.kind) {
      case LayerKind::gcn:
        h = gcn_layer(h, batch, w, act, b);
        break;
      case LayerKind::sage:
        h = sage_layer(h, batch, w, act, b);
        break;
      case LayerKind::gat:
        h = gat_layer(h, batch, w, tape.param(model.params, layer_param(l, "a")), act, cfg.gat, b);
        break;
    }
  }
  auto emb = readout(h, batch, cfg.readout);
  auto logits = add_row(matmul(emb, tape.param(model.params, "gnn.head.w")),
                        tape.param(model.params, "gnn.head.b"));
  return {h, emb, logits};
}

template <Real T>
struct GnnPrediction {
  Tensor<T> logits;     // 1 x num_outputs
  Tensor<T> embedding;  // 1 x hidden
};

/// Inference on one scene graph.
template <Real T>
GnnPrediction<T> gnn_classify(const scene::SceneGraph& graph, const GnnModel<T>& model) {
  if (graph.num_classes != model.config.input_dim) {
    throw DimensionError(detail::concat("gnn_classify: graph has ", graph.num_classes,
                                        " classes but the model expects ", model.config.input_dim));
  }
  const auto prepared = PreparedGraph<T>::from(graph);
  const auto batch = GraphBatch<T>::single(prepared);
  Tape<T> tape;
  const auto out = gnn_forward(tape, model, batch);
  return {out.logits.value(), out.graph_embeddings.value()};
}

}  // namespace tsg::gnn
