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

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tsg/core/params.hpp"
#include "tsg/core/random.hpp"
#include "tsg/core/tape.hpp"
#include "tsg/gnn/model.hpp"
#include "tsg/scene/extract.hpp"
#include "tsg/vision/vit.hpp"

namespace tsg::fusion {

enum class FusionMode { cross_attention, concat, sum, average, product, vote_soft, vote_hard };

inline std::string_view to_string(FusionMode m) {
  switch (m) {
    case FusionMode::cross_attention:
      return "cross_attention";
    case FusionMode::concat:
      return "concat";
    case FusionMode::sum:
      return "sum";
    case FusionMode::average:
      return "average";
    case FusionMode::product:
      return "product";
    case FusionMode::vote_soft:
      return "vote_soft";
    case FusionMode::vote_hard:
      return "vote_hard";
  }
  return "?";
}

inline FusionMode parse_fusion_mode(std::string_view s) {
  for (auto m : {FusionMode::cross_attention, FusionMode::concat, FusionMode::sum,
                 FusionMode::average, FusionMode::product, FusionMode::vote_soft,
                 FusionMode::vote_hard}) {
    if (s == to_string(m)) return m;
  }
  throw ConfigError(detail::concat("unknown fusion mode '", s, "'"));
}

inline bool is_vote(FusionMode m) { return m == FusionMode::vote_soft || m == FusionMode::vote_hard; }

struct FusionConfig {
  FusionMode mode = FusionMode::cross_attention;
  std::size_t graph_dim = 0;  // gnn hidden width
  std::size_t image_dim = 0;  // vit embed width
  std::size_t fused_dim = 64;
  std::size_t num_outputs = 2;
  // Hidden width of the two-layer head; 0 gives a single linear layer.
  std::size_t head_hidden = 64;
  bool swap_roles = false;      // image queries graph nodes instead
  bool project_concat = false;  // concat projected vectors instead of raw ones

  bool uses_projection() const {
    if (is_vote(mode)) return false;
    return mode != FusionMode::concat || project_concat;
  }

  std::size_t head_input() const {
    if (mode != FusionMode::concat) return fused_dim;
    return project_concat ? 2 * fused_dim : graph_dim + image_dim;
  }

  void validate() const {
    if (graph_dim == 0 || image_dim == 0) throw ConfigError("fusion: stream widths must be positive");
    if (fused_dim == 0) throw ConfigError("fusion: fused_dim must be positive");
    if (num_outputs == 0) throw ConfigError("fusion: num_outputs must be positive");
  }

  friend bool operator==(const FusionConfig&, const FusionConfig&) = default;
};

template <Real T>
struct FusionModel {
  FusionConfig config;
  ParamStore<T> params;

  static FusionModel create(const FusionConfig& config, std::uint64_t seed) {
    config.validate();
    FusionModel m{config, {}};
    if (is_vote(config.mode)) return m;
    auto xavier = [&](const std::string& name, Shape s) {
      m.params.add(name, init_params<T>(s, InitScheme::xavier(), derive_seed(seed, name)));
    };
    const std::size_t f = config.fused_dim;
    if (config.uses_projection()) {
      xavier("fuse.proj_g", {config.graph_dim, f});
      xavier("fuse.proj_v", {config.image_dim, f});
    }
    if (config.mode == FusionMode::cross_attention) {
      for (const char* n : {"fuse.wq", "fuse.wk", "fuse.wv", "fuse.wo"}) xavier(n, {f, f});
    }
    if (config.head_hidden > 0) {
      xavier("fuse.head.w1", {config.head_input(), config.head_hidden});
      m.params.add("fuse.head.b1", Tensor<T>(1, config.head_hidden));
      xavier("fuse.head.w2", {config.head_hidden, config.num_outputs});
    } else {
      xavier("fuse.head.w2", {config.head_input(), config.num_outputs});
    }
    m.params.add("fuse.head.b2", Tensor<T>(1, config.num_outputs));
    return m;
  }
};

template <Real T>
struct CrossAttentionWeights {
  Var<T> wq, wk, wv, wo;
};

/// For each query row b, attends over the key/value rows in kv_ranges[b]:
///   a = softmax((q Wq)(K Wk)^T / sqrt(f)),  out = (a K Wv) Wo + q.
/// When `weights` is given it receives each row of attention weights.
template <Real T>
Var<T> cross_attention_fuse(Var<T> query, Var<T> kv, std::span<const RowRange> kv_ranges,
                            const CrossAttentionWeights<T>& w,
                            std::vector<Tensor<T>>* weights = nullptr) {
  if (kv_ranges.size() != query.rows()) {
    throw DimensionError(detail::concat("cross_attention_fuse: ", query.rows(), " queries but ",
                                        kv_ranges.size(), " key ranges"));
  }
  const std::size_t f = query.cols();
  if (kv.cols() != f) {
    throw DimensionError(detail::concat("cross_attention_fuse: query width ", f,
                                        " but key width ", kv.cols()));
  }
  auto q = matmul(query, w.wq);
  auto k = matmul(kv, w.wk);
  auto v = matmul(kv, w.wv);
  const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(f));
  if (weights) weights->clear();
  std::vector<Var<T>> rows;
  rows.reserve(kv_ranges.size());
  for (std::size_t b = 0; b < kv_ranges.size(); ++b) {
    const auto [begin, count] = kv_ranges[b];
    if (count == 0) throw ContractError(detail::concat("cross_attention_fuse: query ", b, " has no keys"));
    auto alpha = rowwise_softmax(scale(matmul_nt(slice_rows(q, b, 1), slice_rows(k, begin, count)),
                                       inv_sqrt));
    if (weights) weights->push_back(alpha.value());
    rows.push_back(matmul(alpha, slice_rows(v, begin, count)));
  }
  auto context = rows.size() == 1 ? rows[0] : concat_rows<T>(rows);
  return add(matmul(context, w.wo), query);
}

// Uniform ranges of `per` rows each, for B queries.
inline std::vector<RowRange> uniform_ranges(std::size_t batch, std::size_t per) {
  std::vector<RowRange> r(batch);
  for (std::size_t b = 0; b < batch; ++b) r[b] = {b * per, per};
  return r;
}

/// concat, sum, average or product of two row-aligned embeddings.
template <Real T>
Var<T> simple_fuse(Var<T> g, Var<T> v, FusionMode mode) {
  if (g.rows() != v.rows()) throw DimensionError("simple_fuse: batch sizes differ");
  if (mode != FusionMode::concat && g.cols() != v.cols()) {
    throw DimensionError(detail::concat("simple_fuse: ", to_string(mode), " needs equal widths, got ",
                                        g.cols(), " and ", v.cols()));
  }
  switch (mode) {
    case FusionMode::concat:
      return concat_cols({g, v});
    case FusionMode::sum:
      return add(g, v);
    case FusionMode::average:
      return scale(add(g, v), T(0.5));
    case FusionMode::product:
      return mul(g, v);
    default:
      throw ContractError(detail::concat("simple_fuse: mode ", to_string(mode), " is not elementwise"));
  }
}

template <Real T>
struct VoteResult {
  std::vector<std::size_t> predicted;  // per row
  Tensor<T> scores;                    // B x K; averaged distribution (soft) or one-hot (hard)
};

namespace internal {

template <Real T>
std::size_t argmax_row(std::span<const T> row) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < row.size(); ++j)
    if (row[j] > row[best]) best = j;
  return best;
}

}  // namespace internal

/// Soft: average the two softmax distributions and take the argmax. Hard:
/// take the shared argmax, else the stream whose softmax is more confident.
/// Ties go to the lower class index (and to the graph stream).
template <Real T>
VoteResult<T> vote_fuse(const Tensor<T>& logits_g, const Tensor<T>& logits_v, FusionMode mode) {
  if (logits_g.shape() != logits_v.shape()) {
    throw DimensionError(detail::concat("vote_fuse: logits ", to_string(logits_g.shape()), " vs ",
                                        to_string(logits_v.shape())));
  }
  if (!is_vote(mode)) throw ContractError("vote_fuse: not a vote mode");
  const auto pg = tsg::rowwise_softmax(logits_g);
  const auto pv = tsg::rowwise_softmax(logits_v);
  VoteResult<T> out{std::vector<std::size_t>(pg.rows()), Tensor<T>(pg.rows(), pg.cols())};
  for (std::size_t i = 0; i < pg.rows(); ++i) {
    if (mode == FusionMode::vote_soft) {
      for (std::size_t j = 0; j < pg.cols(); ++j) out.scores(i, j) = (pg(i, j) + pv(i, j)) / T(2);
      out.predicted[i] = internal::argmax_row<T>(out.scores.row(i));
    } else {
      const auto ag = internal::argmax_row<T>(pg.row(i));
      const auto av = internal::argmax_row<T>(pv.row(i));
      std::size_t pick = ag;
      if (ag != av) {
        const T cg = pg(i, ag), cv = pv(i, av);
        if (cv > cg || (cv == cg && av < ag)) pick = av;
      }
      out.predicted[i] = pick;
      out.scores(i, pick) = T(1);
    }
  }
  return out;
}

/// Differentiable head over a fused vector.
template <Real T>
Var<T> fusion_head(Tape<T>& tape, const FusionModel<T>& model, Var<T> fused) {
  const auto& p = model.params;
  auto x = fused;
  if (model.config.head_hidden > 0) {
    x = activation(add_row(matmul(x, tape.param(p, "fuse.head.w1")), tape.param(p, "fuse.head.b1")),
                   Activation::relu());
  }
  return add_row(matmul(x, tape.param(p, "fuse.head.w2")), tape.param(p, "fuse.head.b2"));
}

/// Stream outputs consumed by the fusion stage.
template <Real T>
struct StreamFeatures {
  Var<T> graph_embedding;  // B x graph_dim (readout)
  Var<T> graph_nodes;      // N x graph_dim (third-layer node rows)
  std::vector<RowRange> node_ranges;
  Var<T> image_cls;       // B x image_dim
  Var<T> image_tokens;    // (B * tokens) x image_dim
  std::size_t tokens_per_image = 0;
  Var<T> graph_logits;    // B x K
  Var<T> image_logits;    // B x K
};

template <Real T>
struct FusionOutput {
  Var<T> logits;  // B x K; for vote modes a constant (log of soft scores, or one-hot)
  std::optional<VoteResult<T>> vote;
  Var<T> graph_projected;  // B x fused_dim when projections exist
  Var<T> image_projected;
};

template <Real T>
FusionOutput<T> fuse_streams(Tape<T>& tape, const FusionModel<T>& model, const StreamFeatures<T>& s) {
  const auto& cfg = model.config;
  const auto& p = model.params;
  if (s.graph_embedding.cols() != cfg.graph_dim || s.image_cls.cols() != cfg.image_dim) {
    throw DimensionError(detail::concat("fusion: streams are ", s.graph_embedding.cols(), " and ",
                                        s.image_cls.cols(), " wide, model expects ", cfg.graph_dim,
                                        " and ", cfg.image_dim));
  }
  FusionOutput<T> out;
  if (is_vote(cfg.mode)) {
    auto vote = vote_fuse(s.graph_logits.value(), s.image_logits.value(), cfg.mode);
    Tensor<T> logits = vote.scores;
    // Floored so an underflowed probability stays finite.
    if (cfg.mode == FusionMode::vote_soft)
      for (auto& v : logits.values()) v = std::log(std::max(v, std::numeric_limits<T>::min()));
    out.logits = tape.constant(std::move(logits));
    out.vote = std::move(vote);
    return out;
  }
  Var<T> fused;
  if (cfg.uses_projection()) {
    auto pg = tape.param(p, "fuse.proj_g");
    auto pv = tape.param(p, "fuse.proj_v");
    out.graph_projected = matmul(s.graph_embedding, pg);
    out.image_projected = matmul(s.image_cls, pv);
    if (cfg.mode == FusionMode::cross_attention) {
      const CrossAttentionWeights<T> w{tape.param(p, "fuse.wq"), tape.param(p, "fuse.wk"),
                                       tape.param(p, "fuse.wv"), tape.param(p, "fuse.wo")};
      if (!cfg.swap_roles) {
        const auto ranges = uniform_ranges(s.image_cls.rows(), s.tokens_per_image);
        fused = cross_attention_fuse(out.graph_projected, matmul(s.image_tokens, pv), ranges, w);
      } else {
        fused = cross_attention_fuse(out.image_projected, matmul(s.graph_nodes, pg),
                                     s.node_ranges, w);
      }
    } else {
      fused = simple_fuse(out.graph_projected, out.image_projected, cfg.mode);
    }
  } else {
    fused = simple_fuse(s.graph_embedding, s.image_cls, cfg.mode);
  }
  out.logits = fusion_head(tape, model, fused);
  return out;
}

/// Runs both streams over a batch and fuses them.
template <Real T>
StreamFeatures<T> run_streams(Tape<T>& tape, const gnn::GnnModel<T>& gnn_model,
                              const vision::VitModel<T>& vit_model, const gnn::GraphBatch<T>& graphs,
                              const Tensor<T>& patches) {
  const auto g = gnn::gnn_forward(tape, gnn_model, graphs);
  const auto v = vision::vit_forward(tape, vit_model, patches);
  if (v.batch != graphs.num_graphs()) {
    throw DimensionError(detail::concat("fusion: ", graphs.num_graphs(), " graphs but ", v.batch,
                                        " images"));
  }
  return {g.graph_embeddings, g.node_embeddings, *graphs.ranges, v.cls, v.tokens,
          vit_model.config.tokens(), g.logits, v.logits};
}

/// Label map -> scene graph -> graph stream; image -> vision stream; fuse.
template <Real T>
Tensor<T> fused_classify(const vision::ImageTensor& image, const scene::LabelMap& label_map,
                         const gnn::GnnModel<T>& gnn_model, const vision::VitModel<T>& vit_model,
                         const FusionModel<T>& fusion_model,
                         const scene::ExtractionOptions& extraction = {}) {
  if (label_map.num_classes() != gnn_model.config.input_dim) {
    throw DimensionError(detail::concat("fused_classify: label map has ", label_map.num_classes(),
                                        " classes but the graph model expects ",
                                        gnn_model.config.input_dim));
  }
  if (gnn_model.config.num_outputs != vit_model.config.num_outputs ||
      fusion_model.config.num_outputs != gnn_model.config.num_outputs) {
    throw DimensionError("fused_classify: scene class counts differ between models");
  }
  vision::require_image_fits<T>(image, vit_model.config);
  const auto graph = scene::build_scene_graph(label_map, extraction);
  const auto prepared = gnn::PreparedGraph<T>::from(graph);
  const auto batch = gnn::GraphBatch<T>::single(prepared);
  Tape<T> tape;
  const auto streams = run_streams(tape, gnn_model, vit_model, batch,
                                   vision::patchify<T>(image, vit_model.config.patch_size));
  return fuse_streams(tape, fusion_model, streams).logits.value();
}

/// Symmetric InfoNCE over L2-normalized rows; positives on the diagonal.
template <Real T>
Var<T> info_nce_loss(Var<T> graph_embs, Var<T> image_embs, T temperature) {
  if (graph_embs.shape() != image_embs.shape()) {
    throw DimensionError(detail::concat("info_nce_loss: ", to_string(graph_embs.shape()), " vs ",
                                        to_string(image_embs.shape())));
  }
  if (graph_embs.rows() < 2) throw ContractError("info_nce_loss: batch must hold at least 2 pairs");
  if (!(temperature > T(0))) throw ContractError("info_nce_loss: temperature must be positive");
  auto sim = scale(matmul_nt(l2_normalize_rows(graph_embs), l2_normalize_rows(image_embs)),
                   T(1) / temperature);
  std::vector<std::size_t> diag(graph_embs.rows());
  for (std::size_t i = 0; i < diag.size(); ++i) diag[i] = i;
  auto forward = cross_entropy(sim, std::span<const std::size_t>(diag));
  auto backward = cross_entropy(transpose(sim), std::span<const std::size_t>(diag));
  return scale(add(forward, backward), T(0.5));
}

}  // namespace tsg::fusion
