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

// A small patch transformer. Each block is pre-norm:
//   x += Attn(LN1(x));  x += MLP(LN2(x))
// with a ReLU MLP of width mlp_ratio * d. The encoder has no final norm, so
// a depth-0 model returns the embedded tokens unchanged.

#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tsg/core/params.hpp"
#include "tsg/core/random.hpp"
#include "tsg/core/tape.hpp"
#include "tsg/vision/image.hpp"

namespace tsg::vision {

struct VitConfig {
  std::uint32_t image_height = 32;
  std::uint32_t image_width = 32;
  std::uint32_t channels = 3;
  std::uint32_t patch_size = 4;
  std::size_t embed_dim = 64;
  std::size_t depth = 4;
  std::size_t num_heads = 4;
  std::size_t mlp_ratio = 4;
  std::size_t num_outputs = 2;

  std::size_t num_patches() const {
    return static_cast<std::size_t>(image_height / patch_size) * (image_width / patch_size);
  }
  std::size_t tokens() const { return num_patches() + 1; }
  std::size_t patch_dim() const {
    return static_cast<std::size_t>(patch_size) * patch_size * channels;
  }

  void validate() const {
    if (patch_size == 0) throw ConfigError("vit: patch_size must be positive");
    if (image_height == 0 || image_width == 0) throw ConfigError("vit: image size must be positive");
    if (image_height % patch_size != 0 || image_width % patch_size != 0) {
      throw ConfigError(detail::concat("vit: image ", image_height, "x", image_width,
                                       " is not divisible by patch size ", patch_size));
    }
    if (channels != 1 && channels != 3) throw ConfigError("vit: channels must be 1 or 3");
    if (embed_dim == 0 || num_heads == 0 || embed_dim % num_heads != 0) {
      throw ConfigError(detail::concat("vit: embed_dim ", embed_dim,
                                       " must be a positive multiple of num_heads ", num_heads));
    }
    if (mlp_ratio == 0) throw ConfigError("vit: mlp_ratio must be positive");
    if (num_outputs == 0) throw ConfigError("vit: num_outputs must be positive");
  }

  friend bool operator==(const VitConfig&, const VitConfig&) = default;
};

inline std::string block_param(std::size_t block, std::string_view what) {
  return detail::concat("vit.block", block, ".", what);
}

template <Real T>
struct VitModel {
  VitConfig config;
  ParamStore<T> params;

  static VitModel create(const VitConfig& config, std::uint64_t seed) {
    config.validate();
    VitModel m{config, {}};
    const std::size_t d = config.embed_dim, hid = config.mlp_ratio * d;
    auto xavier = [&](const std::string& name, Shape s) {
      m.params.add(name, init_params<T>(s, InitScheme::xavier(), derive_seed(seed, name)));
    };
    auto zeros = [&](const std::string& name, Shape s) { m.params.add(name, Tensor<T>(s.rows, s.cols)); };
    auto ones = [&](const std::string& name, Shape s) {
      m.params.add(name, Tensor<T>::full(s.rows, s.cols, T(1)));
    };
    xavier("vit.patch.w", {config.patch_dim(), d});
    zeros("vit.patch.b", {1, d});
    xavier("vit.cls", {1, d});
    xavier("vit.pos", {config.tokens(), d});
    for (std::size_t b = 0; b < config.depth; ++b) {
      ones(block_param(b, "ln1.g"), {1, d});
      zeros(block_param(b, "ln1.b"), {1, d});
      for (const char* p : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"}) xavier(block_param(b, p), {d, d});
      for (const char* p : {"attn.bq", "attn.bk", "attn.bv", "attn.bo"}) zeros(block_param(b, p), {1, d});
      ones(block_param(b, "ln2.g"), {1, d});
      zeros(block_param(b, "ln2.b"), {1, d});
      xavier(block_param(b, "mlp.w1"), {d, hid});
      zeros(block_param(b, "mlp.b1"), {1, hid});
      xavier(block_param(b, "mlp.w2"), {hid, d});
      zeros(block_param(b, "mlp.b2"), {1, d});
    }
    xavier("vit.head.w", {d, config.num_outputs});
    zeros("vit.head.b", {1, config.num_outputs});
    return m;
  }
};

template <Real T>
struct VitOutput {
  Var<T> tokens;  // (B * tokens) x d, image b occupies rows [b*tokens, (b+1)*tokens)
  Var<T> cls;     // B x d
  Var<T> logits;  // B x num_outputs
  std::size_t batch = 0;
};

/// Row-stacks patchified images into one (B * num_patches) x patch_dim input.
template <Real T>
Tensor<T> stack_patches(std::span<const Tensor<T>* const> patches) {
  if (patches.empty()) throw ContractError("stack_patches: empty batch");
  const std::size_t n = patches[0]->rows(), c = patches[0]->cols();
  Tensor<T> out(n * patches.size(), c);
  auto dst = out.values().begin();
  for (const auto* p : patches) {
    if (p->rows() != n || p->cols() != c) throw DimensionError("stack_patches: shape mismatch");
    dst = std::copy(p->values().begin(), p->values().end(), dst);
  }
  return out;
}

namespace internal {

template <Real T>
Var<T> linear(Tape<T>& tape, const ParamStore<T>& p, Var<T> x, const std::string& w,
              const std::string& b) {
  return add_row(matmul(x, tape.param(p, w)), tape.param(p, b));
}

}  // namespace internal

/// Encodes a batch given as stacked patches (see stack_patches). When
/// `attention` is given it receives every softmax matrix, ordered by block,
/// then image, then head.
template <Real T>
VitOutput<T> vit_forward(Tape<T>& tape, const VitModel<T>& model, const Tensor<T>& patches,
                         std::vector<Tensor<T>>* attention = nullptr) {
  const auto& cfg = model.config;
  const auto& p = model.params;
  const std::size_t np = cfg.num_patches(), nt = cfg.tokens(), d = cfg.embed_dim;
  if (patches.cols() != cfg.patch_dim() || patches.rows() == 0 || patches.rows() % np != 0) {
    throw DimensionError(detail::concat("vit: patches are ", to_string(patches.shape()),
                                        ", expected a multiple of ", np, " rows of width ",
                                        cfg.patch_dim()));
  }
  const std::size_t batch = patches.rows() / np;
  if (attention) attention->clear();

  auto embedded = internal::linear(tape, p, tape.constant(patches), "vit.patch.w", "vit.patch.b");
  auto cls = tape.param(p, "vit.cls");
  std::vector<Var<T>> parts;
  parts.reserve(2 * batch);
  for (std::size_t b = 0; b < batch; ++b) {
    parts.push_back(cls);
    parts.push_back(slice_rows(embedded, b * np, np));
  }
  auto x = add_tiled(concat_rows<T>(parts), tape.param(p, "vit.pos"));

  const std::size_t heads = cfg.num_heads, dh = d / heads;
  const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(dh));
  for (std::size_t blk = 0; blk < cfg.depth; ++blk) {
    auto y = layer_norm(x, tape.param(p, block_param(blk, "ln1.g")),
                        tape.param(p, block_param(blk, "ln1.b")));
    auto q = internal::linear(tape, p, y, block_param(blk, "attn.wq"), block_param(blk, "attn.bq"));
    auto k = internal::linear(tape, p, y, block_param(blk, "attn.wk"), block_param(blk, "attn.bk"));
    auto v = internal::linear(tape, p, y, block_param(blk, "attn.wv"), block_param(blk, "attn.bv"));
    std::vector<Var<T>> per_image;
    per_image.reserve(batch);
    for (std::size_t b = 0; b < batch; ++b) {
      std::vector<Var<T>> per_head;
      per_head.reserve(heads);
      for (std::size_t h = 0; h < heads; ++h) {
        auto qh = slice(q, b * nt, nt, h * dh, dh);
        auto kh = slice(k, b * nt, nt, h * dh, dh);
        auto vh = slice(v, b * nt, nt, h * dh, dh);
        auto alpha = rowwise_softmax(scale(matmul_nt(qh, kh), inv_sqrt));
        if (attention) attention->push_back(alpha.value());
        per_head.push_back(matmul(alpha, vh));
      }
      per_image.push_back(heads == 1 ? per_head[0] : concat_cols<T>(per_head));
    }
    auto attn = batch == 1 ? per_image[0] : concat_rows<T>(per_image);
    x = add(x, internal::linear(tape, p, attn, block_param(blk, "attn.wo"),
                                block_param(blk, "attn.bo")));
    auto z = layer_norm(x, tape.param(p, block_param(blk, "ln2.g")),
                        tape.param(p, block_param(blk, "ln2.b")));
    auto hidden = activation(
        internal::linear(tape, p, z, block_param(blk, "mlp.w1"), block_param(blk, "mlp.b1")),
        Activation::relu());
    x = add(x, internal::linear(tape, p, hidden, block_param(blk, "mlp.w2"),
                                block_param(blk, "mlp.b2")));
  }

  std::vector<Var<T>> cls_rows;
  cls_rows.reserve(batch);
  for (std::size_t b = 0; b < batch; ++b) cls_rows.push_back(slice_rows(x, b * nt, 1));
  auto cls_out = batch == 1 ? cls_rows[0] : concat_rows<T>(cls_rows);
  auto logits = internal::linear(tape, p, cls_out, "vit.head.w", "vit.head.b");
  return {x, cls_out, logits, batch};
}

template <Real T>
struct VitEncoding {
  Tensor<T> cls_embedding;  // 1 x d
  Tensor<T> tokens;         // tokens x d
  Tensor<T> logits;         // 1 x num_outputs
};

template <Real T>
void require_image_fits(const ImageTensor& img, const VitConfig& cfg) {
  if (img.height() != cfg.image_height || img.width() != cfg.image_width ||
      img.channels() != cfg.channels) {
    throw DimensionError(detail::concat("vit: image is ", img.height(), "x", img.width(), "x",
                                        img.channels(), " but the model expects ",
                                        cfg.image_height, "x", cfg.image_width, "x",
                                        cfg.channels));
  }
}

/// Inference on one image: cls embedding, all encoder tokens and logits.
template <Real T>
VitEncoding<T> encode(const ImageTensor& img, const VitModel<T>& model) {
  require_image_fits<T>(img, model.config);
  Tape<T> tape;
  const auto out = vit_forward(tape, model, patchify<T>(img, model.config.patch_size));
  return {out.cls.value(), out.tokens.value(), out.logits.value()};
}

template <Real T>
Tensor<T> vit_classify(const ImageTensor& img, const VitModel<T>& model) {
  return encode(img, model).logits;
}

}  // namespace tsg::vision
