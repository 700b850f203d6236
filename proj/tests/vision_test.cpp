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

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <vector>

#include "test_util.hpp"
#include "tsg/core.hpp"
#include "tsg/vision/image.hpp"
#include "tsg/vision/vit.hpp"

namespace tsg {
namespace {

using testing::max_abs_diff;
using T64 = Tensor<double>;
using vision::ImageTensor;

ImageTensor random_image(Rng& rng, std::uint32_t h, std::uint32_t w, std::uint32_t c) {
  std::vector<float> v(static_cast<std::size_t>(h) * w * c);
  for (auto& x : v) x = static_cast<float>(rng.uniform());
  return ImageTensor(h, w, c, std::move(v));
}

vision::VitConfig tiny_config(std::size_t depth = 2) {
  vision::VitConfig cfg;
  cfg.image_height = 4;
  cfg.image_width = 4;
  cfg.channels = 1;
  cfg.patch_size = 2;
  cfg.embed_dim = 8;
  cfg.depth = depth;
  cfg.num_heads = 2;
  cfg.num_outputs = 3;
  return cfg;
}

TEST(ImageTensor, ValidatesShapeAndRange) {
  EXPECT_THROW(ImageTensor(0, 2, 1), ContractError);
  EXPECT_THROW(ImageTensor(2, 2, 2), ContractError);
  EXPECT_THROW(ImageTensor(1, 2, 1, std::vector<float>{0.5f}), ContractError);
  EXPECT_THROW(ImageTensor(1, 2, 1, std::vector<float>{0.5f, 1.5f}), DataError);
  EXPECT_THROW(ImageTensor(1, 1, 1, std::vector<float>{std::nanf("")}), DataError);
}

TEST(ImageIo, RawRoundTripIsExact) {
  Rng rng(1);
  const auto dir = testing::scratch_dir("img_raw");
  for (std::uint32_t c : {1u, 3u}) {
    const auto img = random_image(rng, 5, 7, c);
    vision::write_image_raw(dir / "a.imgt", img);
    EXPECT_EQ(vision::read_image(dir / "a.imgt"), img);
  }
}

TEST(ImageIo, PngRoundTripQuantizes) {
  Rng rng(2);
  const auto dir = testing::scratch_dir("img_png");
  for (std::uint32_t c : {1u, 3u}) {
    const auto img = random_image(rng, 6, 4, c);
    vision::write_image_png(dir / "a.png", img);
    const auto back = vision::read_image(dir / "a.png");
    ASSERT_EQ(back.channels(), c);
    for (std::size_t i = 0; i < img.values().size(); ++i)
      EXPECT_NEAR(back.values()[i], img.values()[i], 0.5 / 255.0 + 1e-6);
  }
}

TEST(ImageIo, ReportsTruncatedAndUnknownFiles) {
  const auto dir = testing::scratch_dir("img_bad");
  {
    std::ofstream os(dir / "t.imgt", std::ios::binary);
    os.write("IMGT", 4);
    le::put_u32(os, 2);
    le::put_u32(os, 2);
    le::put_u32(os, 1);
    le::put_f32(os, 0.5f);
  }
  EXPECT_THROW(vision::read_image(dir / "t.imgt"), DataError);
  {
    std::ofstream os(dir / "x.bin", std::ios::binary);
    os << "garbage!";
  }
  EXPECT_THROW(vision::read_image(dir / "x.bin"), DataError);
  EXPECT_THROW(vision::read_image(dir / "missing.png"), DataError);
}

TEST(Patchify, ShapesAndConstants) {
  const auto tokens = vision::patchify<double>(ImageTensor(8, 8, 1, 0.25f), 4);
  EXPECT_EQ(tokens.shape(), (Shape{4, 16}));
  for (double v : tokens.values()) EXPECT_EQ(v, 0.25);
  EXPECT_THROW(vision::patchify<double>(ImageTensor(6, 8, 1), 4), DimensionError);
  EXPECT_THROW(vision::patchify<double>(ImageTensor(8, 8, 1), 0), ContractError);
}

TEST(Patchify, HandLayout) {
  // Pixel (y, x) holds (4y + x) / 16.
  std::vector<float> v(16);
  for (int i = 0; i < 16; ++i) v[i] = static_cast<float>(i) / 16.0f;
  const auto t = vision::patchify<double>(ImageTensor(4, 4, 1, v), 2);
  auto at = [](int idx) { return idx / 16.0; };
  EXPECT_EQ(t, T64({{at(0), at(1), at(4), at(5)},
                    {at(2), at(3), at(6), at(7)},
                    {at(8), at(9), at(12), at(13)},
                    {at(10), at(11), at(14), at(15)}}));
}

TEST(Patchify, ChannelMajorWithinPatch) {
  // 2x2 RGB, one patch: channel 0 block first, each block row-major.
  std::vector<float> v;
  for (int px = 0; px < 4; ++px)
    for (int c = 0; c < 3; ++c) v.push_back(static_cast<float>(c * 4 + px) / 12.0f);
  const auto t = vision::patchify<double>(ImageTensor(2, 2, 3, v), 2);
  ASSERT_EQ(t.shape(), (Shape{1, 12}));
  for (int i = 0; i < 12; ++i) EXPECT_DOUBLE_EQ(t(0, i), static_cast<double>(static_cast<float>(i) / 12.0f));
}

TEST(Vit, DepthZeroReturnsClsPlusPosition) {
  const auto model = vision::VitModel<double>::create(tiny_config(0), 5);
  Rng rng(3);
  const auto img = random_image(rng, 4, 4, 1);
  const auto enc = vision::encode(img, model);
  const auto& cls = model.params.value("vit.cls");
  const auto& pos = model.params.value("vit.pos");
  for (std::size_t j = 0; j < 8; ++j) EXPECT_DOUBLE_EQ(enc.cls_embedding(0, j), cls(0, j) + pos(0, j));
}

TEST(Vit, ResidualPathIsIdentityWhenOutputsZeroed) {
  auto model = vision::VitModel<double>::create(tiny_config(2), 6);
  for (std::size_t b = 0; b < 2; ++b) {
    for (const char* n : {"attn.wo", "attn.bo", "mlp.w2", "mlp.b2"}) {
      const auto name = vision::block_param(b, n);
      model.params.set(name, T64(model.params.value(name).rows(), model.params.value(name).cols()));
    }
  }
  Rng rng(4);
  const auto img = random_image(rng, 4, 4, 1);
  const auto enc = vision::encode(img, model);
  const auto patches = vision::patchify<double>(img, 2);
  auto emb = kernels::matmul(patches, model.params.value("vit.patch.w"));
  const auto& pos = model.params.value("vit.pos");
  const auto& pb = model.params.value("vit.patch.b");
  for (std::size_t j = 0; j < 8; ++j)
    EXPECT_NEAR(enc.tokens(0, j), model.params.value("vit.cls")(0, j) + pos(0, j), 1e-15);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 8; ++j)
      EXPECT_NEAR(enc.tokens(i + 1, j), emb(i, j) + pb(0, j) + pos(i + 1, j), 1e-12);
}

TEST(Vit, AttentionRowsSumToOne) {
  const auto model = vision::VitModel<double>::create(tiny_config(2), 7);
  Rng rng(5);
  std::vector<T64> patches;
  for (int i = 0; i < 3; ++i) patches.push_back(vision::patchify<double>(random_image(rng, 4, 4, 1), 2));
  const T64* ptrs[] = {&patches[0], &patches[1], &patches[2]};
  Tape<double> tape;
  std::vector<T64> att;
  vision::vit_forward(tape, model, vision::stack_patches<double>(ptrs), &att);
  ASSERT_EQ(att.size(), 2u * 3u * 2u);
  for (const auto& a : att) {
    ASSERT_EQ(a.shape(), (Shape{5, 5}));
    for (std::size_t i = 0; i < 5; ++i) {
      double s = 0.0;
      for (double v : a.row(i)) s += v;
      EXPECT_NEAR(s, 1.0, 1e-9);
    }
  }
}

TEST(Vit, BatchedForwardMatchesSingleImages) {
  const auto model = vision::VitModel<double>::create(tiny_config(2), 8);
  Rng rng(6);
  std::vector<ImageTensor> imgs;
  std::vector<T64> patches;
  for (int i = 0; i < 4; ++i) {
    imgs.push_back(random_image(rng, 4, 4, 1));
    patches.push_back(vision::patchify<double>(imgs.back(), 2));
  }
  std::vector<const T64*> ptrs;
  for (const auto& p : patches) ptrs.push_back(&p);
  Tape<double> tape;
  const auto out = vision::vit_forward(tape, model, vision::stack_patches<double>(ptrs));
  for (std::size_t i = 0; i < imgs.size(); ++i) {
    const auto enc = vision::encode(imgs[i], model);
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(out.logits.value()(i, j), enc.logits(0, j), 1e-12);
    for (std::size_t j = 0; j < 8; ++j) EXPECT_NEAR(out.cls.value()(i, j), enc.cls_embedding(0, j), 1e-12);
  }
}

TEST(Vit, ClassifyShapesZeroHeadAndDeterminism) {
  auto a = vision::VitModel<double>::create(tiny_config(1), 9);
  const auto b = vision::VitModel<double>::create(tiny_config(1), 9);
  EXPECT_TRUE(a.params == b.params);
  Rng rng(7);
  const auto img = random_image(rng, 4, 4, 1);
  const auto la = vision::vit_classify(img, a);
  EXPECT_EQ(la.shape(), (Shape{1, 3}));
  EXPECT_EQ(la, vision::vit_classify(img, b));
  a.params.set("vit.head.w", T64(8, 3));
  EXPECT_EQ(vision::vit_classify(img, a), T64(1, 3));
  EXPECT_THROW(vision::vit_classify(random_image(rng, 8, 4, 1), a), DimensionError);
  EXPECT_THROW(vision::vit_classify(random_image(rng, 4, 4, 3), a), DimensionError);
}

TEST(Vit, ConfigValidation) {
  auto cfg = tiny_config();
  cfg.num_heads = 3;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = tiny_config();
  cfg.image_width = 5;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Vit, FullGradientCheckTwoBlocks) {
  auto model = vision::VitModel<double>::create(tiny_config(2), 10);
  Rng rng(8);
  // Move biases and norm gains off their constant init.
  for (const auto& name : model.params.names())
    for (auto& x : model.params.value(name).values()) x += rng.uniform(-0.2, 0.2);
  std::vector<T64> patches;
  for (int i = 0; i < 2; ++i) patches.push_back(vision::patchify<double>(random_image(rng, 4, 4, 1), 2));
  const T64* ptrs[] = {&patches[0], &patches[1]};
  auto stacked = std::make_shared<T64>(vision::stack_patches<double>(ptrs));
  const auto cfg = model.config;
  ScalarFn f = [stacked, cfg](Tape<double>& t, const ParamStore<double>& ps) {
    vision::VitModel<double> m{cfg, ps};
    const std::size_t labels[] = {2, 0};
    return cross_entropy(vision::vit_forward(t, m, *stacked).logits,
                         std::span<const std::size_t>(labels));
  };
  const auto r = finite_difference_check(f, model.params, 1e-5);
  EXPECT_LT(r.max_relative_error, 1e-4) << r.worst_param << "[" << r.worst_index << "] analytic "
                                        << r.worst_analytic << " numeric " << r.worst_numeric;
  EXPECT_GT(r.entries_checked, 1000u);
}

}  // namespace
}  // namespace tsg
