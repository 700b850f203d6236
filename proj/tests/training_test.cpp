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
#include <vector>

#include "test_util.hpp"
#include "tsg/core.hpp"
#include "tsg/datakit/synthetic.hpp"
#include "tsg/training/losses.hpp"
#include "tsg/training/metrics.hpp"
#include "tsg/training/optim.hpp"
#include "tsg/training/trainer.hpp"

namespace tsg {
namespace {

using T64 = Tensor<double>;
using training::Stage;

// ---------------------------------------------------------------- losses

TEST(CrossEntropy, Examples) {
  Tape<double> tape;
  const auto big = cross_entropy(tape.constant(T64({{50.0, -50.0, 0.0}})), {0});
  EXPECT_LT(big.value()(0, 0), 1e-20);
  EXPECT_GE(big.value()(0, 0), 0.0);
  for (std::size_t c : {2u, 5u, 11u}) {
    const auto u = cross_entropy(tape.constant(T64::full(1, c, 0.7)), {c - 1});
    EXPECT_NEAR(u.value()(0, 0), std::log(static_cast<double>(c)), 1e-12);
  }
  EXPECT_THROW(cross_entropy(tape.constant(T64(1, 3)), {3}), ContractError);
}

T64 random_probs(Rng& rng, std::size_t rows, std::size_t classes) {
  T64 p(rows, classes);
  for (std::size_t i = 0; i < rows; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < classes; ++j) s += p(i, j) = rng.uniform(0.01, 1.0);
    for (std::size_t j = 0; j < classes; ++j) p(i, j) /= s;
  }
  return p;
}

scene::LabelMap random_map(Rng& rng, std::uint32_t h, std::uint32_t w, std::uint32_t c) {
  std::vector<scene::ClassId> px(static_cast<std::size_t>(h) * w);
  for (auto& v : px) v = static_cast<scene::ClassId>(rng.below(c));
  return scene::LabelMap(h, w, c, std::move(px));
}

TEST(PixelwiseCrossEntropy, PerfectAndUniform) {
  Rng rng(1);
  const auto map = random_map(rng, 5, 7, 4);
  T64 perfect(35, 4);
  for (std::size_t i = 0; i < 35; ++i) perfect(i, map.pixels()[i]) = 1.0;
  EXPECT_EQ(training::pixelwise_cross_entropy(perfect, map), 0.0);
  const auto uniform = T64::full(35, 4, 0.25);
  EXPECT_NEAR(training::pixelwise_cross_entropy(uniform, map), 35.0 * std::log(4.0), 1e-6);
  EXPECT_NEAR(training::pixelwise_cross_entropy(uniform, map, training::LossReduction::mean),
              std::log(4.0), 1e-12);
}

TEST(PixelwiseCrossEntropy, MatchesDoubleLoopOracle) {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const auto h = static_cast<std::uint32_t>(rng.between(1, 12));
    const auto w = static_cast<std::uint32_t>(rng.between(1, 12));
    const auto c = static_cast<std::uint32_t>(rng.between(2, 6));
    const auto map = random_map(rng, h, w, c);
    const auto probs = random_probs(rng, static_cast<std::size_t>(h) * w, c);
    double oracle = 0.0;
    for (std::uint32_t i = 0; i < h; ++i)
      for (std::uint32_t j = 0; j < w; ++j)
        for (std::uint32_t k = 0; k < c; ++k) {
          const double y = map(i, j) == k ? 1.0 : 0.0;
          if (y > 0.0) oracle -= y * std::log(probs(i * w + j, k));
        }
    EXPECT_NEAR(training::pixelwise_cross_entropy(probs, map), oracle, 1e-9);
  }
}

TEST(PixelwiseCrossEntropy, Errors) {
  Rng rng(3);
  const auto map = random_map(rng, 2, 2, 3);
  auto probs = random_probs(rng, 4, 3);
  probs(2, 1) += 1e-4;
  EXPECT_THROW(training::pixelwise_cross_entropy(probs, map), ContractError);
  EXPECT_THROW(training::pixelwise_cross_entropy(random_probs(rng, 4, 2), map), DimensionError);
  T64 zero(4, 3);
  for (std::size_t i = 0; i < 4; ++i) zero(i, (map.pixels()[i] + 1) % 3) = 1.0;
  EXPECT_THROW(training::pixelwise_cross_entropy(zero, map), NumericError);
}

// ---------------------------------------------------------------- optimizers

ParamStore<double> scalar_store(double w) {
  ParamStore<double> ps;
  ps.add("w", T64(1, 1, w));
  return ps;
}

TEST(Sgd, Examples) {
  auto ps = scalar_store(1.0);
  ps.grad("w")(0, 0) = 0.5;
  training::sgd_step(ps, 0.1, 0.0);
  EXPECT_DOUBLE_EQ(ps.value("w")(0, 0), 0.95);
  EXPECT_EQ(ps.grad("w")(0, 0), 0.0);

  ps = scalar_store(1.0);
  ps.grad("w")(0, 0) = 0.5;
  training::sgd_step(ps, 0.1, 0.1);
  EXPECT_DOUBLE_EQ(ps.value("w")(0, 0), 0.94);

  ps = scalar_store(1.25);
  training::sgd_step(ps, 0.1, 0.0);
  EXPECT_EQ(ps.value("w")(0, 0), 1.25);

  // A zero rate leaves the parameter alone whatever the gradient.
  ps = scalar_store(1.25);
  ps.grad("w")(0, 0) = 3.0;
  training::sgd_step(ps, 0.0, 0.1);
  EXPECT_EQ(ps.value("w")(0, 0), 1.25);
}

// Gradient of a fixed scalar objective f(w) = (w - 3)^2 / 2 + sin(w).
double objective_grad(double w) { return (w - 3.0) + std::cos(w); }

TEST(Sgd, TenStepScalarTrajectory) {
  for (double wd : {0.0, 0.05}) {
    auto ps = scalar_store(0.4);
    ps.add("v", T64({{-1.0, 2.0}}));
    double w = 0.4, v0 = -1.0, v1 = 2.0;
    for (int t = 0; t < 10; ++t) {
      ps.grad("w")(0, 0) = objective_grad(ps.value("w")(0, 0));
      ps.grad("v")(0, 0) = objective_grad(ps.value("v")(0, 0));
      ps.grad("v")(0, 1) = objective_grad(ps.value("v")(0, 1));
      training::sgd_step(ps, 0.07, wd);
      w = w - 0.07 * (objective_grad(w) + wd * w);
      v0 = v0 - 0.07 * (objective_grad(v0) + wd * v0);
      v1 = v1 - 0.07 * (objective_grad(v1) + wd * v1);
      EXPECT_NEAR(ps.value("w")(0, 0), w, 1e-12);
      EXPECT_NEAR(ps.value("v")(0, 0), v0, 1e-12);
      EXPECT_NEAR(ps.value("v")(0, 1), v1, 1e-12);
    }
  }
}

TEST(Adam, FirstStepAndZeroGradient) {
  auto ps = scalar_store(1.0);
  ps.grad("w")(0, 0) = 0.5;
  training::AdamState<double> st;
  training::adam_step(ps, st, {0.1, 0.9, 0.999, 1e-8, 0.0});
  EXPECT_NEAR(ps.value("w")(0, 0), 0.9, 1e-6);
  EXPECT_EQ(st.step, 1u);

  auto z = scalar_store(-2.0);
  training::AdamState<double> st2;
  for (int i = 0; i < 3; ++i) training::adam_step(z, st2, {0.1, 0.9, 0.999, 1e-8, 0.0});
  EXPECT_EQ(z.value("w")(0, 0), -2.0);
}

struct ScalarAdam {
  double w, m = 0.0, v = 0.0;
  int t = 0;
  void step(double g, const training::AdamOptions& o) {
    ++t;
    g += o.weight_decay * w;
    m = o.beta1 * m + (1.0 - o.beta1) * g;
    v = o.beta2 * v + (1.0 - o.beta2) * g * g;
    const double mh = m / (1.0 - std::pow(o.beta1, t));
    const double vh = v / (1.0 - std::pow(o.beta2, t));
    w -= o.lr * mh / (std::sqrt(vh) + o.eps);
  }
};

TEST(Adam, TenStepScalarTrajectoryAcrossStores) {
  for (double wd : {0.0, 0.01}) {
    const training::AdamOptions o{0.05, 0.9, 0.999, 1e-8, wd};
    auto a = scalar_store(0.4);
    ParamStore<double> b;
    b.add("u", T64(1, 1, -1.5));
    ScalarAdam ra{0.4}, rb{-1.5};
    training::AdamState<double> st;
    ParamStore<double>* stores[] = {&a, &b};
    for (int t = 0; t < 10; ++t) {
      a.grad("w")(0, 0) = objective_grad(a.value("w")(0, 0));
      b.grad("u")(0, 0) = objective_grad(b.value("u")(0, 0));
      training::adam_step<double>(std::span<ParamStore<double>* const>(stores), st, o);
      ra.step(objective_grad(ra.w), o);
      rb.step(objective_grad(rb.w), o);
      EXPECT_NEAR(a.value("w")(0, 0), ra.w, 1e-12);
      EXPECT_NEAR(b.value("u")(0, 0), rb.w, 1e-12);
    }
    EXPECT_EQ(st.step, 10u);
  }
}

// ---------------------------------------------------------------- training

struct Fixture {
  datakit::SyntheticSpec spec;
  std::vector<training::PreparedSample<double>> train, test;
};

Fixture make_data(datakit::LabelRule rule, std::uint32_t ntrain, std::uint32_t ntest, std::uint64_t seed) {
  Fixture f;
  f.spec.label_rule = rule;
  f.spec.height = f.spec.width = 8;
  f.spec.num_train = ntrain;
  f.spec.num_test = ntest;
  f.spec.seed = seed;
  f.spec.min_extent = 0.3;
  f.spec.max_extent = 0.6;
  for (std::size_t i = 0; i < ntrain + ntest; ++i) {
    const auto s = datakit::generate_sample(f.spec, i);
    auto p = training::prepare_sample<double>(s, {}, 4);
    (s.split == datakit::Split::train ? f.train : f.test).push_back(std::move(p));
  }
  return f;
}

training::ModelBundle<double> make_models(std::uint64_t seed, fusion::FusionMode mode = fusion::FusionMode::concat) {
  training::ModelBundle<double> m;
  gnn::GnnConfig g;
  g.input_dim = 6;
  g.hidden_dim = 8;
  m.gnn = gnn::GnnModel<double>::create(g, seed);
  vision::VitConfig v;
  v.image_height = v.image_width = 8;
  v.channels = 1;
  v.patch_size = 4;
  v.embed_dim = 8;
  v.depth = 1;
  v.num_heads = 2;
  v.mlp_ratio = 2;
  m.vit = vision::VitModel<double>::create(v, seed + 1);
  fusion::FusionConfig fc;
  fc.mode = mode;
  fc.graph_dim = 8;
  fc.image_dim = 8;
  fc.fused_dim = 8;
  fc.head_hidden = 8;
  m.fusion = fusion::FusionModel<double>::create(fc, seed + 2);
  return m;
}

TEST(Train, ConfigAndInputErrors) {
  auto data = make_data(datakit::LabelRule::motif, 8, 4, 5);
  auto models = make_models(1);
  training::TrainConfig cfg;
  cfg.epochs = 0;
  EXPECT_THROW(training::train<double>(models, data.train, data.test, cfg), ConfigError);
  cfg = {};
  cfg.learning_rate = 0.0;
  EXPECT_THROW(training::train<double>(models, data.train, data.test, cfg), ConfigError);
  cfg = {};
  EXPECT_THROW(training::train<double>(models, {}, data.test, cfg), DataError);
  auto no_vit = models;
  no_vit.vit.reset();
  cfg.stage = Stage::image_stream;
  EXPECT_THROW(training::train<double>(no_vit, data.train, data.test, cfg), ConfigError);
  cfg.stage = Stage::fusion;
  EXPECT_THROW(training::train<double>(no_vit, data.train, data.test, cfg), ConfigError);
  auto bad = data.train;
  bad[0].label = 5;
  cfg.stage = Stage::graph_stream;
  EXPECT_THROW(training::train<double>(models, bad, data.test, cfg), ConfigError);
  EXPECT_THROW(training::parse_stage("warmup"), ConfigError);
  EXPECT_THROW(training::parse_optimizer("rmsprop"), ConfigError);
}

class StageLearns : public ::testing::TestWithParam<Stage> {};

TEST_P(StageLearns, LossDecreasesOverFirstFiveEpochs) {
  const Stage stage = GetParam();
  // Brightness is linearly separable from the image; the motif is a fixed
  // function of the graph.
  const auto rule = stage == Stage::image_stream ? datakit::LabelRule::image_pattern : datakit::LabelRule::motif;
  auto data = make_data(rule, 64, 16, 7);
  auto models = make_models(3);
  training::TrainConfig cfg;
  cfg.stage = stage;
  cfg.learning_rate = 1e-2;
  cfg.batch_size = 16;
  cfg.epochs = 5;
  if (stage == Stage::fusion) cfg.freeze_graph = cfg.freeze_image = false;
  const auto h = training::train<double>(models, data.train, data.test, cfg);
  ASSERT_EQ(h.epochs.size(), 5u);
  for (std::size_t e = 1; e < 5; ++e)
    EXPECT_LT(h.epochs[e].train_loss, h.epochs[e - 1].train_loss) << "epoch " << e + 1;
  for (const auto& e : h.epochs) {
    EXPECT_GE(e.train_accuracy, 0.0);
    EXPECT_LE(e.train_accuracy, 1.0);
    ASSERT_TRUE(e.test_accuracy.has_value());
    EXPECT_GE(*e.test_accuracy, 0.0);
    EXPECT_LE(*e.test_accuracy, 1.0);
  }
}

INSTANTIATE_TEST_SUITE_P(Stages, StageLearns,
                         ::testing::Values(Stage::graph_stream, Stage::image_stream, Stage::fusion,
                                           Stage::end_to_end),
                         [](const auto& info) { return std::string(training::to_string(info.param)); });

TEST(Train, SameSeedSameHistoryAndParams) {
  auto data = make_data(datakit::LabelRule::xor_rule, 24, 8, 8);
  for (auto mode : {fusion::FusionMode::cross_attention, fusion::FusionMode::concat}) {
    training::TrainConfig cfg;
    cfg.stage = Stage::end_to_end;
    cfg.epochs = 3;
    cfg.batch_size = 5;
    cfg.seed = 99;
    auto a = make_models(4, mode), b = make_models(4, mode);
    const auto ha = training::train<double>(a, data.train, data.test, cfg);
    const auto hb = training::train<double>(b, data.train, data.test, cfg);
    EXPECT_EQ(training::metrics_csv(ha), training::metrics_csv(hb));
    EXPECT_EQ(ha.epochs, hb.epochs);
    EXPECT_TRUE(a.gnn->params == b.gnn->params);
    EXPECT_TRUE(a.vit->params == b.vit->params);
    EXPECT_TRUE(a.fusion->params == b.fusion->params);
    cfg.seed = 100;
    auto c = make_models(4, mode);
    training::train<double>(c, data.train, data.test, cfg);
    EXPECT_FALSE(a.fusion->params == c.fusion->params);
  }
}

TEST(Train, FusionStageLeavesFrozenBackbonesBitIdentical) {
  auto data = make_data(datakit::LabelRule::xor_rule, 24, 8, 9);
  for (auto mode : {fusion::FusionMode::cross_attention, fusion::FusionMode::concat,
                    fusion::FusionMode::vote_soft}) {
    auto models = make_models(5, mode);
    const auto gnn_before = models.gnn->params, vit_before = models.vit->params;
    const auto fuse_before = models.fusion->params;
    training::TrainConfig cfg;
    cfg.stage = Stage::fusion;
    cfg.epochs = 2;
    cfg.batch_size = 8;
    cfg.learning_rate = 1e-2;
    training::train<double>(models, data.train, data.test, cfg);
    EXPECT_TRUE(models.gnn->params == gnn_before);
    EXPECT_TRUE(models.vit->params == vit_before);
    EXPECT_EQ(models.fusion->params == fuse_before, fusion::is_vote(mode));

    // Unfreezing only the graph stream moves it and nothing else.
    if (!fusion::is_vote(mode)) {
      cfg.freeze_graph = false;
      training::train<double>(models, data.train, data.test, cfg);
      EXPECT_FALSE(models.gnn->params == gnn_before);
      EXPECT_TRUE(models.vit->params == vit_before);
    } else {
      cfg.stage = Stage::end_to_end;
      EXPECT_THROW(training::train<double>(models, data.train, data.test, cfg), ConfigError);
    }
  }
}

TEST(Train, CachedStreamsMatchLiveForward) {
  auto data = make_data(datakit::LabelRule::xor_rule, 12, 0, 10);
  const auto models = make_models(6, fusion::FusionMode::cross_attention);
  training::StageRunner<double> live(models, Stage::fusion), cached(models, Stage::fusion);
  cached.cache_streams(data.train);
  const std::size_t idx[] = {3, 0, 7, 11};
  Tape<double> t1, t2;
  const auto a = live.forward(t1, data.train, idx).logits.value();
  const auto b = cached.forward(t2, data.train, idx).logits.value();
  EXPECT_LT(testing::max_abs_diff(a, b), 1e-12);
}

TEST(Train, InfoNceAuxiliaryTermTrains) {
  auto data = make_data(datakit::LabelRule::xor_rule, 16, 4, 11);
  auto models = make_models(7, fusion::FusionMode::cross_attention);
  training::TrainConfig cfg;
  cfg.stage = Stage::end_to_end;
  cfg.epochs = 2;
  cfg.batch_size = 8;
  cfg.info_nce_weight = 0.5;
  cfg.temperature = 0.2;
  const auto before = models.fusion->params;
  EXPECT_NO_THROW(training::train<double>(models, data.train, data.test, cfg));
  EXPECT_FALSE(models.fusion->params == before);
  auto concat = make_models(7, fusion::FusionMode::concat);
  EXPECT_THROW(training::train<double>(concat, data.train, data.test, cfg), ConfigError);
}

// ---------------------------------------------------------------- evaluate

TEST(Evaluate, ConstantPredictorScoresClassShare) {
  auto data = make_data(datakit::LabelRule::motif, 40, 0, 12);
  auto models = make_models(8);
  models.gnn->params.set("gnn.head.w", T64(8, 2));
  const auto r = training::evaluate<double>(models, Stage::graph_stream, data.train);
  EXPECT_EQ(r.count, 40u);
  EXPECT_DOUBLE_EQ(r.accuracy, 0.5);  // balanced labels, ties go to class 0
  EXPECT_NEAR(r.loss, std::log(2.0), 1e-12);
}

TEST(Evaluate, MatchesHandCountAndPerfectRelabel) {
  auto data = make_data(datakit::LabelRule::motif, 10, 0, 13);
  const auto models = make_models(9);
  const auto r = training::evaluate<double>(models, Stage::graph_stream, data.train, 3);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < 10; ++i) {
    const auto logits = gnn::gnn_classify(
        scene::build_scene_graph(datakit::generate_sample(data.spec, i).label_map), *models.gnn).logits;
    const std::uint32_t pred = logits(0, 1) > logits(0, 0) ? 1 : 0;
    EXPECT_EQ(r.predictions[i], pred);
    correct += pred == data.train[i].label;
  }
  EXPECT_DOUBLE_EQ(r.accuracy, static_cast<double>(correct) / 10.0);

  for (std::size_t i = 0; i < 10; ++i) data.train[i].label = r.predictions[i];
  EXPECT_DOUBLE_EQ(training::evaluate<double>(models, Stage::graph_stream, data.train).accuracy, 1.0);
}

TEST(Metrics, CsvAndJsonLayout) {
  training::MetricsHistory h;
  h.stage = "graph_stream";
  h.epochs.push_back({1, 0.5, 0.75, 0.25, 1.0});
  h.epochs.push_back({2, 0.125, 1.0, std::nullopt, std::nullopt});
  h.wall_seconds = 3.0;
  EXPECT_EQ(training::metrics_csv(h),
            "epoch,split,loss,accuracy\n1,train,0.5,0.75\n1,test,0.25,1\n2,train,0.125,1\n");
  const auto j = training::metrics_json(h);
  EXPECT_EQ(j["epochs"], 2);
  EXPECT_EQ(j["final"]["train_loss"], 0.125);
  EXPECT_FALSE(j.dump().find("wall") != std::string::npos);
  EXPECT_EQ(training::format_number(0.1), "0.1");
}

}  // namespace
}  // namespace tsg
