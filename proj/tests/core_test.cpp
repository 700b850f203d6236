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
#include <memory>
#include <sstream>

#include "test_util.hpp"
#include "tsg/core.hpp"

namespace tsg {
namespace {

using testing::max_abs_diff;
using testing::random_dim;
using testing::random_tensor;
using T64 = Tensor<double>;

TEST(Matmul, IdentityIsNeutral) {
  T64 m{{0.5, -2.0}, {3.0, 7.25}};
  EXPECT_EQ(matmul(T64::identity(2), m), m);
}

TEST(Matmul, HandExample) {
  T64 a{{1, 2}, {3, 4}};
  T64 b{{1}, {1}};
  EXPECT_EQ(matmul(a, b), (T64{{3}, {7}}));
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  T64 a(2, 3), b(2, 3);
  try {
    matmul(a, b);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("2x3"), std::string::npos);
    EXPECT_NE(msg.find("by 2x3"), std::string::npos);
  }
}

TEST(Matmul, AssociativeOnRandomChains) {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const auto n = random_dim(rng), k = random_dim(rng), m = random_dim(rng), p = random_dim(rng);
    auto a = random_tensor(rng, n, k), b = random_tensor(rng, k, m), c = random_tensor(rng, m, p);
    EXPECT_LT(max_abs_diff(matmul(matmul(a, b), c), matmul(a, matmul(b, c))), 1e-6);
  }
}

TEST(Softmax, Examples) {
  EXPECT_EQ(rowwise_softmax(T64{{5}}), (T64{{1.0}}));
  EXPECT_EQ(rowwise_softmax(T64{{0, 0}}), (T64{{0.5, 0.5}}));
  auto s = rowwise_softmax(T64{{1, 2, 3}});
  EXPECT_NEAR(s(0, 0), 0.0900, 1e-4);
  EXPECT_NEAR(s(0, 1), 0.2447, 1e-4);
  EXPECT_NEAR(s(0, 2), 0.6652, 1e-4);
}

TEST(Softmax, MaskedEntriesAreExactlyZero) {
  Mask mask(2, 3);
  mask.set(0, 1, false);
  mask.set(1, 0, false);
  mask.set(1, 2, false);
  auto s = rowwise_softmax(T64{{1, 100, 2}, {4, -3, 9}}, &mask);
  EXPECT_EQ(s(0, 1), 0.0);
  EXPECT_NEAR(s(0, 0) + s(0, 2), 1.0, 1e-12);
  EXPECT_EQ(s(1, 0), 0.0);
  EXPECT_EQ(s(1, 1), 1.0);
  EXPECT_EQ(s(1, 2), 0.0);
}

TEST(Softmax, FullyMaskedRowIsDegenerate) {
  Mask mask(2, 2);
  mask.set(1, 0, false);
  mask.set(1, 1, false);
  EXPECT_THROW(rowwise_softmax(T64{{1, 2}, {3, 4}}, &mask), DegenerateRowError);
}

TEST(Softmax, RowsSumToOneAndShiftInvariant) {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    auto x = random_tensor(rng, random_dim(rng), random_dim(rng), -20, 20);
    auto s = rowwise_softmax(x);
    auto shifted = x;
    const double c = rng.uniform(-50, 50);
    for (std::size_t i = 0; i < x.rows(); ++i) {
      double total = 0;
      for (double v : s.row(i)) total += v;
      EXPECT_NEAR(total, 1.0, 1e-9);
      for (auto& v : shifted.row(i)) v += c;
    }
    EXPECT_LT(max_abs_diff(s, rowwise_softmax(shifted)), 1e-9);
  }
}

TEST(ActivationTest, Examples) {
  T64 x{{-1, 2}};
  EXPECT_EQ(activation(x, Activation::relu()), (T64{{0, 2}}));
  EXPECT_EQ(activation(x, Activation::leaky_relu(0.2)), (T64{{-0.2, 2}}));
  EXPECT_EQ(activation(x, Activation::identity()), x);
  EXPECT_THROW(Activation::leaky_relu(1.5), ContractError);
}

TEST(ActivationTest, ReluSubgradientAtZeroIsZero) {
  Tape<double> tape;
  auto x = tape.watch(T64{{0.0, 1.0}});
  auto loss = sum(activation(x, Activation::relu()));
  tape.backward(loss);
  EXPECT_EQ(tape.grad(x), (T64{{0.0, 1.0}}));
}

TEST(Backward, SumGivesOnes) {
  ParamStore<double> params;
  params.add("w", T64{{1, 2}, {3, 4}});
  Tape<double> tape;
  tape.backward(sum(tape.param(params, "w")), params);
  EXPECT_EQ(params.grad("w"), T64::full(2, 2, 1.0));
}

TEST(Backward, HalfSquaredNormGivesValue) {
  ParamStore<double> params;
  params.add("w", T64{{1, 2}, {3, 4}});
  Tape<double> tape;
  auto w = tape.param(params, "w");
  tape.backward(scale(sum(mul(w, w)), 0.5), params);
  EXPECT_EQ(params.grad("w"), params.value("w"));
}

TEST(Backward, NonScalarLossIsContractError) {
  ParamStore<double> params;
  params.add("w", T64(2, 2, 1.0));
  Tape<double> tape;
  EXPECT_THROW(tape.backward(tape.param(params, "w"), params), ContractError);
}

TEST(Backward, UnreachableGetsZeroAndRepeatedCallsAccumulate) {
  ParamStore<double> params;
  params.add("used", T64(1, 2, 3.0));
  params.add("unused", T64(2, 2, 1.0));
  Tape<double> tape;
  auto loss = sum(tape.param(params, "used"));
  tape.backward(loss, params);
  EXPECT_EQ(params.grad("unused"), T64(2, 2));
  tape.backward(loss, params);
  EXPECT_EQ(params.grad("used"), T64(1, 2, 2.0));
  params.zero_grad();
  EXPECT_EQ(params.grad("used"), T64(1, 2));
}

TEST(Backward, FrozenPrefixIsNotUpdated) {
  ParamStore<double> params;
  params.add("a.w", T64(1, 1, 2.0));
  params.add("b.w", T64(1, 1, 5.0));
  Tape<double> tape;
  tape.freeze("a.");
  auto loss = sum(mul(tape.param(params, "a.w"), tape.param(params, "b.w")));
  tape.backward(loss, params);
  EXPECT_EQ(params.grad("a.w")(0, 0), 0.0);
  EXPECT_EQ(params.grad("b.w")(0, 0), 2.0);
}

TEST(ParamStoreTest, DuplicateNamesRejected) {
  ParamStore<double> params;
  params.add("w", T64(1, 1));
  EXPECT_THROW(params.add("w", T64(1, 1)), ContractError);
  EXPECT_THROW(params.value("missing"), ContractError);
}

TEST(GradCheck, ConstantAndLinearObjectives) {
  ParamStore<double> params;
  params.add("w", T64{{0.3, -1.2}, {2.0, 0.7}});
  auto constant = [](Tape<double>& t, const ParamStore<double>&) {
    return t.constant(T64(1, 1, 42.0));
  };
  EXPECT_EQ(finite_difference_check(constant, params).max_relative_error, 0.0);
  auto linear = [](Tape<double>& t, const ParamStore<double>& p) {
    return scale(slice(t.param(p, "w"), 1, 1, 0, 1), 3.5);
  };
  EXPECT_LT(finite_difference_check(linear, params).max_relative_error, 1e-10);
}

TEST(GradCheck, NonFiniteObjectiveIsError) {
  ParamStore<double> params;
  params.add("w", T64(1, 1, 1.0));
  auto nan_fn = [](Tape<double>& t, const ParamStore<double>& p) {
    auto w = t.param(p, "w");
    T64 huge(1, 1, std::numeric_limits<double>::max());
    return mul(scale(w, 1e308), t.constant(huge));
  };
  EXPECT_THROW(finite_difference_check(nan_fn, params), NumericError);
}

// Weighted-sum probe: loss = sum(op(inputs) .* R) for a fixed random R, so every
// output entry contributes a distinct coefficient.
class OpGradient : public ::testing::Test {
 protected:
  template <typename Build>
  void check(const char* name, Build build, int trials = 100) {
    Rng rng(derive_seed(2024, name));
    for (int trial = 0; trial < trials; ++trial) {
      ParamStore<double> params;
      auto op = build(rng, params);
      // Shape of the op output from one forward pass.
      Tape<double> probe;
      auto shape = op(probe, params).shape();
      auto weights = std::make_shared<T64>(random_tensor(rng, shape.rows, shape.cols));
      ScalarFn f = [op, weights](Tape<double>& t, const ParamStore<double>& p) {
        return sum(mul(op(t, p), t.constant(*weights)));
      };
      const auto r = finite_difference_check(f, params, 1e-5);
      ASSERT_LT(r.max_relative_error, 1e-4)
          << name << " trial " << trial << " worst " << r.worst_param << "[" << r.worst_index << "]";
    }
  }
};

using Fn = std::function<Var<double>(Tape<double>&, const ParamStore<double>&)>;

TEST_F(OpGradient, Matmul) {
  check("matmul", [](Rng& rng, ParamStore<double>& p) -> Fn {
    const auto n = random_dim(rng), k = random_dim(rng), m = random_dim(rng);
    p.add("a", random_tensor(rng, n, k));
    p.add("b", random_tensor(rng, k, m));
    return [](Tape<double>& t, const ParamStore<double>& ps) {
      return matmul(t.param(ps, "a"), t.param(ps, "b"));
    };
  });
}

TEST_F(OpGradient, MatmulNtAndTranspose) {
  check("matmul_nt", [](Rng& rng, ParamStore<double>& p) -> Fn {
    const auto n = random_dim(rng), k = random_dim(rng), m = random_dim(rng);
    p.add("a", random_tensor(rng, n, k));
    p.add("b", random_tensor(rng, m, k));
    return [](Tape<double>& t, const ParamStore<double>& ps) {
      auto a = t.param(ps, "a"), b = t.param(ps, "b");
      return add(matmul_nt(a, b), matmul(a, transpose(b)));
    };
  });
}

TEST_F(OpGradient, ElementwiseBinary) {
  check("elementwise", [](Rng& rng, ParamStore<double>& p) -> Fn {
    const auto n = random_dim(rng), m = random_dim(rng);
    p.add("a", random_tensor(rng, n, m));
    p.add("b", random_tensor(rng, n, m));
    return [](Tape<double>& t, const ParamStore<double>& ps) {
      auto a = t.param(ps, "a"), b = t.param(ps, "b");
      return add(mul(a, b), scale(sub(a, b), 0.75));
    };
  });
}

TEST_F(OpGradient, Broadcasts) {
  check("broadcast", [](Rng& rng, ParamStore<double>& p) -> Fn {
    const auto n = random_dim(rng), m = random_dim(rng), k = random_dim(rng, 1, 3);
    p.add("a", random_tensor(rng, n * k, m));
    p.add("row", random_tensor(rng, 1, m));
    p.add("tile", random_tensor(rng, n, m));
    return [](Tape<double>& t, const ParamStore<double>& ps) {
      return add_tiled(add_row(t.param(ps, "a"), t.param(ps, "row")), t.param(ps, "tile"));
    };
  });
}

TEST_F(OpGradient, Activations) {
  check("activation", [](Rng& rng, ParamStore<double>& p) -> Fn {
    p.add("a", random_tensor(rng, random_dim(rng), random_dim(rng)));
    return [](Tape<double>& t, const ParamStore<double>& ps) {
      auto a = t.param(ps, "a");
      return add(activation(a, Activation::relu()), activation(a, Activation::leaky_relu(0.2)));
    };
  });
}

TEST_F(OpGradient, MaskedSoftmax) {
  check("softmax", [](Rng& rng, ParamStore<double>& p) -> Fn {
    const auto n = random_dim(rng), m = random_dim(rng);
    p.add("a", random_tensor(rng, n, m, -3, 3));
    auto mask = std::make_shared<Mask>(n, m);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) mask->set(i, j, rng.coin());
      mask->set(i, rng.below(m), true);
    }
    return [mask](Tape<double>& t, const ParamStore<double>& ps) {
      auto a = t.param(ps, "a");
      return add(rowwise_softmax(a, mask.get()), rowwise_softmax(a));
    };
  });
}

TEST_F(OpGradient, ConcatAndSlice) {
  check("concat", [](Rng& rng, ParamStore<double>& p) -> Fn {
    const auto n = random_dim(rng), m1 = random_dim(rng), m2 = random_dim(rng);
    p.add("a", random_tensor(rng, n, m1));
    p.add("b", random_tensor(rng, n, m2));
    return [n, m1, m2](Tape<double>& t, const ParamStore<double>& ps) {
      auto c = concat_cols({t.param(ps, "a"), t.param(ps, "b")});
      auto r = concat_rows({c, c});
      return slice(r, n / 2, n, m1 / 2, m2);
    };
  });
}

TEST_F(OpGradient, Reductions) {
  check("reductions", [](Rng& rng, ParamStore<double>& p) -> Fn {
    p.add("a", random_tensor(rng, random_dim(rng), random_dim(rng)));
    return [](Tape<double>& t, const ParamStore<double>& ps) {
      auto a = t.param(ps, "a");
      return add(sum(mul(a, a)), mean(a));
    };
  });
}

TEST_F(OpGradient, OuterSum) {
  check("outer_sum", [](Rng& rng, ParamStore<double>& p) -> Fn {
    p.add("s", random_tensor(rng, random_dim(rng), 1));
    p.add("u", random_tensor(rng, random_dim(rng), 1));
    return [](Tape<double>& t, const ParamStore<double>& ps) {
      return outer_sum(t.param(ps, "s"), t.param(ps, "u"));
    };
  });
}

TEST_F(OpGradient, LayerNorm) {
  check("layer_norm", [](Rng& rng, ParamStore<double>& p) -> Fn {
    // Rows of width <= 2 normalize to a constant pattern (zero gradient).
    const auto n = random_dim(rng), m = random_dim(rng, 3, 8);
    p.add("x", random_tensor(rng, n, m, -2, 2));
    p.add("g", random_tensor(rng, 1, m, 0.5, 1.5));
    p.add("b", random_tensor(rng, 1, m));
    return [](Tape<double>& t, const ParamStore<double>& ps) {
      return layer_norm(t.param(ps, "x"), t.param(ps, "g"), t.param(ps, "b"));
    };
  });
}

TEST_F(OpGradient, L2NormalizeRows) {
  check("l2norm", [](Rng& rng, ParamStore<double>& p) -> Fn {
    // A single column normalizes to a constant.
    p.add("x", random_tensor(rng, random_dim(rng), random_dim(rng, 2, 8), 0.1, 1.0));
    return [](Tape<double>& t, const ParamStore<double>& ps) {
      return l2_normalize_rows(t.param(ps, "x"));
    };
  });
}

TEST_F(OpGradient, CrossEntropy) {
  check("cross_entropy", [](Rng& rng, ParamStore<double>& p) -> Fn {
    const auto n = random_dim(rng), k = random_dim(rng, 2, 8);
    p.add("z", random_tensor(rng, n, k, -3, 3));
    std::vector<std::size_t> labels(n);
    for (auto& l : labels) l = rng.below(k);
    return [labels](Tape<double>& t, const ParamStore<double>& ps) {
      return cross_entropy(t.param(ps, "z"), std::span<const std::size_t>(labels));
    };
  });
}

TEST_F(OpGradient, BlockMatmulAndSegmentReduce) {
  check("segments", [](Rng& rng, ParamStore<double>& p) -> Fn {
    const std::size_t graphs = random_dim(rng, 1, 3), cols = random_dim(rng);
    auto blocks = std::make_shared<std::vector<T64>>();
    auto ranges = std::make_shared<std::vector<RowRange>>();
    std::size_t rows = 0;
    for (std::size_t g = 0; g < graphs; ++g) {
      const auto n = random_dim(rng, 1, 4);
      blocks->push_back(random_tensor(rng, n, n));
      ranges->push_back({rows, n});
      rows += n;
    }
    p.add("h", random_tensor(rng, rows, cols));
    return [blocks, ranges](Tape<double>& t, const ParamStore<double>& ps) {
      auto h = block_matmul<double>(blocks, ranges, t.param(ps, "h"));
      std::span<const RowRange> segs(*ranges);
      return concat_cols({segment_reduce(h, segs, Reduction::sum),
                          segment_reduce(h, segs, Reduction::mean),
                          segment_reduce(h, segs, Reduction::max)});
    };
  });
}

TEST(Init, Schemes) {
  EXPECT_EQ(init_params<double>({2, 2}, InitScheme::zero(), 1), T64(2, 2));
  EXPECT_EQ(init_params<double>({1, 3}, InitScheme::constant(1.0), 1), (T64{{1, 1, 1}}));
  auto a = init_params<double>({4, 4}, InitScheme::xavier(), 7);
  auto b = init_params<double>({4, 4}, InitScheme::xavier(), 7);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, init_params<double>({4, 4}, InitScheme::xavier(), 8));
  const double bound = std::sqrt(6.0 / 8.0);
  for (double v : a.values()) {
    EXPECT_GE(v, -bound);
    EXPECT_LT(v, bound);
  }
}

TEST(TensorIo, RoundTripIsBitExact) {
  Rng rng(5);
  auto t = random_tensor(rng, 3, 5);
  std::stringstream ss;
  write_tensor(ss, t);
  EXPECT_EQ(read_tensor<double>(ss), t);

  Tensor<float> f = t.cast<float>();
  std::stringstream sf;
  write_tensor(sf, f);
  const std::string bytes = sf.str();
  EXPECT_EQ(bytes.substr(0, 4), "TSG1");
  EXPECT_EQ(bytes.size(), 4u + 4 + 4 + 1 + 15 * 4);
  EXPECT_EQ(static_cast<int>(bytes[12]), 1);
  EXPECT_EQ(read_tensor<float>(sf), f);
}

TEST(TensorIo, RejectsBadInput) {
  std::stringstream bad("XXXX");
  EXPECT_THROW(read_tensor<double>(bad), ParseError);
  std::stringstream ss;
  write_tensor(ss, T64(2, 2, 1.0));
  std::string truncated = ss.str().substr(0, 20);
  std::stringstream tr(truncated);
  EXPECT_THROW(read_tensor<double>(tr), ParseError);
  std::stringstream narrow(ss.str());
  EXPECT_THROW(read_tensor<float>(narrow), ParseError);
}

TEST(Determinism, ForwardIsBitIdentical) {
  auto run = [] {
    ParamStore<float> p;
    p.add("w", init_params<float>({6, 5}, InitScheme::xavier(), 99));
    Tape<float> t;
    auto x = t.constant(init_params<float>({3, 6}, InitScheme::xavier(), 100));
    return rowwise_softmax(matmul(x, t.param(p, "w"))).value();
  };
  EXPECT_EQ(run(), run());
}

}  // namespace
}  // namespace tsg
