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

// Reverse-mode differentiation over Tensor values.
//
// A Tape records every operation applied to its Vars. Nodes are appended in
// evaluation order, so a reverse sweep over node ids is a valid topological
// order. Parameter leaves remember the ParamStore name they were read from;
// backward() adds d(loss)/d(leaf) into the gradient slot of that name.
//
// A tape is single-threaded. Build one per forward pass and discard it.

#pragma once

#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "tsg/core/error.hpp"
#include "tsg/core/ops.hpp"
#include "tsg/core/params.hpp"
#include "tsg/core/tensor.hpp"

namespace tsg {

template <Real T>
class Tape;

template <Real T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor<T>& value() const { return tape_->value(*this); }
  Shape shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  Tape<T>* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

template <Real T>
class Tape {
 public:
  using Backprop = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // A leaf that never receives gradients.
  Var<T> constant(Tensor<T> value) { return push(std::move(value), false, nullptr, {}); }

  // A leaf whose gradient can be read back with grad() after backward().
  Var<T> watch(Tensor<T> value) { return push(std::move(value), true, nullptr, {}); }

  // A leaf bound to a named parameter. Names under a frozen prefix become
  // constants.
  Var<T> param(const ParamStore<T>& store, const std::string& name) {
    const bool frozen = is_frozen(name);
    return push(store.value(name), !frozen, nullptr, frozen ? std::string{} : name);
  }

  void freeze(std::string prefix) { frozen_.push_back(std::move(prefix)); }

  bool is_frozen(const std::string& name) const {
    for (const auto& p : frozen_)
      if (name.compare(0, p.size(), p) == 0) return true;
    return false;
  }

  Var<T> record(Tensor<T> value, bool requires_grad, Backprop backprop, const char* op) {
    require_finite_values(value.all_finite(), op);
    return push(std::move(value), requires_grad, requires_grad ? std::move(backprop) : nullptr,
                {});
  }

  const Tensor<T>& value(Var<T> v) const { return nodes_.at(v.id()).value; }
  bool requires_grad(Var<T> v) const { return nodes_.at(v.id()).requires_grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  // Gradient of the last backward() w.r.t. a node; zeros if unreached.
  Tensor<T> grad(Var<T> v) const {
    const auto& n = nodes_.at(v.id());
    if (n.grad.empty()) return Tensor<T>(n.value.rows(), n.value.cols());
    return n.grad;
  }

  const Tensor<T>& node_value(std::size_t id) const { return nodes_[id].value; }
  const Tensor<T>& node_grad(std::size_t id) const { return nodes_[id].grad; }

  // Lazily allocated accumulation slot for a parent during backprop.
  Tensor<T>& grad_slot(std::size_t id) {
    auto& n = nodes_[id];
    if (n.grad.empty()) n.grad = Tensor<T>(n.value.rows(), n.value.cols());
    return n.grad;
  }

  std::size_t size() const { return nodes_.size(); }

  /// Reverse sweep from a 1x1 loss. Gradients are added (not assigned) into
  /// every store that owns a reached parameter name, so two calls without
  /// zero_grad() accumulate. Names present in no store are ignored, which is
  /// how frozen sub-models are excluded.
  void backward(Var<T> loss, std::initializer_list<ParamStore<T>*> stores) {
    if (loss.tape() != this) throw ContractError("backward: loss belongs to another tape");
    const auto& lv = nodes_.at(loss.id()).value;
    if (lv.rows() != 1 || lv.cols() != 1) {
      throw ContractError(detail::concat("backward: loss must be a 1x1 scalar, got ",
                                         to_string(lv.shape())));
    }
    for (auto& n : nodes_) n.grad = Tensor<T>();
    if (!nodes_[loss.id()].requires_grad) return;
    grad_slot(loss.id())(0, 0) = T(1);
    for (std::size_t id = loss.id() + 1; id-- > 0;) {
      auto& n = nodes_[id];
      if (!n.requires_grad || n.grad.empty() || !n.backprop) continue;
      n.backprop(*this, id);
    }
    for (auto& n : nodes_) {
      if (n.param_name.empty() || n.grad.empty()) continue;
      for (auto* store : stores) {
        if (store && store->contains(n.param_name)) {
          kernels::add_into(store->grad(n.param_name), n.grad);
        }
      }
    }
  }

  void backward(Var<T> loss, ParamStore<T>& store) { backward(loss, {&store}); }
  void backward(Var<T> loss) { backward(loss, std::initializer_list<ParamStore<T>*>{}); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    Backprop backprop;
    std::string param_name;
  };

  Var<T> push(Tensor<T> value, bool requires_grad, Backprop backprop, std::string name) {
    nodes_.push_back(Node{std::move(value), Tensor<T>(), requires_grad, std::move(backprop),
                          std::move(name)});
    return Var<T>(this, nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
  std::vector<std::string> frozen_;
};

namespace detail {

template <Real T>
Tape<T>& tape_of(Var<T> a) {
  if (!a.valid()) throw ContractError("operation on an unbound Var");
  return *a.tape();
}

template <Real T>
Tape<T>& tape_of(Var<T> a, Var<T> b) {
  if (a.tape() != b.tape() || !a.valid()) throw ContractError("operands belong to different tapes");
  return *a.tape();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Differentiable operations.
// ---------------------------------------------------------------------------

template <Real T>
Var<T> matmul(Var<T> a, Var<T> b) {
  auto& tape = detail::tape_of(a, b);
  Tensor<T> out = kernels::matmul(a.value(), b.value());
  const std::size_t ia = a.id(), ib = b.id();
  const bool rg = tape.requires_grad(ia) || tape.requires_grad(ib);
  return tape.record(
      std::move(out), rg,
      [ia, ib](Tape<T>& t, std::size_t self) {
        const auto& g = t.node_grad(self);
        if (t.requires_grad(ia))
          kernels::add_into(t.grad_slot(ia), kernels::matmul_nt(g, t.node_value(ib)));
        if (t.requires_grad(ib))
          kernels::add_into(t.grad_slot(ib), kernels::matmul_tn(t.node_value(ia), g));
      },
      "matmul");
}

// a * b^T.
template <Real T>
Var<T> matmul_nt(Var<T> a, Var<T> b) {
  auto& tape = detail::tape_of(a, b);
  Tensor<T> out = kernels::matmul_nt(a.value(), b.value());
  const std::size_t ia = a.id(), ib = b.id();
  const bool rg = tape.requires_grad(ia) || tape.requires_grad(ib);
  return tape.record(
      std::move(out), rg,
      [ia, ib](Tape<T>& t, std::size_t self) {
        const auto& g = t.node_grad(self);
        if (t.requires_grad(ia))
          kernels::add_into(t.grad_slot(ia), kernels::matmul(g, t.node_value(ib)));
        if (t.requires_grad(ib))
          kernels::add_into(t.grad_slot(ib), kernels::matmul_tn(g, t.node_value(ia)));
      },
      "matmul_nt");
}

template <Real T>
Var<T> transpose(Var<T> a) {
  auto& tape = detail::tape_of(a);
  const std::size_t ia = a.id();
  return tape.record(
      kernels::transpose(a.value()), tape.requires_grad(ia),
      [ia](Tape<T>& t, std::size_t self) {
        kernels::add_into(t.grad_slot(ia), kernels::transpose(t.node_grad(self)));
      },
      "transpose");
}

namespace detail {

template <Real T, typename Fwd, typename DA, typename DB>
Var<T> elementwise_binary(Var<T> a, Var<T> b, const char* op, Fwd fwd, DA da, DB db) {
  auto& tape = tape_of(a, b);
  require_same_shape(a.shape(), b.shape(), op);
  Tensor<T> out(a.rows(), a.cols());
  {
    auto va = a.value().values();
    auto vb = b.value().values();
    auto vo = out.values();
    for (std::size_t i = 0; i < vo.size(); ++i) vo[i] = fwd(va[i], vb[i]);
  }
  const std::size_t ia = a.id(), ib = b.id();
  const bool rg = tape.requires_grad(ia) || tape.requires_grad(ib);
  return tape.record(
      std::move(out), rg,
      [ia, ib, da, db](Tape<T>& t, std::size_t self) {
        auto g = t.node_grad(self).values();
        auto va = t.node_value(ia).values();
        auto vb = t.node_value(ib).values();
        if (t.requires_grad(ia)) {
          auto ga = t.grad_slot(ia).values();
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * da(va[i], vb[i]);
        }
        if (t.requires_grad(ib)) {
          auto gb = t.grad_slot(ib).values();
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * db(va[i], vb[i]);
        }
      },
      op);
}

}  // namespace detail

template <Real T>
Var<T> add(Var<T> a, Var<T> b) {
  return detail::elementwise_binary(
      a, b, "add", [](T x, T y) { return x + y; }, [](T, T) { return T(1); },
      [](T, T) { return T(1); });
}

template <Real T>
Var<T> sub(Var<T> a, Var<T> b) {
  return detail::elementwise_binary(
      a, b, "sub", [](T x, T y) { return x - y; }, [](T, T) { return T(1); },
      [](T, T) { return T(-1); });
}

// Hadamard product.
template <Real T>
Var<T> mul(Var<T> a, Var<T> b) {
  return detail::elementwise_binary(
      a, b, "mul", [](T x, T y) { return x * y; }, [](T, T y) { return y; },
      [](T x, T) { return x; });
}

template <Real T>
Var<T> scale(Var<T> a, T s) {
  auto& tape = detail::tape_of(a);
  Tensor<T> out = a.value();
  for (auto& v : out.values()) v *= s;
  const std::size_t ia = a.id();
  return tape.record(
      std::move(out), tape.requires_grad(ia),
      [ia, s](Tape<T>& t, std::size_t self) {
        auto g = t.node_grad(self).values();
        auto ga = t.grad_slot(ia).values();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
      },
      "scale");
}

// a (n x c) + row (1 x c) broadcast over rows.
template <Real T>
Var<T> add_row(Var<T> a, Var<T> row) {
  auto& tape = detail::tape_of(a, row);
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw DimensionError(detail::concat("add_row: cannot broadcast ", to_string(row.shape()),
                                        " over ", to_string(a.shape())));
  }
  Tensor<T> out = a.value();
  const auto& r = row.value();
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += r(0, j);
  const std::size_t ia = a.id(), ir = row.id();
  const bool rg = tape.requires_grad(ia) || tape.requires_grad(ir);
  return tape.record(
      std::move(out), rg,
      [ia, ir](Tape<T>& t, std::size_t self) {
        const auto& g = t.node_grad(self);
        if (t.requires_grad(ia)) kernels::add_into(t.grad_slot(ia), g);
        if (t.requires_grad(ir)) {
          auto& gr = t.grad_slot(ir);
          for (std::size_t i = 0; i < g.rows(); ++i)
            for (std::size_t j = 0; j < g.cols(); ++j) gr(0, j) += g(i, j);
        }
      },
      "add_row");
}

// a (k*n x c) + b (n x c) repeated k times down the rows.
template <Real T>
Var<T> add_tiled(Var<T> a, Var<T> b) {
  auto& tape = detail::tape_of(a, b);
  if (b.cols() != a.cols() || a.rows() % b.rows() != 0) {
    throw DimensionError(detail::concat("add_tiled: cannot tile ", to_string(b.shape()),
                                        " over ", to_string(a.shape())));
  }
  Tensor<T> out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += bv(i % bv.rows(), j);
  const std::size_t ia = a.id(), ib = b.id();
  const bool rg = tape.requires_grad(ia) || tape.requires_grad(ib);
  return tape.record(
      std::move(out), rg,
      [ia, ib](Tape<T>& t, std::size_t self) {
        const auto& g = t.node_grad(self);
        if (t.requires_grad(ia)) kernels::add_into(t.grad_slot(ia), g);
        if (t.requires_grad(ib)) {
          auto& gb = t.grad_slot(ib);
          for (std::size_t i = 0; i < g.rows(); ++i)
            for (std::size_t j = 0; j < g.cols(); ++j) gb(i % gb.rows(), j) += g(i, j);
        }
      },
      "add_tiled");
}

template <Real T>
Var<T> activation(Var<T> a, Activation act) {
  auto& tape = detail::tape_of(a);
  if (act.kind == Activation::Kind::identity) return a;
  const std::size_t ia = a.id();
  return tape.record(
      kernels::activation(a.value(), act), tape.requires_grad(ia),
      [ia, act](Tape<T>& t, std::size_t self) {
        auto g = t.node_grad(self).values();
        auto x = t.node_value(ia).values();
        auto ga = t.grad_slot(ia).values();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * kernels::activate_grad(x[i], act);
      },
      "activation");
}

template <Real T>
Var<T> rowwise_softmax(Var<T> a, const Mask* mask = nullptr) {
  auto& tape = detail::tape_of(a);
  const std::size_t ia = a.id();
  return tape.record(
      kernels::rowwise_softmax(a.value(), mask), tape.requires_grad(ia),
      [ia](Tape<T>& t, std::size_t self) {
        const auto& g = t.node_grad(self);
        const auto& y = t.node_value(self);
        auto& ga = t.grad_slot(ia);
        for (std::size_t i = 0; i < y.rows(); ++i) {
          T dot = T(0);
          for (std::size_t j = 0; j < y.cols(); ++j) dot += g(i, j) * y(i, j);
          for (std::size_t j = 0; j < y.cols(); ++j) ga(i, j) += y(i, j) * (g(i, j) - dot);
        }
      },
      "rowwise_softmax");
}

template <Real T>
Var<T> concat_cols(std::span<const Var<T>> parts) {
  if (parts.empty()) throw ContractError("concat_cols: no operands");
  auto& tape = detail::tape_of(parts[0]);
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  bool rg = false;
  std::vector<std::size_t> ids;
  for (const auto& p : parts) {
    if (p.tape() != &tape) throw ContractError("concat_cols: operands on different tapes");
    if (p.rows() != rows) {
      throw DimensionError(detail::concat("concat_cols: row count mismatch ", rows, " vs ",
                                          p.rows()));
    }
    cols += p.cols();
    rg = rg || tape.requires_grad(p.id());
    ids.push_back(p.id());
  }
  Tensor<T> out(rows, cols);
  std::size_t off = 0;
  for (const auto& p : parts) {
    const auto& v = p.value();
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < v.cols(); ++j) out(i, off + j) = v(i, j);
    off += v.cols();
  }
  return tape.record(
      std::move(out), rg,
      [ids](Tape<T>& t, std::size_t self) {
        const auto& g = t.node_grad(self);
        std::size_t off = 0;
        for (auto id : ids) {
          const std::size_t w = t.node_value(id).cols();
          if (t.requires_grad(id)) {
            auto& gp = t.grad_slot(id);
            for (std::size_t i = 0; i < g.rows(); ++i)
              for (std::size_t j = 0; j < w; ++j) gp(i, j) += g(i, off + j);
          }
          off += w;
        }
      },
      "concat_cols");
}

template <Real T>
Var<T> concat_cols(std::initializer_list<Var<T>> parts) {
  return concat_cols(std::span<const Var<T>>(parts.begin(), parts.size()));
}

template <Real T>
Var<T> concat_rows(std::span<const Var<T>> parts) {
  if (parts.empty()) throw ContractError("concat_rows: no operands");
  auto& tape = detail::tape_of(parts[0]);
  const std::size_t cols = parts[0].cols();
  std::size_t rows = 0;
  bool rg = false;
  std::vector<std::size_t> ids;
  for (const auto& p : parts) {
    if (p.tape() != &tape) throw ContractError("concat_rows: operands on different tapes");
    if (p.cols() != cols) {
      throw DimensionError(detail::concat("concat_rows: column count mismatch ", cols, " vs ",
                                          p.cols()));
    }
    rows += p.rows();
    rg = rg || tape.requires_grad(p.id());
    ids.push_back(p.id());
  }
  Tensor<T> out(rows, cols);
  std::size_t off = 0;
  for (const auto& p : parts) {
    auto src = p.value().values();
    std::copy(src.begin(), src.end(), out.values().begin() + off * cols);
    off += p.rows();
  }
  return tape.record(
      std::move(out), rg,
      [ids](Tape<T>& t, std::size_t self) {
        auto g = t.node_grad(self).values();
        std::size_t off = 0;
        for (auto id : ids) {
          const std::size_t n = t.node_value(id).size();
          if (t.requires_grad(id)) {
            auto gp = t.grad_slot(id).values();
            for (std::size_t i = 0; i < n; ++i) gp[i] += g[off + i];
          }
          off += n;
        }
      },
      "concat_rows");
}

template <Real T>
Var<T> concat_rows(std::initializer_list<Var<T>> parts) {
  return concat_rows(std::span<const Var<T>>(parts.begin(), parts.size()));
}

// Sub-block [r0, r0+nr) x [c0, c0+nc).
template <Real T>
Var<T> slice(Var<T> a, std::size_t r0, std::size_t nr, std::size_t c0, std::size_t nc) {
  auto& tape = detail::tape_of(a);
  if (nr == 0 || nc == 0 || r0 + nr > a.rows() || c0 + nc > a.cols()) {
    throw DimensionError(detail::concat("slice: block [", r0, "+", nr, ", ", c0, "+", nc,
                                        ") outside ", to_string(a.shape())));
  }
  const auto& v = a.value();
  Tensor<T> out(nr, nc);
  for (std::size_t i = 0; i < nr; ++i)
    for (std::size_t j = 0; j < nc; ++j) out(i, j) = v(r0 + i, c0 + j);
  const std::size_t ia = a.id();
  return tape.record(
      std::move(out), tape.requires_grad(ia),
      [ia, r0, c0](Tape<T>& t, std::size_t self) {
        const auto& g = t.node_grad(self);
        auto& ga = t.grad_slot(ia);
        for (std::size_t i = 0; i < g.rows(); ++i)
          for (std::size_t j = 0; j < g.cols(); ++j) ga(r0 + i, c0 + j) += g(i, j);
      },
      "slice");
}

template <Real T>
Var<T> slice_rows(Var<T> a, std::size_t r0, std::size_t nr) {
  return slice(a, r0, nr, 0, a.cols());
}

template <Real T>
Var<T> slice_cols(Var<T> a, std::size_t c0, std::size_t nc) {
  return slice(a, 0, a.rows(), c0, nc);
}

template <Real T>
Var<T> sum(Var<T> a) {
  auto& tape = detail::tape_of(a);
  T total = T(0);
  for (T v : a.value().values()) total += v;
  const std::size_t ia = a.id();
  return tape.record(
      Tensor<T>(1, 1, total), tape.requires_grad(ia),
      [ia](Tape<T>& t, std::size_t self) {
        const T g = t.node_grad(self)(0, 0);
        for (auto& v : t.grad_slot(ia).values()) v += g;
      },
      "sum");
}

template <Real T>
Var<T> mean(Var<T> a) {
  return scale(sum(a), T(1) / static_cast<T>(a.value().size()));
}

// s (n x 1), u (m x 1) -> n x m with entry s_i + u_j.
template <Real T>
Var<T> outer_sum(Var<T> s, Var<T> u) {
  auto& tape = detail::tape_of(s, u);
  if (s.cols() != 1 || u.cols() != 1) {
    throw DimensionError(detail::concat("outer_sum: expects column vectors, got ",
                                        to_string(s.shape()), " and ", to_string(u.shape())));
  }
  const auto& sv = s.value();
  const auto& uv = u.value();
  Tensor<T> out(sv.rows(), uv.rows());
  for (std::size_t i = 0; i < sv.rows(); ++i)
    for (std::size_t j = 0; j < uv.rows(); ++j) out(i, j) = sv(i, 0) + uv(j, 0);
  const std::size_t is = s.id(), iu = u.id();
  const bool rg = tape.requires_grad(is) || tape.requires_grad(iu);
  return tape.record(
      std::move(out), rg,
      [is, iu](Tape<T>& t, std::size_t self) {
        const auto& g = t.node_grad(self);
        if (t.requires_grad(is)) {
          auto& gs = t.grad_slot(is);
          for (std::size_t i = 0; i < g.rows(); ++i)
            for (std::size_t j = 0; j < g.cols(); ++j) gs(i, 0) += g(i, j);
        }
        if (t.requires_grad(iu)) {
          auto& gu = t.grad_slot(iu);
          for (std::size_t i = 0; i < g.rows(); ++i)
            for (std::size_t j = 0; j < g.cols(); ++j) gu(j, 0) += g(i, j);
        }
      },
      "outer_sum");
}

// Row-wise layer normalization with learned gain and bias (both 1 x c).
template <Real T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, T eps = T(1e-5)) {
  auto& tape = detail::tape_of(x, gain);
  detail::tape_of(x, bias);
  const std::size_t n = x.rows(), c = x.cols();
  if (gain.shape() != Shape{1, c} || bias.shape() != Shape{1, c}) {
    throw DimensionError(detail::concat("layer_norm: gain/bias must be 1x", c));
  }
  const auto& xv = x.value();
  const auto& gv = gain.value();
  const auto& bv = bias.value();
  auto normed = std::make_shared<Tensor<T>>(n, c);
  auto inv_std = std::make_shared<std::vector<T>>(n);
  Tensor<T> out(n, c);
  for (std::size_t i = 0; i < n; ++i) {
    T mu = T(0);
    for (std::size_t j = 0; j < c; ++j) mu += xv(i, j);
    mu /= static_cast<T>(c);
    T var = T(0);
    for (std::size_t j = 0; j < c; ++j) var += (xv(i, j) - mu) * (xv(i, j) - mu);
    var /= static_cast<T>(c);
    const T is = T(1) / std::sqrt(var + eps);
    (*inv_std)[i] = is;
    for (std::size_t j = 0; j < c; ++j) {
      const T h = (xv(i, j) - mu) * is;
      (*normed)(i, j) = h;
      out(i, j) = gv(0, j) * h + bv(0, j);
    }
  }
  const std::size_t ix = x.id(), ig = gain.id(), ib = bias.id();
  const bool rg = tape.requires_grad(ix) || tape.requires_grad(ig) || tape.requires_grad(ib);
  return tape.record(
      std::move(out), rg,
      [ix, ig, ib, normed, inv_std](Tape<T>& t, std::size_t self) {
        const auto& g = t.node_grad(self);
        const auto& h = *normed;
        const std::size_t n = g.rows(), c = g.cols();
        if (t.requires_grad(ig)) {
          auto& gg = t.grad_slot(ig);
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < c; ++j) gg(0, j) += g(i, j) * h(i, j);
        }
        if (t.requires_grad(ib)) {
          auto& gb = t.grad_slot(ib);
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < c; ++j) gb(0, j) += g(i, j);
        }
        if (t.requires_grad(ix)) {
          const auto& gain_v = t.node_value(ig);
          auto& gx = t.grad_slot(ix);
          for (std::size_t i = 0; i < n; ++i) {
            T mean_dh = T(0), mean_dh_h = T(0);
            for (std::size_t j = 0; j < c; ++j) {
              const T dh = g(i, j) * gain_v(0, j);
              mean_dh += dh;
              mean_dh_h += dh * h(i, j);
            }
            mean_dh /= static_cast<T>(c);
            mean_dh_h /= static_cast<T>(c);
            for (std::size_t j = 0; j < c; ++j) {
              const T dh = g(i, j) * gain_v(0, j);
              gx(i, j) += (*inv_std)[i] * (dh - mean_dh - h(i, j) * mean_dh_h);
            }
          }
        }
      },
      "layer_norm");
}

// Each row divided by sqrt(|row|^2 + eps).
template <Real T>
Var<T> l2_normalize_rows(Var<T> x, T eps = T(1e-12)) {
  auto& tape = detail::tape_of(x);
  const auto& xv = x.value();
  auto norms = std::make_shared<std::vector<T>>(xv.rows());
  Tensor<T> out(xv.rows(), xv.cols());
  for (std::size_t i = 0; i < xv.rows(); ++i) {
    T s = T(0);
    for (T v : xv.row(i)) s += v * v;
    const T nrm = std::sqrt(s + eps);
    (*norms)[i] = nrm;
    for (std::size_t j = 0; j < xv.cols(); ++j) out(i, j) = xv(i, j) / nrm;
  }
  const std::size_t ix = x.id();
  return tape.record(
      std::move(out), tape.requires_grad(ix),
      [ix, norms](Tape<T>& t, std::size_t self) {
        const auto& g = t.node_grad(self);
        const auto& xv = t.node_value(ix);
        auto& gx = t.grad_slot(ix);
        for (std::size_t i = 0; i < g.rows(); ++i) {
          const T nrm = (*norms)[i];
          T gx_dot = T(0);
          for (std::size_t j = 0; j < g.cols(); ++j) gx_dot += g(i, j) * xv(i, j);
          for (std::size_t j = 0; j < g.cols(); ++j)
            gx(i, j) += g(i, j) / nrm - xv(i, j) * gx_dot / (nrm * nrm * nrm);
        }
      },
      "l2_normalize_rows");
}

/// Mean softmax cross entropy of each logits row against its label.
template <Real T>
Var<T> cross_entropy(Var<T> logits, std::span<const std::size_t> labels) {
  auto& tape = detail::tape_of(logits);
  const auto& z = logits.value();
  if (labels.size() != z.rows()) {
    throw DimensionError(detail::concat("cross_entropy: ", labels.size(), " labels for ",
                                        z.rows(), " logit rows"));
  }
  auto probs = std::make_shared<Tensor<T>>(kernels::rowwise_softmax(z));
  T total = T(0);
  for (std::size_t i = 0; i < z.rows(); ++i) {
    if (labels[i] >= z.cols()) {
      throw ContractError(detail::concat("cross_entropy: label ", labels[i],
                                         " out of range for ", z.cols(), " classes"));
    }
    T mx = z(i, 0);
    for (T v : z.row(i)) mx = std::max(mx, v);
    T se = T(0);
    for (T v : z.row(i)) se += std::exp(v - mx);
    total += std::log(se) + mx - z(i, labels[i]);
  }
  const T inv_n = T(1) / static_cast<T>(z.rows());
  std::vector<std::size_t> lab(labels.begin(), labels.end());
  const std::size_t iz = logits.id();
  return tape.record(
      Tensor<T>(1, 1, total * inv_n), tape.requires_grad(iz),
      [iz, probs, lab, inv_n](Tape<T>& t, std::size_t self) {
        const T g = t.node_grad(self)(0, 0) * inv_n;
        auto& gz = t.grad_slot(iz);
        for (std::size_t i = 0; i < gz.rows(); ++i) {
          for (std::size_t j = 0; j < gz.cols(); ++j) gz(i, j) += g * (*probs)(i, j);
          gz(i, lab[i]) -= g;
        }
      },
      "cross_entropy");
}

template <Real T>
Var<T> cross_entropy(Var<T> logits, std::initializer_list<std::size_t> labels) {
  return cross_entropy(logits, std::span<const std::size_t>(labels.begin(), labels.size()));
}

// Contiguous row range [begin, begin + count).
struct RowRange {
  std::size_t begin = 0;
  std::size_t count = 0;
  friend bool operator==(const RowRange&, const RowRange&) = default;
};

/// Block-diagonal left multiply: rows of `h` in range g are replaced by
/// blocks[g] * h[range g]. Blocks are constants shared with the caller.
template <Real T>
Var<T> block_matmul(std::shared_ptr<const std::vector<Tensor<T>>> blocks,
                    std::shared_ptr<const std::vector<RowRange>> ranges, Var<T> h) {
  auto& tape = detail::tape_of(h);
  if (blocks->size() != ranges->size()) throw ContractError("block_matmul: block/range count");
  const auto& hv = h.value();
  Tensor<T> out(hv.rows(), hv.cols());
  for (std::size_t g = 0; g < blocks->size(); ++g) {
    const auto& blk = (*blocks)[g];
    const auto [b, n] = (*ranges)[g];
    if (blk.rows() != n || blk.cols() != n || b + n > hv.rows()) {
      throw DimensionError(detail::concat("block_matmul: block ", g, " is ",
                                          to_string(blk.shape()), " for range of ", n));
    }
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < n; ++k) {
        const T w = blk(i, k);
        if (w == T(0)) continue;
        for (std::size_t j = 0; j < hv.cols(); ++j) out(b + i, j) += w * hv(b + k, j);
      }
  }
  const std::size_t ih = h.id();
  return tape.record(
      std::move(out), tape.requires_grad(ih),
      [ih, blocks, ranges](Tape<T>& t, std::size_t self) {
        const auto& g = t.node_grad(self);
        auto& gh = t.grad_slot(ih);
        for (std::size_t gi = 0; gi < blocks->size(); ++gi) {
          const auto& blk = (*blocks)[gi];
          const auto [b, n] = (*ranges)[gi];
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < n; ++k) {
              const T w = blk(i, k);
              if (w == T(0)) continue;
              for (std::size_t j = 0; j < g.cols(); ++j) gh(b + k, j) += w * g(b + i, j);
            }
        }
      },
      "block_matmul");
}

enum class Reduction { sum, mean, max };

/// Column-wise reduction of each row range into one output row.
template <Real T>
Var<T> segment_reduce(Var<T> h, std::span<const RowRange> ranges, Reduction mode) {
  auto& tape = detail::tape_of(h);
  const auto& hv = h.value();
  if (ranges.empty()) throw ContractError("segment_reduce: no segments");
  Tensor<T> out(ranges.size(), hv.cols());
  // argmax[g * cols + j] holds the winning row for max mode.
  auto argmax = std::make_shared<std::vector<std::size_t>>();
  if (mode == Reduction::max) argmax->resize(ranges.size() * hv.cols());
  for (std::size_t g = 0; g < ranges.size(); ++g) {
    const auto [b, n] = ranges[g];
    if (n == 0) throw ContractError(detail::concat("segment_reduce: segment ", g, " is empty"));
    if (b + n > hv.rows()) throw DimensionError("segment_reduce: segment outside input");
    for (std::size_t j = 0; j < hv.cols(); ++j) {
      if (mode == Reduction::max) {
        std::size_t best = b;
        for (std::size_t i = b + 1; i < b + n; ++i)
          if (hv(i, j) > hv(best, j)) best = i;
        (*argmax)[g * hv.cols() + j] = best;
        out(g, j) = hv(best, j);
      } else {
        T acc = T(0);
        for (std::size_t i = b; i < b + n; ++i) acc += hv(i, j);
        out(g, j) = mode == Reduction::mean ? acc / static_cast<T>(n) : acc;
      }
    }
  }
  std::vector<RowRange> segs(ranges.begin(), ranges.end());
  const std::size_t ih = h.id();
  return tape.record(
      std::move(out), tape.requires_grad(ih),
      [ih, segs, mode, argmax](Tape<T>& t, std::size_t self) {
        const auto& g = t.node_grad(self);
        auto& gh = t.grad_slot(ih);
        for (std::size_t s = 0; s < segs.size(); ++s) {
          const auto [b, n] = segs[s];
          for (std::size_t j = 0; j < g.cols(); ++j) {
            if (mode == Reduction::max) {
              gh((*argmax)[s * g.cols() + j], j) += g(s, j);
            } else {
              const T w = mode == Reduction::mean ? g(s, j) / static_cast<T>(n) : g(s, j);
              for (std::size_t i = b; i < b + n; ++i) gh(i, j) += w;
            }
          }
        }
      },
      "segment_reduce");
}

}  // namespace tsg
