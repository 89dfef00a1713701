/*
 * Copyright 2026 The Memformer Lab Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Tape-based reverse-mode differentiation over dense matrices.
//
// A Tape is rebuilt per forward pass (define-by-run). Nodes are appended
// in evaluation order, so the node list is already topologically sorted
// and the backward pass is a single reverse sweep. Gradients accumulate
// additively, which matters when one parameter feeds several layer terms.
//
// The same arithmetic is available on plain Matrix values (matrix.hpp)
// under identical names; model code is written once against either.

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "memformer/matrix.hpp"

namespace memformer {

class Tape;

// Handle to a node on a Tape. Cheap to copy; invalidated by Tape::reset.
class Value {
 public:
  Value() = default;
  Value(Tape* tape, int id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  int id() const { return id_; }
  Tape* tape() const { return tape_; }
  int rows() const { return value().rows(); }
  int cols() const { return value().cols(); }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  enum class Op : std::uint8_t {
    kConst,
    kLeaf,
    kAdd,
    kSub,
    kScale,
    kMatMul,
    kTranspose,
    kHadamard,
    kSMul,
    kEntry,
    kSquare,
    kMean,
  };

  struct Node {
    Op op;
    int a = -1;
    int b = -1;
    int kary_first = 0;
    int kary_count = 0;
    double c = 0.0;  // scale factor
    int i = 0;       // entry row
    int j = 0;       // entry col
    int leaf_id = -1;
    bool needs_grad = false;
    Matrix value;
  };

  Value constant(Matrix v) {
    return push(Node{.op = Op::kConst, .needs_grad = false, .value = std::move(v)});
  }

  // Trainable leaf. leaf_id indexes the caller's parameter list; gradients
  // come back in that order.
  Value leaf(Matrix v, int leaf_id) {
    if (leaf_id < 0) throw std::invalid_argument("Tape::leaf: negative leaf id");
    if (leaf_id >= static_cast<int>(leaf_nodes_.size())) {
      leaf_nodes_.resize(leaf_id + 1, -1);
    }
    Value out = push(Node{.op = Op::kLeaf, .leaf_id = leaf_id, .needs_grad = true,
                          .value = std::move(v)});
    leaf_nodes_[leaf_id] = out.id();
    return out;
  }

  Value add(Value a, Value b) {
    return push_binary(Op::kAdd, a, b, memformer::add(val(a), val(b)));
  }

  Value sub(Value a, Value b) {
    return push_binary(Op::kSub, a, b, memformer::sub(val(a), val(b)));
  }

  Value hadamard(Value a, Value b) {
    return push_binary(Op::kHadamard, a, b, memformer::hadamard(val(a), val(b)));
  }

  Value matmul(Value a, Value b) {
    return push_binary(Op::kMatMul, a, b, memformer::matmul(val(a), val(b)));
  }

  Value scale(double c, Value a) {
    Node n{.op = Op::kScale, .a = a.id(), .c = c, .needs_grad = node(a).needs_grad,
           .value = memformer::scale(c, val(a))};
    return push(std::move(n));
  }

  Value transpose(Value a) {
    Node n{.op = Op::kTranspose, .a = a.id(), .needs_grad = node(a).needs_grad,
           .value = memformer::transpose(val(a))};
    return push(std::move(n));
  }

  Value smul(Value s, Value a) {
    if (!val(s).is_scalar()) {
      throw std::invalid_argument("smul: left operand must be 1x1, got " +
                                  val(s).shape_str());
    }
    return push_binary(Op::kSMul, s, a, memformer::smul(val(s), val(a)));
  }

  Value entry(Value a, int i, int j) {
    const Matrix& m = val(a);
    if (i < 0 || i >= m.rows() || j < 0 || j >= m.cols()) {
      throw std::invalid_argument("entry: index (" + std::to_string(i) + "," +
                                  std::to_string(j) + ") outside " + m.shape_str());
    }
    Node n{.op = Op::kEntry, .a = a.id(), .i = i, .j = j,
           .needs_grad = node(a).needs_grad, .value = Matrix::scalar(m(i, j))};
    return push(std::move(n));
  }

  Value square(Value a) {
    if (!val(a).is_scalar()) {
      throw std::invalid_argument("square: scalar (1x1) operand required, got " +
                                  val(a).shape_str());
    }
    const double x = val(a)(0, 0);
    Node n{.op = Op::kSquare, .a = a.id(), .needs_grad = node(a).needs_grad,
           .value = Matrix::scalar(x * x)};
    return push(std::move(n));
  }

  Value mean(const std::vector<Value>& xs) {
    if (xs.empty()) throw std::invalid_argument("mean: empty operand list");
    double s = 0.0;
    bool needs = false;
    const int first = static_cast<int>(kary_pool_.size());
    for (const Value& x : xs) {
      if (!val(x).is_scalar()) {
        throw std::invalid_argument("mean: scalar (1x1) operands required, got " +
                                    val(x).shape_str());
      }
      s += val(x)(0, 0);
      needs = needs || node(x).needs_grad;
      kary_pool_.push_back(x.id());
    }
    Node n{.op = Op::kMean, .kary_first = first,
           .kary_count = static_cast<int>(xs.size()), .needs_grad = needs,
           .value = Matrix::scalar(s / static_cast<double>(xs.size()))};
    return push(std::move(n));
  }

  // Reverse sweep from a scalar root. Returns d(root)/d(leaf) indexed by
  // leaf id (length param_count); leaves never used by the root get zeros.
  std::vector<Matrix> backward(Value root, int param_count) const {
    const Node& r = node(root);
    if (!r.value.is_scalar()) {
      throw std::invalid_argument("backward: root must be scalar (1x1), got " +
                                  r.value.shape_str());
    }
    std::vector<Matrix> adj(nodes_.size());
    adj[root.id()] = Matrix::scalar(1.0);
    for (int id = root.id(); id >= 0; --id) {
      const Node& n = nodes_[id];
      if (!n.needs_grad && n.op != Op::kLeaf) continue;
      const Matrix& g = adj[id];
      if (g.size() == 0) continue;
      propagate(n, g, adj);
    }
    std::vector<Matrix> grads(param_count);
    for (int leaf_id = 0; leaf_id < param_count; ++leaf_id) {
      const int nid = leaf_id < static_cast<int>(leaf_nodes_.size())
                          ? leaf_nodes_[leaf_id] : -1;
      if (nid < 0) continue;  // never registered; caller decides
      const Matrix& v = nodes_[nid].value;
      grads[leaf_id] = adj[nid].size() != 0 ? adj[nid] : Matrix(v.rows(), v.cols());
    }
    return grads;
  }

  Tape() { nodes_.reserve(256); }

  const Matrix& val(Value v) const { return node(v).value; }
  std::size_t node_count() const { return nodes_.size(); }

  void reset() {
    nodes_.clear();
    kary_pool_.clear();
    leaf_nodes_.clear();
  }

 private:
  friend class Value;

  const Node& node(Value v) const {
    if (v.tape() != this || v.id() < 0 || v.id() >= static_cast<int>(nodes_.size())) {
      throw std::invalid_argument("Tape: value does not belong to this tape");
    }
    return nodes_[v.id()];
  }

  Value push(Node n) {
    nodes_.push_back(std::move(n));
    return Value(this, static_cast<int>(nodes_.size()) - 1);
  }

  Value push_binary(Op op, Value a, Value b, Matrix forward) {
    Node n{.op = op, .a = a.id(), .b = b.id(),
           .needs_grad = node(a).needs_grad || node(b).needs_grad,
           .value = std::move(forward)};
    return push(std::move(n));
  }

  void accumulate(std::vector<Matrix>& adj, int id, const Matrix& g) const {
    const Node& n = nodes_[id];
    if (!n.needs_grad) return;
    if (adj[id].size() == 0) {
      adj[id] = g;
    } else {
      detail::require_same_shape("accumulate", adj[id], g);
      double* dst = adj[id].data().data();
      const double* src = g.data().data();
      for (std::size_t i = 0; i < g.size(); ++i) dst[i] += src[i];
    }
  }

  void propagate(const Node& n, const Matrix& g, std::vector<Matrix>& adj) const {
    const auto wants = [this](int id) { return nodes_[id].needs_grad; };
    switch (n.op) {
      case Op::kConst:
      case Op::kLeaf:
        break;
      case Op::kAdd:
        if (wants(n.a)) accumulate(adj, n.a, g);
        if (wants(n.b)) accumulate(adj, n.b, g);
        break;
      case Op::kSub:
        if (wants(n.a)) accumulate(adj, n.a, g);
        if (wants(n.b)) accumulate(adj, n.b, memformer::neg(g));
        break;
      case Op::kScale:
        if (wants(n.a)) accumulate(adj, n.a, memformer::scale(n.c, g));
        break;
      case Op::kMatMul:
        // c = a b: da = g b^T, db = a^T g
        if (wants(n.a)) accumulate(adj, n.a, memformer::matmul_nt(g, nodes_[n.b].value));
        if (wants(n.b)) accumulate(adj, n.b, memformer::matmul_tn(nodes_[n.a].value, g));
        break;
      case Op::kTranspose:
        if (wants(n.a)) accumulate(adj, n.a, memformer::transpose(g));
        break;
      case Op::kHadamard:
        if (wants(n.a)) accumulate(adj, n.a, memformer::hadamard(g, nodes_[n.b].value));
        if (wants(n.b)) accumulate(adj, n.b, memformer::hadamard(g, nodes_[n.a].value));
        break;
      case Op::kSMul: {
        // c = s m: ds = <g, m>, dm = s g
        if (wants(n.a)) accumulate(adj, n.a, Matrix::scalar(memformer::dot(g, nodes_[n.b].value)));
        if (wants(n.b)) accumulate(adj, n.b, memformer::scale(nodes_[n.a].value(0, 0), g));
        break;
      }
      case Op::kEntry: {
        const Matrix& src = nodes_[n.a].value;
        Matrix d(src.rows(), src.cols());
        d(n.i, n.j) = g(0, 0);
        accumulate(adj, n.a, d);
        break;
      }
      case Op::kSquare:
        accumulate(adj, n.a,
                   Matrix::scalar(2.0 * nodes_[n.a].value(0, 0) * g(0, 0)));
        break;
      case Op::kMean: {
        const double w = g(0, 0) / static_cast<double>(n.kary_count);
        for (int k = 0; k < n.kary_count; ++k) {
          accumulate(adj, kary_pool_[n.kary_first + k], Matrix::scalar(w));
        }
        break;
      }
    }
  }

  std::vector<Node> nodes_;
  std::vector<int> kary_pool_;
  std::vector<int> leaf_nodes_;
};

inline const Matrix& Value::value() const { return tape_->val(*this); }

// Free-function spellings so templated model code works on Value exactly
// as it does on Matrix.
inline Value add(Value a, Value b) { return a.tape()->add(a, b); }
inline Value sub(Value a, Value b) { return a.tape()->sub(a, b); }
inline Value hadamard(Value a, Value b) { return a.tape()->hadamard(a, b); }
inline Value matmul(Value a, Value b) { return a.tape()->matmul(a, b); }
inline Value scale(double c, Value a) { return a.tape()->scale(c, a); }
inline Value transpose(Value a) { return a.tape()->transpose(a); }
inline Value smul(Value s, Value a) { return s.tape()->smul(s, a); }
inline Value entry(Value a, int i, int j) { return a.tape()->entry(a, i, j); }
inline Value square(Value a) { return a.tape()->square(a); }
inline Value mean(const std::vector<Value>& xs) { return xs.front().tape()->mean(xs); }

inline Matrix entry(const Matrix& a, int i, int j) {
  if (i < 0 || i >= a.rows() || j < 0 || j >= a.cols()) {
    throw std::invalid_argument("entry: index (" + std::to_string(i) + "," +
                                std::to_string(j) + ") outside " + a.shape_str());
  }
  return Matrix::scalar(a(i, j));
}

inline Matrix square(const Matrix& a) {
  if (!a.is_scalar()) {
    throw std::invalid_argument("square: scalar (1x1) operand required, got " +
                                a.shape_str());
  }
  return Matrix::scalar(a(0, 0) * a(0, 0));
}

inline Matrix mean(const std::vector<Matrix>& xs) {
  if (xs.empty()) throw std::invalid_argument("mean: empty operand list");
  double s = 0.0;
  for (const Matrix& x : xs) {
    if (!x.is_scalar()) {
      throw std::invalid_argument("mean: scalar (1x1) operands required, got " +
                                  x.shape_str());
    }
    s += x(0, 0);
  }
  return Matrix::scalar(s / static_cast<double>(xs.size()));
}

}  // namespace memformer
