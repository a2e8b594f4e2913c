// Copyright 2026 The SmoothNet Authors.
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

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "smoothnet/common.hpp"

namespace smoothnet {

using Shape = std::vector<int>;

inline std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) {
      throw ShapeError("tensor extent must be positive, got " +
                       std::to_string(d));
    }
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

template <typename T>
class Tape;

// Dense row-major n-d array. Copies are shallow: they share the underlying
// buffer; clone() makes a deep copy. A tensor participates in
// differentiation either as a leaf (requires_grad set and touched by a
// recorded op) or as the output of a recorded op. The node handle below is
// bookkeeping owned by the tape a tensor was last recorded on.
template <typename T>
class Tensor {
 public:
  Tensor() : data_(std::make_shared<std::vector<T>>()) {}
  explicit Tensor(Shape shape)
      : shape_(std::move(shape)),
        data_(std::make_shared<std::vector<T>>(shape_numel(shape_), T(0))) {}
  Tensor(Shape shape, std::vector<T> values)
      : shape_(std::move(shape)),
        data_(std::make_shared<std::vector<T>>(std::move(values))) {
    if (data_->size() != shape_numel(shape_)) {
      throw ShapeError("tensor init: " + std::to_string(data_->size()) +
                       " values for shape " + shape_str(shape_));
    }
  }

  static Tensor scalar(T v) { return Tensor({1}, {v}); }
  static Tensor full(Shape shape, T v) {
    Tensor t(std::move(shape));
    std::fill(t.data_->begin(), t.data_->end(), v);
    return t;
  }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  std::size_t numel() const { return data_->size(); }

  T* data() { return data_->data(); }
  const T* data() const { return data_->data(); }
  T& operator[](std::size_t i) { return (*data_)[i]; }
  const T& operator[](std::size_t i) const { return (*data_)[i]; }

  // Row-major element access; intended for tests and small utilities.
  T at(std::initializer_list<int> idx) const {
    if (static_cast<int>(idx.size()) != rank()) {
      throw ShapeError("at(): index rank mismatch");
    }
    std::size_t off = 0;
    int d = 0;
    for (int i : idx) {
      if (i < 0 || i >= shape_[static_cast<std::size_t>(d)]) {
        throw ShapeError("at(): index out of range");
      }
      off = off * static_cast<std::size_t>(shape_[static_cast<std::size_t>(d)]) +
            static_cast<std::size_t>(i);
      ++d;
    }
    return (*data_)[off];
  }

  T value() const {
    if (numel() != 1) {
      throw ShapeError("value() on non-scalar tensor " + shape_str(shape_));
    }
    return (*data_)[0];
  }

  Tensor clone() const {
    Tensor t;
    t.shape_ = shape_;
    t.data_ = std::make_shared<std::vector<T>>(*data_);
    t.requires_grad_ = requires_grad_;
    return t;
  }

  // Shares the buffer; the result carries fresh autodiff bookkeeping.
  Tensor reshaped(Shape shape) const {
    if (shape_numel(shape) != numel()) {
      throw ShapeError("reshape " + shape_str(shape_) + " -> " +
                       shape_str(shape) + ": element count changed");
    }
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = data_;
    return t;
  }

  bool requires_grad() const { return requires_grad_; }
  Tensor& set_requires_grad(bool b) {
    requires_grad_ = b;
    return *this;
  }

 private:
  friend class Tape<T>;
  Shape shape_;
  std::shared_ptr<std::vector<T>> data_;
  bool requires_grad_ = false;
  // Which tape generation the node id belongs to; stale ids are re-assigned.
  mutable std::uint64_t tape_id_ = 0;
  mutable int node_ = -1;
};

template <typename T>
void check_finite(const Tensor<T>& t, const char* op) {
  const T* p = t.data();
  const std::size_t n = t.numel();
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(static_cast<double>(p[i]))) {
      throw NumericError(std::string(op) + ": non-finite value in output");
    }
  }
}

// Reverse-mode record of executed primitive ops. Ops append themselves in
// execution order, which is topological by construction, so backward() is a
// single reverse walk that visits each op exactly once. A tape instance is
// single-threaded; distinct tapes may run on distinct threads.
//
// Usage per step: run the forward ops with a tape pointer, call backward()
// on the scalar loss, read grad() for each watched tensor, then reset().
template <typename T>
class Tape {
 public:
  // grad sinks aligned with an op's inputs; null for untracked inputs.
  using GradSinks = std::vector<std::vector<T>*>;
  using BackwardFn =
      std::function<void(const std::vector<T>& grad_out, const GradSinks&)>;

  Tape() : id_(fresh_id()) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Marks t as a differentiable leaf on this tape; idempotent.
  int watch(const Tensor<T>& t) { return ensure_node(t); }

  bool tracked(const Tensor<T>& t) const {
    return t.tape_id_ == id_ && t.node_ >= 0;
  }

  static bool wants_grad(const Tape* tape,
                         std::initializer_list<const Tensor<T>*> inputs) {
    if (!tape) return false;
    for (const Tensor<T>* t : inputs) {
      if (t->requires_grad() || tape->tracked(*t)) return true;
    }
    return false;
  }

  void record(const char* name,
              std::initializer_list<const Tensor<T>*> inputs,
              const Tensor<T>& out, BackwardFn bw) {
    std::vector<int> ids;
    ids.reserve(inputs.size());
    for (const Tensor<T>* t : inputs) {
      ids.push_back(tracked(*t) || t->requires_grad() ? ensure_node(*t) : -1);
    }
    const int out_id = ensure_node(out);
    ops_.push_back(OpRecord{name, std::move(ids), out_id, std::move(bw)});
  }

  void backward(const Tensor<T>& loss) {
    if (ops_.empty()) throw TapeError("backward: nothing recorded");
    if (!tracked(loss)) {
      throw TapeError("backward: loss is not recorded on this tape");
    }
    if (loss.numel() != 1) {
      throw TapeError("backward: loss must be scalar, got " +
                      shape_str(loss.shape()));
    }
    grads_.assign(node_numel_.size(), {});
    grads_[static_cast<std::size_t>(loss.node_)] = {T(1)};
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
      const std::vector<T>& go = grads_[static_cast<std::size_t>(it->output)];
      if (go.empty()) continue;  // output did not influence the loss
      GradSinks sinks;
      sinks.reserve(it->inputs.size());
      for (int id : it->inputs) {
        sinks.push_back(id < 0 ? nullptr : &grad_buffer(id));
      }
      it->backward(go, sinks);
    }
  }

  bool has_grad(const Tensor<T>& t) const {
    return tracked(t) && !grads_.empty() &&
           !grads_[static_cast<std::size_t>(t.node_)].empty();
  }

  // Gradient from the most recent backward(). Zero tensor when the tracked
  // tensor did not influence the loss.
  Tensor<T> grad(const Tensor<T>& t) const {
    if (!tracked(t)) throw TapeError("grad: tensor is not on this tape");
    if (grads_.empty()) throw TapeError("grad: backward() has not run");
    Tensor<T> out(t.shape());
    const auto& g = grads_[static_cast<std::size_t>(t.node_)];
    if (!g.empty()) std::copy(g.begin(), g.end(), out.data());
    return out;
  }

  // Clears ops and gradients and invalidates all node handles.
  void reset() {
    ops_.clear();
    node_numel_.clear();
    grads_.clear();
    id_ = fresh_id();
  }

  std::size_t op_count() const { return ops_.size(); }

 private:
  struct OpRecord {
    const char* name;
    std::vector<int> inputs;
    int output;
    BackwardFn backward;
  };

  static std::uint64_t fresh_id() {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1, std::memory_order_relaxed);
  }

  int ensure_node(const Tensor<T>& t) {
    if (t.tape_id_ == id_ && t.node_ >= 0) return t.node_;
    t.tape_id_ = id_;
    t.node_ = static_cast<int>(node_numel_.size());
    node_numel_.push_back(t.numel());
    return t.node_;
  }

  std::vector<T>& grad_buffer(int id) {
    auto& g = grads_[static_cast<std::size_t>(id)];
    if (g.empty()) g.assign(node_numel_[static_cast<std::size_t>(id)], T(0));
    return g;
  }

  std::uint64_t id_;
  std::vector<OpRecord> ops_;
  std::vector<std::size_t> node_numel_;
  std::vector<std::vector<T>> grads_;
};

}  // namespace smoothnet
