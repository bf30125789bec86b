// Copyright (c) 2026 The sdet Authors. All Rights Reserved.
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

#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "sdet/common/matrix.hpp"
#include "sdet/sparse/sparse_tensor.hpp"

namespace sdet::nn {

// Tape recording is on by default; NoGradGuard turns it off for the current
// thread (inference, evaluation).
class GradMode {
 public:
  static bool enabled() noexcept { return enabled_; }
  static void set(bool on) noexcept { enabled_ = on; }

 private:
  static inline thread_local bool enabled_ = true;
};

class NoGradGuard {
 public:
  NoGradGuard() : prev_(GradMode::enabled()) { GradMode::set(false); }
  ~NoGradGuard() { GradMode::set(prev_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

template <class T>
struct Node {
  Matrix<T> value;
  Matrix<T> grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this->grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward_fn;

  bool is_leaf() const noexcept { return parents.empty(); }
  Matrix<T>& ensure_grad() {
    if (!grad.same_shape(value)) grad = Matrix<T>(value.rows(), value.cols());
    return grad;
  }
};

// Handle to a tape node. Copies share the node.
template <class T>
class Var {
 public:
  Var() = default;
  explicit Var(Matrix<T> value, bool requires_grad = false) : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  static Var constant(Matrix<T> value) { return Var(std::move(value), false); }
  static Var leaf(Matrix<T> value) { return Var(std::move(value), true); }

  // Creates an op node. The tape link is only recorded when gradients are
  // enabled and some parent needs them.
  static Var make(Matrix<T> value, std::vector<Var> parents, std::function<void(Node<T>&)> backward_fn,
                  const char* op) {
    Var out(std::move(value), false);
    out.node_->op = op;
    if (!GradMode::enabled()) return out;
    bool any = false;
    for (const auto& p : parents) any = any || (p.node_ && p.node_->requires_grad);
    if (!any) return out;
    out.node_->requires_grad = true;
    for (auto& p : parents) out.node_->parents.push_back(p.node_);
    out.node_->backward_fn = std::move(backward_fn);
    return out;
  }

  bool defined() const noexcept { return node_ != nullptr; }
  const Matrix<T>& value() const { return node_->value; }
  Matrix<T>& mutable_value() { return node_->value; }
  const Matrix<T>& grad() const { return node_->grad; }
  Matrix<T>& mutable_grad() { return node_->ensure_grad(); }
  bool has_grad() const { return node_->grad.same_shape(node_->value) && !node_->value.empty(); }
  bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  void zero_grad() {
    if (node_->grad.same_shape(node_->value)) node_->grad.fill(T(0));
  }
  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }
  const char* op() const { return node_->op; }

  const std::shared_ptr<Node<T>>& node() const noexcept { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

// Reverse pass from a 1x1 root. Intermediate gradients are reset on every
// call; leaf gradients accumulate across calls until zeroed.
template <class T>
void backward(const Var<T>& loss);

// Feature matrix on a shared sparse geometry.
template <class T>
struct SparseVar {
  sparse::CoordSetPtr geom;
  Var<T> feats;

  std::size_t size() const { return geom ? geom->size() : 0; }
  std::size_t channels() const { return feats.cols(); }
  int stride() const { return geom->stride(); }
};

template <class T>
SparseVar<T> constant(const sparse::SparseTensor<T>& x) {
  return {x.geom, Var<T>::constant(x.feats)};
}

}  // namespace sdet::nn
