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

#include "sdet/nn/autograd.hpp"

#include <unordered_set>

#include "sdet/common/error.hpp"

namespace sdet::nn {

template <class T>
void backward(const Var<T>& loss) {
  if (!loss.defined() || loss.rows() != 1 || loss.cols() != 1) {
    throw UsageError("backward() needs a scalar (1x1) loss");
  }
  Node<T>* root = loss.node().get();
  if (!root->requires_grad) return;

  // Post-order DFS gives a topological order with each node once.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{root, 0}};
  seen.insert(root);
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node<T>* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  for (Node<T>* n : order) {
    if (!n->is_leaf()) n->ensure_grad().fill(T(0));
  }
  root->ensure_grad()(0, 0) += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (!n->is_leaf() && n->backward_fn) n->backward_fn(*n);
  }
}

template void backward(const Var<float>&);
template void backward(const Var<double>&);

}  // namespace sdet::nn
