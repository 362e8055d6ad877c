// Copyright 2026 The S2CP Authors. All Rights Reserved.
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

#include "s2cp/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <unordered_set>

namespace s2cp {

namespace {

thread_local bool g_grad_enabled = true;
std::atomic<std::uint64_t> g_next_id{1};

template <typename T>
bool all_finite(const std::vector<T>& v) {
  // Sum-based probe: any NaN/Inf poisons the accumulator.
  T acc = 0;
  for (T x : v) acc += x * T(0);
  return acc == T(0);
}

}  // namespace

std::string to_string(const Shape& s) {
  return "(" + std::to_string(s.n) + "," + std::to_string(s.c) + "," + std::to_string(s.h) +
         "," + std::to_string(s.w) + ")";
}

bool GradMode::enabled() { return g_grad_enabled; }
void GradMode::set_enabled(bool on) { g_grad_enabled = on; }

template <typename T>
std::vector<T>& Node<T>::grad_buffer() {
  if (grad.empty()) grad.assign(value.size(), T(0));
  return grad;
}

template <typename T>
Node<T>& BasicTensor<T>::node() const {
  if (!node_) throw ValueError("use of an undefined tensor");
  return *node_;
}

template <typename T>
BasicTensor<T> BasicTensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(shape, T(0), requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::full(Shape shape, T value, bool requires_grad) {
  return from(shape, std::vector<T>(shape.numel(), value), requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::from(Shape shape, std::vector<T> values, bool requires_grad) {
  if (values.size() != shape.numel()) {
    throw ShapeError("tensor of shape " + to_string(shape) + " needs " +
                     std::to_string(shape.numel()) + " values, got " +
                     std::to_string(values.size()));
  }
  if (!all_finite(values)) throw ValueError("non-finite value in tensor " + to_string(shape));
  auto node = std::make_shared<Node<T>>();
  node->shape = shape;
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  node->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  return BasicTensor(std::move(node));
}

template <typename T>
T BasicTensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
  return node().value[0];
}

template <typename T>
BasicTensor<T> BasicTensor<T>::detach() const {
  return from(shape(), node().value, false);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::clone(bool requires_grad) const {
  return from(shape(), node().value, requires_grad);
}

template <typename T>
void BasicTensor<T>::backward() const {
  Node<T>& root = node();
  if (root.shape.numel() != 1) {
    throw ShapeError("backward() needs a scalar loss, got shape " + to_string(root.shape));
  }
  if (!root.requires_grad) return;

  // Iterative post-order DFS gives a topological order (inputs before users).
  std::vector<Node<T>*> order;
  std::unordered_set<const Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{&root, 0}};
  seen.insert(&root);
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node<T>* p = n->parents[next++].get();
      if (p != nullptr && p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  for (Node<T>* n : order) {
    if (!n->is_leaf()) n->grad.assign(n->value.size(), T(0));
  }
  root.grad_buffer()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (!n->is_leaf()) n->backward(*n);
  }
}

template <typename T>
BasicTensor<T> make_result(Shape shape, std::vector<T> values,
                           std::vector<BasicTensor<T>> inputs, BackwardFn<T> backward) {
  BasicTensor<T> out = BasicTensor<T>::from(shape, std::move(values), false);
  if (!GradMode::enabled() || !backward) return out;
  bool any = std::any_of(inputs.begin(), inputs.end(),
                         [](const BasicTensor<T>& t) { return t.defined() && t.requires_grad(); });
  if (!any) return out;
  Node<T>& node = out.node();
  node.requires_grad = true;
  node.parents.reserve(inputs.size());
  for (auto& in : inputs) node.parents.push_back(in.node_ptr());
  node.backward = std::move(backward);
  return out;
}

template struct Node<float>;
template struct Node<double>;
template class BasicTensor<float>;
template class BasicTensor<double>;
template BasicTensor<float> make_result(Shape, std::vector<float>, std::vector<BasicTensor<float>>,
                                        BackwardFn<float>);
template BasicTensor<double> make_result(Shape, std::vector<double>,
                                         std::vector<BasicTensor<double>>, BackwardFn<double>);

}  // namespace s2cp
