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

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "s2cp/errors.hpp"

namespace s2cp {

/// NCHW extent of a tensor. All tensors in the engine are rank 4.
struct Shape {
  std::size_t n = 1;
  std::size_t c = 1;
  std::size_t h = 1;
  std::size_t w = 1;

  constexpr std::size_t numel() const { return n * c * h * w; }
  constexpr std::size_t plane() const { return h * w; }
  friend constexpr bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(const Shape& s);

template <typename T>
struct Node;

template <typename T>
using BackwardFn = std::function<void(Node<T>& self)>;

/// One vertex of the differentiation graph. Owned through shared_ptr by the
/// tensors that reference it and by the nodes computed from it.
template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until the first gradient arrives
  bool requires_grad = false;
  std::uint64_t id = 0;
  std::vector<std::shared_ptr<Node>> parents;
  BackwardFn<T> backward;

  bool is_leaf() const { return !backward; }
  /// Grad buffer, allocated zero-filled on first use.
  std::vector<T>& grad_buffer();
};

/// Handle to a graph node. Copies share the node.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static BasicTensor zeros(Shape shape, bool requires_grad = false);
  static BasicTensor full(Shape shape, T value, bool requires_grad = false);
  /// Leaf from explicit values; throws if length or finiteness is wrong.
  static BasicTensor from(Shape shape, std::vector<T> values, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node().shape; }
  std::size_t numel() const { return node().shape.numel(); }
  std::span<const T> values() const { return node().value; }
  /// Mutable access for leaves (parameters, inputs). Callers keep values finite.
  std::span<T> mutable_values() { return node().value; }
  std::span<const T> grad() const { return node().grad; }
  bool has_grad() const { return !node().grad.empty(); }
  std::span<T> mutable_grad() { return node().grad_buffer(); }
  void zero_grad() { node().grad.clear(); }
  bool requires_grad() const { return node().requires_grad; }
  void set_requires_grad(bool flag) { node().requires_grad = flag; }
  std::uint64_t id() const { return node().id; }
  T item() const;
  T at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    const Shape& s = node().shape;
    return node().value[((n * s.c + c) * s.h + h) * s.w + w];
  }

  /// Same values in a fresh leaf that does not require grad.
  BasicTensor detach() const;
  /// Deep copy into a fresh leaf with the given requires-grad flag.
  BasicTensor clone(bool requires_grad = false) const;

  /// Reverse-mode sweep from this scalar. Leaf grads accumulate across calls;
  /// intermediate grads are recomputed on every call.
  void backward() const;

  Node<T>& node() const;
  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

/// Builds the result of an operation. When grad recording is enabled and any
/// input requires grad, the node keeps its inputs and the backward closure;
/// otherwise it is a plain leaf. Throws ValueError on non-finite values.
template <typename T>
BasicTensor<T> make_result(Shape shape, std::vector<T> values,
                           std::vector<BasicTensor<T>> inputs, BackwardFn<T> backward);

/// True when `node` participates in differentiation and wants a gradient.
template <typename T>
inline bool wants_grad(const std::shared_ptr<Node<T>>& node) {
  return node && node->requires_grad;
}

/// Thread-local switch for graph recording.
class GradMode {
 public:
  static bool enabled();
  static void set_enabled(bool on);
};

class NoGradGuard {
 public:
  NoGradGuard() : previous_(GradMode::enabled()) { GradMode::set_enabled(false); }
  ~NoGradGuard() { GradMode::set_enabled(previous_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Converts values between precisions, producing a leaf.
template <typename To, typename From>
BasicTensor<To> cast(const BasicTensor<From>& x, bool requires_grad = false) {
  std::vector<To> out(x.values().begin(), x.values().end());
  return BasicTensor<To>::from(x.shape(), std::move(out), requires_grad);
}

}  // namespace s2cp
