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

#include <cstdint>
#include <span>
#include <vector>

#include "s2cp/tensor.hpp"

namespace s2cp {

/// Bias-corrected Adam moments for an ordered parameter list.
template <typename T>
struct BasicAdamState {
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
  std::uint64_t t = 0;
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

using AdamState = BasicAdamState<float>;

/// One Adam update of every parameter from its accumulated gradient. A
/// parameter without a gradient is treated as having a zero gradient. The
/// parameter list must keep the same order and shapes across calls.
template <typename T>
void adam_step(std::span<BasicTensor<T>> params, BasicAdamState<T>& state);

}  // namespace s2cp
