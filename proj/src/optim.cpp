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

#include "s2cp/optim.hpp"

#include <cmath>
#include <string>

namespace s2cp {

template <typename T>
void adam_step(std::span<BasicTensor<T>> params, BasicAdamState<T>& state) {
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i].numel(), T(0));
      state.v[i].assign(params[i].numel(), T(0));
    }
  }
  if (state.m.size() != params.size()) {
    throw ShapeError("adam_step: state tracks " + std::to_string(state.m.size()) +
                     " parameters, got " + std::to_string(params.size()));
  }
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  const T b1 = static_cast<T>(state.beta1);
  const T b2 = static_cast<T>(state.beta2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.size() != p.numel()) throw ShapeError("adam_step: parameter " + std::to_string(i) + " changed size");
    auto values = p.mutable_values();
    auto grad = p.grad();
    for (std::size_t j = 0; j < values.size(); ++j) {
      const T g = grad.empty() ? T(0) : grad[j];
      m[j] = b1 * m[j] + (T(1) - b1) * g;
      v[j] = b2 * v[j] + (T(1) - b2) * g * g;
      const double mhat = static_cast<double>(m[j]) / c1;
      const double vhat = static_cast<double>(v[j]) / c2;
      values[j] -= static_cast<T>(state.lr * mhat / (std::sqrt(vhat) + state.eps));
    }
  }
}

template void adam_step(std::span<BasicTensor<float>>, BasicAdamState<float>&);
template void adam_step(std::span<BasicTensor<double>>, BasicAdamState<double>&);

}  // namespace s2cp
