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

namespace s2cp::fft {

enum class Direction { kForward, kInverse };

constexpr bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

/// In-place radix-2 Cooley-Tukey transform of an h x w split-complex grid,
/// rows then columns. Unnormalized in both directions: kForward uses
/// exp(-2 pi i k n / N), kInverse uses exp(+2 pi i k n / N).
template <typename T>
void transform_2d(T* re, T* im, std::size_t h, std::size_t w, Direction dir);

/// Same, for one sequence of length n with element stride.
template <typename T>
void transform_1d(T* re, T* im, std::size_t n, std::size_t stride, Direction dir);

}  // namespace s2cp::fft
