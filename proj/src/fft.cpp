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

#include "s2cp/fft.hpp"

#include <cmath>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "s2cp/errors.hpp"

namespace s2cp::fft {

namespace {

// cos/sin of 2 pi k / n, exact at multiples of a quarter turn so that
// self-conjugate bins of real input come out with exactly zero imaginary part.
template <typename T>
std::vector<std::pair<T, T>> twiddles(std::size_t n, Direction dir) {
  std::vector<std::pair<T, T>> tw(n / 2);
  const double sign = dir == Direction::kForward ? -1.0 : 1.0;
  for (std::size_t k = 0; k < n / 2; ++k) {
    double c, s;
    if ((4 * k) % n == 0) {
      const std::size_t quarter = (4 * k) / n;  // 0 or 1 since k < n/2
      c = quarter == 0 ? 1.0 : 0.0;
      s = quarter == 0 ? 0.0 : 1.0;
    } else {
      const double a = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
      c = std::cos(a);
      s = std::sin(a);
    }
    tw[k] = {static_cast<T>(c), static_cast<T>(sign * s)};
  }
  return tw;
}

template <typename T>
void radix2(T* re, T* im, std::size_t n, const std::vector<std::pair<T, T>>& tw) {
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) {
      std::swap(re[i], re[j]);
      std::swap(im[i], im[j]);
    }
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t step = n / len;
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t j = 0; j < half; ++j) {
        const auto [wr, wi] = tw[j * step];
        const std::size_t a = i + j;
        const std::size_t b = a + half;
        const T vr = re[b] * wr - im[b] * wi;
        const T vi = re[b] * wi + im[b] * wr;
        re[b] = re[a] - vr;
        im[b] = im[a] - vi;
        re[a] += vr;
        im[a] += vi;
      }
    }
  }
}

void check_size(std::size_t n) {
  if (!is_power_of_two(n)) {
    throw ShapeError("FFT length " + std::to_string(n) + " is not a power of two");
  }
}

}  // namespace

template <typename T>
void transform_1d(T* re, T* im, std::size_t n, std::size_t stride, Direction dir) {
  check_size(n);
  const auto tw = twiddles<T>(n, dir);
  if (stride == 1) {
    radix2(re, im, n, tw);
    return;
  }
  std::vector<T> br(n), bi(n);
  for (std::size_t i = 0; i < n; ++i) {
    br[i] = re[i * stride];
    bi[i] = im[i * stride];
  }
  radix2(br.data(), bi.data(), n, tw);
  for (std::size_t i = 0; i < n; ++i) {
    re[i * stride] = br[i];
    im[i * stride] = bi[i];
  }
}

template <typename T>
void transform_2d(T* re, T* im, std::size_t h, std::size_t w, Direction dir) {
  check_size(h);
  check_size(w);
  const auto tw_row = twiddles<T>(w, dir);
  for (std::size_t r = 0; r < h; ++r) radix2(re + r * w, im + r * w, w, tw_row);
  const auto tw_col = twiddles<T>(h, dir);
  std::vector<T> br(h), bi(h);
  for (std::size_t c = 0; c < w; ++c) {
    for (std::size_t r = 0; r < h; ++r) {
      br[r] = re[r * w + c];
      bi[r] = im[r * w + c];
    }
    radix2(br.data(), bi.data(), h, tw_col);
    for (std::size_t r = 0; r < h; ++r) {
      re[r * w + c] = br[r];
      im[r * w + c] = bi[r];
    }
  }
}

template void transform_1d(float*, float*, std::size_t, std::size_t, Direction);
template void transform_1d(double*, double*, std::size_t, std::size_t, Direction);
template void transform_2d(float*, float*, std::size_t, std::size_t, Direction);
template void transform_2d(double*, double*, std::size_t, std::size_t, Direction);

}  // namespace s2cp::fft
