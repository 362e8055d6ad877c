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

#include <random>
#include <vector>

#include "s2cp/tensor.hpp"

namespace s2cp {

inline constexpr double kLeakySlope = 0.01;

enum class Mode { kTrain, kEval };

/// Convolution weights (C_out, C_in, k, k) and bias (C_out).
template <typename T>
struct BasicConvParams {
  BasicTensor<T> weight;
  BasicTensor<T> bias;  // may be undefined (no bias)
  std::size_t stride = 1;
  std::size_t padding = 0;

  std::size_t out_channels() const { return weight.shape().n; }
  std::size_t in_channels() const { return weight.shape().c; }
  std::size_t kernel() const { return weight.shape().h; }
};

enum class ConvInit { kKaimingUniform, kZero };

/// Fan-in uniform weights, zero bias; kZero zeroes the weights too.
template <typename T>
BasicConvParams<T> make_conv(std::size_t in_channels, std::size_t out_channels,
                             std::size_t kernel, std::mt19937_64& rng,
                             ConvInit init = ConvInit::kKaimingUniform, bool bias = true);

/// Per-channel batch normalization state.
template <typename T>
struct BasicBatchNormParams {
  BasicTensor<T> gamma;
  BasicTensor<T> beta;
  std::vector<T> running_mean;
  std::vector<T> running_var;
  T epsilon = T(1e-5);
  T momentum = T(0.1);
  bool running_initialized = false;

  std::size_t channels() const { return running_mean.size(); }
  /// Marks running stats as (mean 0, var 1) so eval mode is usable.
  void reset_running_stats();
};

template <typename T>
BasicBatchNormParams<T> make_batch_norm(std::size_t channels);

using ConvParams = BasicConvParams<float>;
using BatchNormParams = BasicBatchNormParams<float>;

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicConvParams<T>& p);

/// Train mode normalizes with batch statistics over (N, H, W) and updates the
/// running statistics; eval mode uses the running statistics.
template <typename T>
BasicTensor<T> batch_norm(const BasicTensor<T>& x, BasicBatchNormParams<T>& p, Mode mode);

enum class Unary { kLeakyRelu, kTanh, kSigmoid, kExp, kLog, kSqrt, kSquare, kCos, kSin };

template <typename T>
BasicTensor<T> unary(const BasicTensor<T>& x, Unary kind);

template <typename T>
BasicTensor<T> leaky_relu(const BasicTensor<T>& x) { return unary(x, Unary::kLeakyRelu); }
template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x) { return unary(x, Unary::kSigmoid); }
template <typename T>
BasicTensor<T> tanh(const BasicTensor<T>& x) { return unary(x, Unary::kTanh); }

/// a * x + b elementwise.
template <typename T>
BasicTensor<T> affine(const BasicTensor<T>& x, T a, T b);

/// max(x, floor); gradient passes only where x > floor.
template <typename T>
BasicTensor<T> clamp_min(const BasicTensor<T>& x, T floor);

enum class Binary { kAdd, kSub, kMul, kDiv };

/// Elementwise with singleton-axis broadcasting: on every axis the extents
/// must match or one of them must be 1.
template <typename T>
BasicTensor<T> binary(const BasicTensor<T>& a, const BasicTensor<T>& b, Binary kind);

template <typename T>
BasicTensor<T> operator+(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return binary(a, b, Binary::kAdd);
}
template <typename T>
BasicTensor<T> operator-(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return binary(a, b, Binary::kSub);
}
template <typename T>
BasicTensor<T> operator*(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return binary(a, b, Binary::kMul);
}
template <typename T>
BasicTensor<T> operator/(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return binary(a, b, Binary::kDiv);
}

enum class Axis { kHeight, kWidth, kSpatial };

/// Mean over the axis, which is kept with extent 1.
template <typename T>
BasicTensor<T> axis_mean(const BasicTensor<T>& x, Axis axis);

/// Sum over channels: (N, C, H, W) -> (N, 1, H, W).
template <typename T>
BasicTensor<T> channel_sum(const BasicTensor<T>& x);

/// Softmax across channels at every (n, h, w).
template <typename T>
BasicTensor<T> softmax_channels(const BasicTensor<T>& x);

/// Sum of all elements as a (1,1,1,1) tensor.
template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x);

template <typename T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// Channels [begin, end).
template <typename T>
BasicTensor<T> slice_channels(const BasicTensor<T>& x, std::size_t begin, std::size_t end);

enum class Upsample { kBilinear, kNearest };

/// Doubles H and W. Bilinear uses half-pixel centers with edge clamping.
template <typename T>
BasicTensor<T> upsample2x(const BasicTensor<T>& x, Upsample method = Upsample::kBilinear);

/// 2x2 non-overlapping max; ties go to the first element in scan order.
template <typename T>
BasicTensor<T> maxpool2(const BasicTensor<T>& x);

/// 1 - (sum(p*y) + eps) / (sum(p) + sum(y) - sum(p*y) + eps), eps = 1e-6,
/// reduced jointly over the whole batch.
template <typename T>
BasicTensor<T> soft_iou_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target);

}  // namespace s2cp
