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
#include <span>
#include <vector>

#include "s2cp/image.hpp"
#include "s2cp/ops.hpp"
#include "s2cp/tensor.hpp"

namespace s2cp {

/// Per-channel 2-D spectrum in Cartesian form.
template <typename T>
struct BasicComplexGrid {
  BasicTensor<T> re;
  BasicTensor<T> im;
  const Shape& shape() const { return re.shape(); }
};

/// Polar view of a spectrum: amplitude >= 0, phase in (-pi, pi].
template <typename T>
struct BasicPolarSpectrum {
  BasicTensor<T> amplitude;
  BasicTensor<T> phase;
};

using ComplexGrid = BasicComplexGrid<float>;
using PolarSpectrum = BasicPolarSpectrum<float>;

/// Smoothing term inside the amplitude: sqrt(re^2 + im^2 + delta^2).
inline constexpr double kMagnitudeDelta = 1e-8;

/// Unnormalized forward 2-D FFT of every (n, c) plane. H and W must be powers of two.
template <typename T>
BasicComplexGrid<T> fft2(const BasicTensor<T>& x);
template <typename T>
BasicComplexGrid<T> fft2(const BasicComplexGrid<T>& z);
/// Inverse 2-D FFT including the 1/(H*W) factor.
template <typename T>
BasicComplexGrid<T> ifft2(const BasicComplexGrid<T>& z);

template <typename T>
BasicPolarSpectrum<T> to_polar(const BasicComplexGrid<T>& z);
template <typename T>
BasicComplexGrid<T> from_polar(const BasicPolarSpectrum<T>& s);

/// Phase rectification: a dedicated batch norm, a phase modulation branch and
/// an amplitude branch, each two 1x1 convolutions with a leaky-relu between.
template <typename T>
struct BasicPrmParams {
  BasicBatchNormParams<T> bn;
  BasicConvParams<T> phase_in;
  BasicConvParams<T> phase_out;
  BasicConvParams<T> amp_in;
  BasicConvParams<T> amp_out;

  std::size_t channels() const { return phase_in.in_channels(); }
  std::size_t hidden() const { return phase_in.out_channels(); }
};

using PrmParams = BasicPrmParams<float>;

/// Hidden width of the PRM branches: max(C / 2, 4).
constexpr std::size_t prm_hidden_width(std::size_t channels) {
  return channels / 2 < 4 ? 4 : channels / 2;
}

/// kZero zero-initializes the branch output convolutions (weights and biases),
/// which turns the module into the identity map.
template <typename T>
BasicPrmParams<T> make_prm(std::size_t channels, std::mt19937_64& rng,
                           ConvInit branch_init = ConvInit::kKaimingUniform);

/// Intermediates of one PRM evaluation.
template <typename T>
struct BasicPrmTrace {
  BasicTensor<T> output;      // M * E + E
  BasicTensor<T> indication;  // M, the real part of the inverse transform
};

template <typename T>
BasicPrmTrace<T> prm_trace(const BasicTensor<T>& features, BasicPrmParams<T>& params, Mode mode);

template <typename T>
BasicTensor<T> prm_forward(const BasicTensor<T>& features, BasicPrmParams<T>& params, Mode mode) {
  return prm_trace(features, params, mode).output;
}

/// Radial frequency statistics of an image collection.
struct SpectrumProfile {
  /// Mean over images of the per-bin mean of log(1 + amplitude).
  std::vector<double> radial_magnitude;
  /// Per-bin mean over frequencies of the resultant length of unit phasors
  /// across images (1 - circular variance); entries in [0, 1].
  std::vector<double> phase_congruency;
  std::vector<std::size_t> bin_population;
  std::size_t image_count = 0;
};

/// Bins are integer radii floor(|k|) of the centered frequency k.
SpectrumProfile dataset_spectrum_profile(std::span<const GrayImage> images);

/// Mean absolute difference of the magnitude and of the congruency profiles
/// over the bins both profiles share.
struct ProfileDivergence {
  double magnitude = 0.0;
  double congruency = 0.0;
};

ProfileDivergence profile_divergence(const SpectrumProfile& a, const SpectrumProfile& b);

/// Wraps an angle into (-pi, pi].
double wrap_phase(double angle);

}  // namespace s2cp
