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

#include "s2cp/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "s2cp/fft.hpp"

namespace s2cp {

namespace {

// Transforms (re, im) plane by plane and returns the packed (N, 2C, H, W)
// result: real channels first, then imaginary channels.
template <typename T>
BasicTensor<T> packed_transform(const BasicTensor<T>& re, const BasicTensor<T>& im,
                                fft::Direction dir) {
  const Shape s = re.shape();
  if (im.defined() && im.shape() != s) {
    throw ShapeError("spectral transform: re " + to_string(s) + " vs im " + to_string(im.shape()));
  }
  if (!fft::is_power_of_two(s.h) || !fft::is_power_of_two(s.w)) {
    throw ShapeError("2-D FFT needs power-of-two spatial dims, got " + to_string(s));
  }
  const std::size_t pl = s.plane();
  const T scale = dir == fft::Direction::kInverse ? T(1) / static_cast<T>(pl) : T(1);
  const Shape os{s.n, 2 * s.c, s.h, s.w};
  std::vector<T> out(os.numel(), T(0));
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c) {
      T* pr = out.data() + (n * 2 * s.c + c) * pl;
      T* pi = out.data() + (n * 2 * s.c + s.c + c) * pl;
      const std::size_t src = (n * s.c + c) * pl;
      std::copy_n(re.values().data() + src, pl, pr);
      if (im.defined()) std::copy_n(im.values().data() + src, pl, pi);
      fft::transform_2d(pr, pi, s.h, s.w, dir);
      if (scale != T(1))
        for (std::size_t i = 0; i < pl; ++i) {
          pr[i] *= scale;
          pi[i] *= scale;
        }
    }

  // The adjoint of the transform is the opposite-direction transform with the same scale.
  const fft::Direction adjoint =
      dir == fft::Direction::kForward ? fft::Direction::kInverse : fft::Direction::kForward;
  auto backward = [s, pl, scale, adjoint](Node<T>& self) {
    Node<T>* rn = self.parents[0] && self.parents[0]->requires_grad ? self.parents[0].get() : nullptr;
    Node<T>* in = self.parents[1] && self.parents[1]->requires_grad ? self.parents[1].get() : nullptr;
    if (rn == nullptr && in == nullptr) return;
    std::vector<T> gr(pl), gi(pl);
    for (std::size_t n = 0; n < s.n; ++n)
      for (std::size_t c = 0; c < s.c; ++c) {
        std::copy_n(self.grad.data() + (n * 2 * s.c + c) * pl, pl, gr.data());
        std::copy_n(self.grad.data() + (n * 2 * s.c + s.c + c) * pl, pl, gi.data());
        fft::transform_2d(gr.data(), gi.data(), s.h, s.w, adjoint);
        const std::size_t dst = (n * s.c + c) * pl;
        if (rn) {
          T* g = rn->grad_buffer().data() + dst;
          for (std::size_t i = 0; i < pl; ++i) g[i] += scale * gr[i];
        }
        if (in) {
          T* g = in->grad_buffer().data() + dst;
          for (std::size_t i = 0; i < pl; ++i) g[i] += scale * gi[i];
        }
      }
  };
  return make_result<T>(os, std::move(out), {re, im}, backward);
}

template <typename T>
BasicComplexGrid<T> unpack(const BasicTensor<T>& packed) {
  const std::size_t c = packed.shape().c / 2;
  return {slice_channels(packed, 0, c), slice_channels(packed, c, 2 * c)};
}

template <typename T>
void check_pair(const BasicComplexGrid<T>& z) {
  if (z.re.shape() != z.im.shape()) {
    throw ShapeError("complex grid parts differ: " + to_string(z.re.shape()) + " vs " +
                     to_string(z.im.shape()));
  }
}

}  // namespace

double wrap_phase(double angle) {
  const double two_pi = 2.0 * std::numbers::pi;
  double r = std::fmod(angle + std::numbers::pi, two_pi);
  if (r <= 0) r += two_pi;
  return r - std::numbers::pi;
}

template <typename T>
BasicComplexGrid<T> fft2(const BasicTensor<T>& x) {
  return unpack(packed_transform(x, BasicTensor<T>(), fft::Direction::kForward));
}

template <typename T>
BasicComplexGrid<T> fft2(const BasicComplexGrid<T>& z) {
  check_pair(z);
  return unpack(packed_transform(z.re, z.im, fft::Direction::kForward));
}

template <typename T>
BasicComplexGrid<T> ifft2(const BasicComplexGrid<T>& z) {
  check_pair(z);
  return unpack(packed_transform(z.re, z.im, fft::Direction::kInverse));
}

template <typename T>
BasicPolarSpectrum<T> to_polar(const BasicComplexGrid<T>& z) {
  check_pair(z);
  const Shape s = z.shape();
  auto re = z.re.values();
  auto im = z.im.values();
  const T d2 = static_cast<T>(kMagnitudeDelta * kMagnitudeDelta);
  std::vector<T> amp(s.numel()), phase(s.numel());
  for (std::size_t i = 0; i < amp.size(); ++i) {
    amp[i] = std::sqrt(re[i] * re[i] + im[i] * im[i] + d2);
    // +0 imaginary part keeps the negative real axis at +pi
    phase[i] = std::atan2(im[i] == T(0) ? T(0) : im[i], re[i]);
  }

  auto amp_backward = [](Node<T>& self) {
    Node<T>* rn = self.parents[0]->requires_grad ? self.parents[0].get() : nullptr;
    Node<T>* in = self.parents[1]->requires_grad ? self.parents[1].get() : nullptr;
    const auto& a = self.value;
    const auto& re = self.parents[0]->value;
    const auto& im = self.parents[1]->value;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const T g = self.grad[i] / a[i];
      if (rn) rn->grad_buffer()[i] += g * re[i];
      if (in) in->grad_buffer()[i] += g * im[i];
    }
  };
  auto phase_backward = [d2](Node<T>& self) {
    Node<T>* rn = self.parents[0]->requires_grad ? self.parents[0].get() : nullptr;
    Node<T>* in = self.parents[1]->requires_grad ? self.parents[1].get() : nullptr;
    const auto& re = self.parents[0]->value;
    const auto& im = self.parents[1]->value;
    for (std::size_t i = 0; i < re.size(); ++i) {
      const T r2 = re[i] * re[i] + im[i] * im[i] + d2;
      const T g = self.grad[i] / r2;
      if (rn) rn->grad_buffer()[i] -= g * im[i];
      if (in) in->grad_buffer()[i] += g * re[i];
    }
  };
  return {make_result<T>(s, std::move(amp), {z.re, z.im}, amp_backward),
          make_result<T>(s, std::move(phase), {z.re, z.im}, phase_backward)};
}

template <typename T>
BasicComplexGrid<T> from_polar(const BasicPolarSpectrum<T>& s) {
  return {s.amplitude * unary(s.phase, Unary::kCos), s.amplitude * unary(s.phase, Unary::kSin)};
}

template <typename T>
BasicPrmParams<T> make_prm(std::size_t channels, std::mt19937_64& rng, ConvInit branch_init) {
  const std::size_t hidden = prm_hidden_width(channels);
  BasicPrmParams<T> p;
  p.bn = make_batch_norm<T>(channels);
  p.phase_in = make_conv<T>(channels, hidden, 1, rng);
  p.phase_out = make_conv<T>(hidden, channels, 1, rng, branch_init);
  p.amp_in = make_conv<T>(channels, hidden, 1, rng);
  p.amp_out = make_conv<T>(hidden, channels, 1, rng, branch_init);
  return p;
}

template <typename T>
BasicPrmTrace<T> prm_trace(const BasicTensor<T>& features, BasicPrmParams<T>& params, Mode mode) {
  if (features.shape().c != params.channels()) {
    throw ShapeError("PRM built for " + std::to_string(params.channels()) +
                     " channels, got input " + to_string(features.shape()));
  }
  const auto normalized = batch_norm(features, params.bn, mode);
  const auto polar = to_polar(fft2(normalized));
  const auto phase_shift =
      tanh(conv2d(leaky_relu(conv2d(polar.phase, params.phase_in)), params.phase_out));
  const auto amplitude =
      conv2d(leaky_relu(conv2d(polar.amplitude, params.amp_in)), params.amp_out);
  const auto indication = ifft2(from_polar(BasicPolarSpectrum<T>{amplitude, polar.phase + phase_shift})).re;
  return {indication * features + features, indication};
}

// ---------------------------------------------------------------------------
// Dataset profiling

SpectrumProfile dataset_spectrum_profile(std::span<const GrayImage> images) {
  if (images.size() < 2) throw ValueError("spectrum profile needs at least 2 images");
  const std::size_t h = images[0].height;
  const std::size_t w = images[0].width;
  if (!fft::is_power_of_two(h) || !fft::is_power_of_two(w)) {
    throw ShapeError("spectrum profile needs power-of-two image sizes");
  }
  // Bin of each unshifted frequency index after centering.
  std::vector<std::size_t> bin(h * w);
  std::size_t bins = 0;
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) {
      const double fr = static_cast<double>((r + h / 2) % h) - static_cast<double>(h / 2);
      const double fc = static_cast<double>((c + w / 2) % w) - static_cast<double>(w / 2);
      bin[r * w + c] = static_cast<std::size_t>(std::floor(std::sqrt(fr * fr + fc * fc)));
      bins = std::max(bins, bin[r * w + c] + 1);
    }
  SpectrumProfile out;
  out.image_count = images.size();
  out.bin_population.assign(bins, 0);
  for (std::size_t b : bin) out.bin_population[b] += 1;

  std::vector<double> magnitude_sum(bins, 0.0);
  std::vector<std::complex<double>> phasor_sum(h * w);
  std::vector<double> re(h * w), im(h * w);
  for (const auto& img : images) {
    if (img.height != h || img.width != w) {
      throw ShapeError("spectrum profile: image sizes differ");
    }
    std::copy(img.pixels.begin(), img.pixels.end(), re.begin());
    std::fill(im.begin(), im.end(), 0.0);
    fft::transform_2d(re.data(), im.data(), h, w, fft::Direction::kForward);
    for (std::size_t i = 0; i < h * w; ++i) {
      const double a = std::hypot(re[i], im[i]);
      magnitude_sum[bin[i]] += std::log1p(a) / static_cast<double>(out.bin_population[bin[i]]);
      phasor_sum[i] += std::polar(1.0, std::atan2(im[i] == 0.0 ? 0.0 : im[i], re[i]));
    }
  }
  const double count = static_cast<double>(images.size());
  out.radial_magnitude.assign(bins, 0.0);
  out.phase_congruency.assign(bins, 0.0);
  for (std::size_t b = 0; b < bins; ++b) out.radial_magnitude[b] = magnitude_sum[b] / count;
  for (std::size_t i = 0; i < h * w; ++i) {
    const double resultant = std::min(1.0, std::abs(phasor_sum[i]) / count);
    out.phase_congruency[bin[i]] += resultant / static_cast<double>(out.bin_population[bin[i]]);
  }
  for (auto& v : out.phase_congruency) v = std::clamp(v, 0.0, 1.0);
  return out;
}

ProfileDivergence profile_divergence(const SpectrumProfile& a, const SpectrumProfile& b) {
  const std::size_t bins = std::min(a.radial_magnitude.size(), b.radial_magnitude.size());
  if (bins == 0) throw ValueError("profile divergence of empty profiles");
  ProfileDivergence d;
  for (std::size_t i = 0; i < bins; ++i) {
    d.magnitude += std::abs(a.radial_magnitude[i] - b.radial_magnitude[i]);
    d.congruency += std::abs(a.phase_congruency[i] - b.phase_congruency[i]);
  }
  d.magnitude /= static_cast<double>(bins);
  d.congruency /= static_cast<double>(bins);
  return d;
}

#define S2CP_INSTANTIATE(T)                                                                \
  template BasicComplexGrid<T> fft2(const BasicTensor<T>&);                                \
  template BasicComplexGrid<T> fft2(const BasicComplexGrid<T>&);                           \
  template BasicComplexGrid<T> ifft2(const BasicComplexGrid<T>&);                          \
  template BasicPolarSpectrum<T> to_polar(const BasicComplexGrid<T>&);                     \
  template BasicComplexGrid<T> from_polar(const BasicPolarSpectrum<T>&);                   \
  template BasicPrmParams<T> make_prm(std::size_t, std::mt19937_64&, ConvInit);            \
  template BasicPrmTrace<T> prm_trace(const BasicTensor<T>&, BasicPrmParams<T>&, Mode);

S2CP_INSTANTIATE(float)
S2CP_INSTANTIATE(double)

#undef S2CP_INSTANTIATE

}  // namespace s2cp
