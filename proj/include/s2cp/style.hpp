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

#include "s2cp/ops.hpp"
#include "s2cp/tensor.hpp"

namespace s2cp {

inline constexpr double kSigmaMin = 1e-5;
inline constexpr double kVarianceFloor = 1e-10;

/// Per-sample channel mean and standard deviation over H*W.
struct ChannelStats {
  std::vector<double> mu;
  std::vector<double> sigma;  // >= kSigmaMin
};

/// Running style statistics of one source domain at one SSR site.
struct StylePrototype {
  int domain_id = 0;
  std::vector<double> mu;
  std::vector<double> sigma;
  bool initialized = false;
  std::uint64_t update_count = 0;
};

/// Channel ranking key for the top-tau selection.
enum class StyleRanking { kSigma, kMu };

/// One selective style recomposition site (an encoder stage).
struct SsrSite {
  std::size_t stage = 1;
  std::vector<StylePrototype> prototypes;  // one per source domain, indexed by domain id
  double tau = 0.3;
  double lambda = 0.3;
  double alpha = 0.95;
  StyleRanking ranking = StyleRanking::kSigma;

  SsrSite() = default;
  SsrSite(std::size_t stage_index, std::size_t domains, std::size_t channels);
  void validate() const;
};

template <typename T>
ChannelStats channel_stats(const BasicTensor<T>& features, std::size_t sample);

/// EMA update p <- alpha p + (1 - alpha) s; the first update copies s.
/// Throws ValueError outside training.
StylePrototype update_prototype(StylePrototype proto, const ChannelStats& stats, double alpha,
                                Mode mode);

/// KL(N(mu, sigma^2) || N(p_mu, p_sigma^2)) for diagonal Gaussians, summed over channels.
double gaussian_kl(const ChannelStats& stats, const StylePrototype& proto);

/// Softmax of negative KL over the initialized prototypes (uninitialized ones
/// get zero weight). Throws ValueError when none is initialized.
std::vector<double> attribution(const ChannelStats& stats, const SsrSite& site);

/// Number of channels selected for a ratio tau: round(tau * C), at least 1.
std::size_t selected_channel_count(double tau, std::size_t channels);

/// 1 for the channels with the largest ranking statistic; ties keep the lower index.
std::vector<std::uint8_t> activation_mask(const ChannelStats& stats, double tau,
                                          StyleRanking ranking = StyleRanking::kSigma);

/// Selective style recomposition of a (N, C, H, W) feature map.
///
/// In training, `domains` (one id per sample) drives the prototype update that
/// precedes attribution; pass `update_prototypes = false` to freeze them. In
/// eval the prototypes are only read. Gradients flow through the features and
/// their own statistics; prototypes are constants. Returns the input unchanged
/// when no prototype has been initialized yet.
template <typename T>
BasicTensor<T> recompose(const BasicTensor<T>& features, SsrSite& site, Mode mode,
                         std::span<const int> domains, bool update_prototypes = true);

}  // namespace s2cp
