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

#include "s2cp/style.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <string>

namespace s2cp {

SsrSite::SsrSite(std::size_t stage_index, std::size_t domains, std::size_t channels)
    : stage(stage_index) {
  prototypes.resize(domains);
  for (std::size_t m = 0; m < domains; ++m) {
    prototypes[m].domain_id = static_cast<int>(m);
    prototypes[m].mu.assign(channels, 0.0);
    prototypes[m].sigma.assign(channels, 1.0);
  }
}

void SsrSite::validate() const {
  if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("SSR tau must lie in (0, 1]");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("SSR lambda must lie in [0, 1]");
  if (!(alpha >= 0.0 && alpha < 1.0)) throw ConfigError("SSR alpha must lie in [0, 1)");
  if (prototypes.empty()) throw ConfigError("SSR site needs at least one domain prototype");
}

template <typename T>
ChannelStats channel_stats(const BasicTensor<T>& features, std::size_t sample) {
  const Shape s = features.shape();
  if (sample >= s.n) throw ShapeError("channel_stats: sample index out of range");
  ChannelStats out;
  out.mu.resize(s.c);
  out.sigma.resize(s.c);
  const std::size_t pl = s.plane();
  for (std::size_t c = 0; c < s.c; ++c) {
    const T* v = features.values().data() + (sample * s.c + c) * pl;
    double m = 0;
    for (std::size_t i = 0; i < pl; ++i) m += v[i];
    m /= static_cast<double>(pl);
    double var = 0;
    for (std::size_t i = 0; i < pl; ++i) var += (v[i] - m) * (v[i] - m);
    var /= static_cast<double>(pl);
    out.mu[c] = m;
    out.sigma[c] = std::max(std::sqrt(var + kVarianceFloor), kSigmaMin);
  }
  return out;
}

StylePrototype update_prototype(StylePrototype proto, const ChannelStats& stats, double alpha,
                                Mode mode) {
  if (mode != Mode::kTrain) throw ValueError("style prototypes are only updated in training");
  if (proto.initialized && proto.mu.size() != stats.mu.size()) {
    throw ShapeError("prototype has " + std::to_string(proto.mu.size()) + " channels, stats have " +
                     std::to_string(stats.mu.size()));
  }
  if (!proto.initialized) {
    proto.mu = stats.mu;
    proto.sigma = stats.sigma;
    proto.initialized = true;
  } else {
    for (std::size_t c = 0; c < proto.mu.size(); ++c) {
      proto.mu[c] = alpha * proto.mu[c] + (1.0 - alpha) * stats.mu[c];
      proto.sigma[c] = std::max(alpha * proto.sigma[c] + (1.0 - alpha) * stats.sigma[c], kSigmaMin);
    }
  }
  proto.update_count += 1;
  return proto;
}

double gaussian_kl(const ChannelStats& stats, const StylePrototype& proto) {
  if (!proto.initialized) {
    throw ValueError("KL against uninitialized prototype of domain " + std::to_string(proto.domain_id));
  }
  if (proto.mu.size() != stats.mu.size()) throw ShapeError("gaussian_kl: channel count mismatch");
  double kl = 0;
  for (std::size_t c = 0; c < stats.mu.size(); ++c) {
    const double s = stats.sigma[c];
    const double ps = proto.sigma[c];
    const double dm = stats.mu[c] - proto.mu[c];
    kl += std::log(ps / s) + (s * s + dm * dm) / (2.0 * ps * ps) - 0.5;
  }
  return std::max(kl, 0.0);
}

std::vector<double> attribution(const ChannelStats& stats, const SsrSite& site) {
  std::vector<double> neg(site.prototypes.size(), 0.0);
  double top = -INFINITY;
  for (std::size_t m = 0; m < neg.size(); ++m) {
    if (!site.prototypes[m].initialized) continue;
    neg[m] = -gaussian_kl(stats, site.prototypes[m]);
    top = std::max(top, neg[m]);
  }
  if (top == -INFINITY) throw ValueError("attribution needs at least one initialized prototype");
  std::vector<double> kappa(neg.size(), 0.0);
  double z = 0;
  for (std::size_t m = 0; m < neg.size(); ++m) {
    if (!site.prototypes[m].initialized) continue;
    kappa[m] = std::exp(neg[m] - top);
    z += kappa[m];
  }
  for (auto& k : kappa) k /= z;
  return kappa;
}

std::size_t selected_channel_count(double tau, std::size_t channels) {
  const auto k = static_cast<std::size_t>(std::llround(tau * static_cast<double>(channels)));
  return std::clamp<std::size_t>(k, 1, channels);
}

std::vector<std::uint8_t> activation_mask(const ChannelStats& stats, double tau,
                                          StyleRanking ranking) {
  if (!(tau > 0.0 && tau <= 1.0)) throw ValueError("tau must lie in (0, 1]");
  const auto& key = ranking == StyleRanking::kSigma ? stats.sigma : stats.mu;
  std::vector<std::size_t> order(key.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return key[a] > key[b]; });
  std::vector<std::uint8_t> mask(key.size(), 0);
  const std::size_t count = selected_channel_count(tau, key.size());
  for (std::size_t i = 0; i < count; ++i) mask[order[i]] = 1;
  return mask;
}

template <typename T>
BasicTensor<T> recompose(const BasicTensor<T>& features, SsrSite& site, Mode mode,
                         std::span<const int> domains, bool update_prototypes) {
  const Shape s = features.shape();
  const std::size_t channels = s.c;
  for (const auto& p : site.prototypes) {
    if (p.mu.size() != channels) {
      throw ShapeError("SSR site at stage " + std::to_string(site.stage) + " expects " +
                       std::to_string(p.mu.size()) + " channels, got " + to_string(s));
    }
  }

  std::vector<ChannelStats> stats;
  stats.reserve(s.n);
  for (std::size_t n = 0; n < s.n; ++n) stats.push_back(channel_stats(features, n));

  if (mode == Mode::kTrain && update_prototypes && !domains.empty()) {
    if (domains.size() != s.n) throw ShapeError("recompose: one domain id per sample required");
    for (std::size_t m = 0; m < site.prototypes.size(); ++m) {
      ChannelStats mean{std::vector<double>(channels, 0.0), std::vector<double>(channels, 0.0)};
      std::size_t count = 0;
      for (std::size_t n = 0; n < s.n; ++n) {
        if (domains[n] < 0 || static_cast<std::size_t>(domains[n]) >= site.prototypes.size()) {
          throw ValueError("domain id " + std::to_string(domains[n]) + " has no prototype");
        }
        if (static_cast<std::size_t>(domains[n]) != m) continue;
        ++count;
        for (std::size_t c = 0; c < channels; ++c) {
          mean.mu[c] += stats[n].mu[c];
          mean.sigma[c] += stats[n].sigma[c];
        }
      }
      if (count == 0) continue;
      for (std::size_t c = 0; c < channels; ++c) {
        mean.mu[c] /= static_cast<double>(count);
        mean.sigma[c] /= static_cast<double>(count);
      }
      site.prototypes[m] = update_prototype(site.prototypes[m], mean, site.alpha, mode);
    }
  }

  std::vector<std::size_t> active;
  for (std::size_t m = 0; m < site.prototypes.size(); ++m)
    if (site.prototypes[m].initialized) active.push_back(m);
  if (active.empty()) {
    if (mode == Mode::kEval) {
      std::cerr << "warning: SSR stage " << site.stage
                << " has no initialized prototypes; passing features through\n";
    }
    return features;
  }

  // Differentiable statistics of the features themselves.
  const Shape cs{1, channels, 1, 1};
  const auto mu = axis_mean(features, Axis::kSpatial);
  const auto centered = features - mu;
  const auto var = axis_mean(unary(centered, Unary::kSquare), Axis::kSpatial);
  const auto sigma = clamp_min(unary(affine(var, T(1), T(kVarianceFloor)), Unary::kSqrt), T(kSigmaMin));
  const auto log_sigma = unary(sigma, Unary::kLog);
  const auto sigma_sq = unary(sigma, Unary::kSquare);

  // Negative KL to each active prototype, stacked along channels: (N, M', 1, 1).
  BasicTensor<T> logits;
  std::vector<T> proto_mu(channels * active.size()), proto_sigma(channels * active.size());
  for (std::size_t k = 0; k < active.size(); ++k) {
    const auto& p = site.prototypes[active[k]];
    std::vector<T> pm(channels), offset(channels), inv2(channels);
    for (std::size_t c = 0; c < channels; ++c) {
      pm[c] = static_cast<T>(p.mu[c]);
      offset[c] = static_cast<T>(std::log(p.sigma[c]) - 0.5);
      inv2[c] = static_cast<T>(1.0 / (2.0 * p.sigma[c] * p.sigma[c]));
      proto_mu[c * active.size() + k] = static_cast<T>(p.mu[c]);
      proto_sigma[c * active.size() + k] = static_cast<T>(p.sigma[c]);
    }
    const auto pm_t = BasicTensor<T>::from(cs, pm);
    const auto quad = (sigma_sq + unary(mu - pm_t, Unary::kSquare)) * BasicTensor<T>::from(cs, inv2);
    const auto kl = channel_sum(BasicTensor<T>::from(cs, offset) - log_sigma + quad);
    const auto neg = affine(kl, T(-1), T(0));
    logits = logits.defined() ? concat_channels(logits, neg) : neg;
  }
  const auto kappa = softmax_channels(logits);

  // Prototype mixture per channel: a 1x1 convolution of kappa with fixed weights.
  BasicConvParams<T> mix_mu, mix_sigma;
  mix_mu.weight = BasicTensor<T>::from({channels, active.size(), 1, 1}, std::move(proto_mu));
  mix_sigma.weight = BasicTensor<T>::from({channels, active.size(), 1, 1}, std::move(proto_sigma));
  const auto target_mu = conv2d(kappa, mix_mu);
  const auto target_sigma = conv2d(kappa, mix_sigma);

  std::vector<T> select(s.n * channels);
  for (std::size_t n = 0; n < s.n; ++n) {
    const auto mask = activation_mask(stats[n], site.tau, site.ranking);
    for (std::size_t c = 0; c < channels; ++c) select[n * channels + c] = mask[c];
  }
  const auto selected = BasicTensor<T>::from({s.n, channels, 1, 1}, std::move(select));

  // Unselected channels keep their own statistics, so their restyled map is the
  // input itself; only the selected channels carry a residual.
  const auto restyled = target_sigma * (centered / sigma) + target_mu;
  const auto delta = selected * (restyled - features);
  return features + affine(delta, T(1.0 - site.lambda), T(0));
}

template ChannelStats channel_stats(const BasicTensor<float>&, std::size_t);
template ChannelStats channel_stats(const BasicTensor<double>&, std::size_t);
template BasicTensor<float> recompose(const BasicTensor<float>&, SsrSite&, Mode,
                                      std::span<const int>, bool);
template BasicTensor<double> recompose(const BasicTensor<double>&, SsrSite&, Mode,
                                       std::span<const int>, bool);

}  // namespace s2cp
