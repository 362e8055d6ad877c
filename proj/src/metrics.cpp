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

#include "s2cp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <tuple>

#include "s2cp/errors.hpp"

namespace s2cp {

namespace {

void check_pairs(std::span<const BinaryMask> preds, std::span<const BinaryMask> gts) {
  if (preds.size() != gts.size()) {
    throw ShapeError("metrics: " + std::to_string(preds.size()) + " predictions vs " +
                     std::to_string(gts.size()) + " ground truths");
  }
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i].height != gts[i].height || preds[i].width != gts[i].width) {
      throw ShapeError("metrics: prediction " + std::to_string(i) + " is " + std::to_string(preds[i].height) +
                       "x" + std::to_string(preds[i].width) + ", ground truth is " +
                       std::to_string(gts[i].height) + "x" + std::to_string(gts[i].width));
    }
  }
}

struct ImageMatch {
  std::size_t detected = 0;
  std::size_t targets = 0;
  std::size_t false_alarm_pixels = 0;
};

ImageMatch match_image(const BinaryMask& pred, const BinaryMask& gt, double radius) {
  const auto pc = connected_components(pred);
  const auto gc = connected_components(gt);

  struct Pair {
    double dist;
    std::size_t g, p;
  };
  std::vector<Pair> pairs;
  for (std::size_t g = 0; g < gc.size(); ++g) {
    for (std::size_t p = 0; p < pc.size(); ++p) {
      const double d = std::hypot(gc[g].centroid_row - pc[p].centroid_row, gc[g].centroid_col - pc[p].centroid_col);
      bool eligible = d <= radius;
      if (!eligible) {
        const auto& a = gc[g].pixels;
        const auto& b = pc[p].pixels;
        std::size_t i = 0, j = 0;
        while (i < a.size() && j < b.size() && !eligible) {
          if (a[i] == b[j]) eligible = true;
          else if (a[i] < b[j]) ++i;
          else ++j;
        }
      }
      if (eligible) pairs.push_back({d, g, p});
    }
  }
  std::sort(pairs.begin(), pairs.end(),
            [](const Pair& x, const Pair& y) { return std::tie(x.dist, x.g, x.p) < std::tie(y.dist, y.g, y.p); });

  std::vector<bool> g_used(gc.size(), false), p_used(pc.size(), false);
  ImageMatch m;
  m.targets = gc.size();
  for (const auto& pr : pairs) {
    if (g_used[pr.g] || p_used[pr.p]) continue;
    g_used[pr.g] = p_used[pr.p] = true;
    ++m.detected;
  }
  for (std::size_t p = 0; p < pc.size(); ++p)
    if (!p_used[p]) m.false_alarm_pixels += pc[p].area();
  return m;
}

}  // namespace

std::vector<TargetComponent> connected_components(const BinaryMask& mask) {
  const std::size_t h = mask.height, w = mask.width;
  std::vector<int> label(h * w, -1);
  std::vector<TargetComponent> out;
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < h * w; ++start) {
    if (!mask.bits[start] || label[start] >= 0) continue;
    const int id = static_cast<int>(out.size());
    TargetComponent comp;
    label[start] = id;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t idx = stack.back();
      stack.pop_back();
      comp.pixels.push_back(idx);
      const std::size_t r = idx / w, c = idx % w;
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          if (dr == 0 && dc == 0) continue;
          const long rr = static_cast<long>(r) + dr, cc = static_cast<long>(c) + dc;
          if (rr < 0 || cc < 0 || rr >= static_cast<long>(h) || cc >= static_cast<long>(w)) continue;
          const std::size_t n = static_cast<std::size_t>(rr) * w + static_cast<std::size_t>(cc);
          if (!mask.bits[n] || label[n] >= 0) continue;
          label[n] = id;
          stack.push_back(n);
        }
      }
    }
    std::sort(comp.pixels.begin(), comp.pixels.end());
    double sr = 0, sc = 0;
    for (auto idx : comp.pixels) {
      sr += static_cast<double>(idx / w);
      sc += static_cast<double>(idx % w);
    }
    comp.centroid_row = sr / static_cast<double>(comp.area());
    comp.centroid_col = sc / static_cast<double>(comp.area());
    out.push_back(std::move(comp));
  }
  return out;
}

PixelMetrics pixel_metrics(std::span<const BinaryMask> preds, std::span<const BinaryMask> gts) {
  check_pairs(preds, gts);
  PixelMetrics m;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    for (std::size_t k = 0; k < preds[i].bits.size(); ++k) {
      const bool p = preds[i].bits[k] != 0, g = gts[i].bits[k] != 0;
      if (p && g) ++m.counts.tp;
      else if (p) ++m.counts.fp;
      else if (g) ++m.counts.fn;
      else ++m.counts.tn;
    }
  }
  const auto& c = m.counts;
  const double denom = static_cast<double>(c.tp + c.fp + c.fn);
  if (denom == 0) {
    m.iou = m.f1 = 1.0;
  } else {
    m.iou = static_cast<double>(c.tp) / denom;
    m.f1 = 2.0 * static_cast<double>(c.tp) / (2.0 * static_cast<double>(c.tp) + static_cast<double>(c.fp + c.fn));
  }
  return m;
}

TargetMetrics target_metrics(std::span<const BinaryMask> preds, std::span<const BinaryMask> gts, double radius) {
  check_pairs(preds, gts);
  if (!(radius >= 0.0)) throw ValueError("match radius must be non-negative");
  TargetMetrics m;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto im = match_image(preds[i], gts[i], radius);
    m.counts.detected += im.detected;
    m.counts.targets += im.targets;
    m.counts.false_alarm_pixels += im.false_alarm_pixels;
    m.counts.pixels += preds[i].bits.size();
  }
  m.pd = m.counts.targets == 0 ? 1.0
                               : static_cast<double>(m.counts.detected) / static_cast<double>(m.counts.targets);
  m.fa = m.counts.pixels == 0 ? 0.0
                              : static_cast<double>(m.counts.false_alarm_pixels) / static_cast<double>(m.counts.pixels);
  return m;
}

EvalReport evaluate(std::span<const BinaryMask> preds, std::span<const BinaryMask> gts, double radius) {
  return {pixel_metrics(preds, gts), target_metrics(preds, gts, radius)};
}

BinaryMask threshold_map(const GrayImage& probability, double threshold) {
  BinaryMask m(probability.height, probability.width);
  for (std::size_t i = 0; i < m.bits.size(); ++i)
    m.bits[i] = static_cast<double>(probability.pixels[i]) > threshold ? 1 : 0;
  return m;
}

std::vector<RocPoint> roc_sweep(std::span<const GrayImage> probabilities, std::span<const BinaryMask> gts,
                                std::span<const double> thresholds, double radius) {
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    if (!(thresholds[i] >= 0.0 && thresholds[i] <= 1.0)) throw ValueError("ROC thresholds must lie in [0, 1]");
    if (i > 0 && !(thresholds[i] < thresholds[i - 1])) throw ValueError("ROC thresholds must be strictly descending");
  }
  std::vector<RocPoint> out;
  std::vector<BinaryMask> preds(probabilities.size());
  for (double t : thresholds) {
    for (std::size_t i = 0; i < probabilities.size(); ++i) preds[i] = threshold_map(probabilities[i], t);
    const auto m = target_metrics(preds, gts, radius);
    out.push_back({t, m.pd, m.fa});
  }
  return out;
}

}  // namespace s2cp
