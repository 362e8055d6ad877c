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
#include <span>
#include <vector>

#include "s2cp/image.hpp"

namespace s2cp {

/// An 8-connected group of set pixels.
struct TargetComponent {
  std::vector<std::size_t> pixels;  // row-major indices, ascending
  double centroid_row = 0.0;
  double centroid_col = 0.0;

  std::size_t area() const { return pixels.size(); }
};

/// Components ordered by their topmost-leftmost pixel.
std::vector<TargetComponent> connected_components(const BinaryMask& mask);

struct PixelCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;
};

struct PixelMetrics {
  double iou = 0.0;
  double f1 = 0.0;
  PixelCounts counts;
};

/// Dataset-global IoU and F1. When prediction and ground truth are both empty
/// everywhere the scores are 1.
PixelMetrics pixel_metrics(std::span<const BinaryMask> preds, std::span<const BinaryMask> gts);

struct TargetCounts {
  std::size_t detected = 0;
  std::size_t targets = 0;
  std::size_t false_alarm_pixels = 0;
  std::size_t pixels = 0;
};

struct TargetMetrics {
  double pd = 0.0;  // 1 when there are no ground-truth targets
  double fa = 0.0;  // false-alarm pixels per image pixel
  TargetCounts counts;
};

inline constexpr double kDefaultMatchRadius = 3.0;

/// A ground-truth target is detected when a predicted component overlaps it
/// or has its centroid within `radius`; pairs are matched one-to-one, closest
/// centroids first. Pixels of unmatched predicted components are false alarms.
TargetMetrics target_metrics(std::span<const BinaryMask> preds, std::span<const BinaryMask> gts,
                             double radius = kDefaultMatchRadius);

struct EvalReport {
  PixelMetrics pixel;
  TargetMetrics target;
};

EvalReport evaluate(std::span<const BinaryMask> preds, std::span<const BinaryMask> gts,
                    double radius = kDefaultMatchRadius);

/// Pixels with probability strictly above the threshold.
BinaryMask threshold_map(const GrayImage& probability, double threshold);

struct RocPoint {
  double threshold = 0.0;
  double pd = 0.0;
  double fa = 0.0;
};

/// Target metrics at each threshold; thresholds must lie in [0, 1] and be
/// strictly descending.
std::vector<RocPoint> roc_sweep(std::span<const GrayImage> probabilities, std::span<const BinaryMask> gts,
                                std::span<const double> thresholds, double radius = kDefaultMatchRadius);

}  // namespace s2cp
