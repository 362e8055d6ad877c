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
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "s2cp/metrics.hpp"
#include "s2cp/network.hpp"
#include "s2cp/optim.hpp"
#include "s2cp/synth.hpp"

namespace s2cp {

struct TrainOptions {
  std::size_t epochs = 30;
  double lr = 5e-4;
  std::size_t batch = 8;
  std::uint64_t seed = 0;
  double threshold = 0.5;
  double match_radius = kDefaultMatchRadius;
  /// When set, receives train_log.csv, best.ckpt and state.ckpt.
  std::filesystem::path out_dir;
  /// Continue from out_dir/state.ckpt when it exists.
  bool resume = false;
  /// Appended to every best.ckpt written.
  std::vector<CheckpointRecord> extra_records;
  std::function<void(const struct EpochLog&)> on_epoch;
};

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  std::size_t step = 0;   // optimizer steps so far
  double loss = 0.0;      // mean Soft-IoU loss over the epoch's steps
  double val_iou = 0.0;
  double val_pd = 0.0;
  double val_fa = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> log;
  std::vector<double> step_losses;  // steps run by this call only
  double best_val_iou = -1.0;
  std::size_t best_epoch = 0;
};

/// Sorted distinct domain ids; position i is prototype index i.
std::vector<int> source_domains(std::span<const Sample> samples);

/// Samples [first, first + count) of `order` packed as (N, 1, H, W) images
/// and masks.
std::pair<Tensor, Tensor> make_batch(std::span<const Sample> samples, std::span<const std::size_t> order,
                                     std::size_t first, std::size_t count);

/// Training order for one epoch: a permutation seeded by (seed, epoch).
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch);

/// Adam + Soft-IoU over shuffled mini-batches (the last one may be short),
/// validation after every epoch, best-val-IoU checkpoint kept.
TrainResult train_loop(S2cpModel& model, std::span<const Sample> train, std::span<const Sample> val,
                       const TrainOptions& options);

/// Eval-mode probability maps, one per sample.
std::vector<GrayImage> predict_probabilities(S2cpModel& model, std::span<const Sample> samples,
                                             std::size_t batch = 8);

EvalReport evaluate_model(S2cpModel& model, std::span<const Sample> samples, double threshold = 0.5,
                          double radius = kDefaultMatchRadius, std::size_t batch = 8);

/// Model state plus optimizer moments and progress counters.
struct TrainState {
  std::vector<CheckpointRecord> model;
  AdamState adam;
  std::size_t epoch = 0;
  std::size_t step = 0;
  float best_val_iou = -1.0f;
  std::size_t best_epoch = 0;
};

void save_train_state(const std::filesystem::path& path, const TrainState& state);
TrainState load_train_state(const std::filesystem::path& path);

void write_train_log(const std::filesystem::path& path, std::span<const EpochLog> rows);
std::vector<EpochLog> read_train_log(const std::filesystem::path& path);

}  // namespace s2cp
