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

#include <exception>
#include <functional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "config.hpp"
#include "s2cp/metrics.hpp"
#include "s2cp/network.hpp"
#include "s2cp/synth.hpp"
#include "s2cp/train.hpp"

namespace s2cp::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitProtocol = 3;
inline constexpr int kExitIo = 4;

/// Maps an exception to the stable exit code contract.
int exit_code_for(const std::exception& e);

/// Preset style for `id` (presets cycle for ids beyond the built-in three)
/// with any style.<id>.* overrides applied and validated.
DomainStyle style_for(const RunConfig& cfg, int id);
SceneSpec scene_spec_for(const RunConfig& cfg);

/// Model settings from the config. SSR is switched off, with a note on `log`,
/// when fewer than two source domains are available.
ModelConfig model_config_for(const RunConfig& cfg, std::size_t source_domains, std::size_t height,
                             std::size_t width, std::ostream& log);

std::vector<DatasetManifest> cmd_gen_data(const RunConfig& cfg, std::ostream& log);
TrainResult cmd_train(const RunConfig& cfg, std::ostream& log);

using Predictor = std::function<std::vector<GrayImage>(std::span<const Sample>)>;

struct EvalRow {
  std::string dataset;
  std::string domain;  // a domain id, or "all"
  std::size_t images = 0;
  EvalReport report;
};

struct EvalOutcome {
  std::vector<EvalRow> rows;
  std::vector<RocPoint> roc;
};

/// Scores the predictor on `samples` and writes eval_report.csv and roc.csv
/// into `out_dir`.
EvalOutcome run_eval(const Predictor& predict, std::span<const Sample> samples, const std::string& dataset,
                     const RunConfig& cfg, const std::filesystem::path& out_dir);

/// Loads the checkpoint, enforces the cross-domain guard and runs run_eval.
EvalOutcome cmd_eval(const RunConfig& cfg, std::ostream& log);

struct SpectraOutcome {
  std::vector<SpectrumProfile> profiles;
  /// (i, j, divergence) for every pair i < j.
  std::vector<std::tuple<std::size_t, std::size_t, ProfileDivergence>> pairs;
};

SpectraOutcome cmd_spectra(const RunConfig& cfg, std::ostream& log);

/// Runs one command, reporting failures on `err`; returns the exit code.
int run_command(const std::string& command, const RunConfig& cfg, std::ostream& out, std::ostream& err);

/// Caps BLAS threads at S2CP_THREADS when set.
void apply_thread_limit();

}  // namespace s2cp::cli
