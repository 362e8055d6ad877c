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
#include <map>
#include <string>
#include <vector>

#include "s2cp/image.hpp"

namespace s2cp {

/// Appearance of one synthetic infrared domain.
struct DomainStyle {
  int domain_id = 0;
  double beta = 1.5;           // background amplitude falls off as 1 / f^beta
  double mean = 0.3;           // background mean intensity
  double spread = 0.1;         // background standard deviation
  double clutter_density = 2;  // expected clutter blobs per image
  double clutter_scale = 2.5;  // clutter blob sigma in pixels
  double noise_sigma = 0.01;   // additive Gaussian sensor noise
  double phase_jitter = 0.5;   // per-image phase perturbation half-width, radians

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

struct SceneSpec {
  std::size_t size = 64;
  std::size_t min_targets = 1;
  std::size_t max_targets = 3;
  double min_diameter = 2.0;
  double max_diameter = 9.0;
  double min_scr = 2.0;
  double max_scr = 10.0;

  void validate() const;
};

struct PlacedTarget {
  std::size_t row = 0;
  std::size_t col = 0;
  double diameter = 0.0;
  double requested_scr = 0.0;
  /// Equal to the request unless the peak had to be capped at 1.
  double scr = 0.0;
  double amplitude = 0.0;
};

struct RenderedScene {
  GrayImage image;
  BinaryMask mask;
  /// Background, clutter and noise before targets were added.
  GrayImage background;
  std::vector<PlacedTarget> targets;
};

/// Target support: pixels within three blob sigmas of the center.
double target_support_radius(double diameter);

/// Deterministic in (style, spec, seed). The background phase is a base
/// pattern fixed by the domain id plus per-image uniform jitter.
RenderedScene render_scene(const DomainStyle& style, const SceneSpec& spec, std::uint64_t seed);

/// Local background statistics for SCR: a 16x16 window around (row, col),
/// clipped to the image, skipping pixels where `exclude` is set.
struct LocalStats {
  double mean = 0.0;
  double stddev = 0.0;
  std::size_t count = 0;
};
LocalStats local_background(const GrayImage& image, std::size_t row, std::size_t col, const BinaryMask& exclude);

struct ManifestEntry {
  std::filesystem::path image;  // relative to the manifest root unless absolute
  std::filesystem::path mask;
  int domain = 0;
  std::string split;  // "train" or "val"
};

struct DatasetManifest {
  std::filesystem::path root;
  std::vector<ManifestEntry> entries;

  std::map<int, std::size_t> counts_per_domain() const;
  std::vector<ManifestEntry> select(const std::string& split) const;
  std::filesystem::path resolve(const std::filesystem::path& p) const;
};

/// Tab-separated lines: image, mask, domain id, split. Paths are written
/// relative to the manifest's directory.
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest read_manifest(const std::filesystem::path& path);

/// Writes out/domain-{id}/{img,mask}/NNNN.pgm and out/domain-{id}/manifest.tsv.
/// One fifth of the samples (every fifth position of a seeded shuffle) go to "val".
DatasetManifest generate_domain_dataset(const DomainStyle& style, const SceneSpec& spec, std::size_t n,
                                        std::uint64_t seed, const std::filesystem::path& out_dir);

struct Sample {
  GrayImage image;
  BinaryMask mask;
  int domain = 0;
};

std::vector<Sample> load_samples(const DatasetManifest& manifest, const std::string& split);

/// Three domains with distinct spectra, contrast, clutter and noise.
std::vector<DomainStyle> default_domain_presets();

}  // namespace s2cp
