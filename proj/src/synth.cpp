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

#include "s2cp/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "s2cp/errors.hpp"
#include "s2cp/fft.hpp"

namespace s2cp {

namespace {

constexpr std::size_t kBorder = 8;
constexpr double kMinSeparation = 16.0;
constexpr int kPlacementAttempts = 100;
constexpr std::size_t kWindow = 16;
// Targets whose amplitude would fall below this are dropped.
constexpr double kMinAmplitude = 1e-3;

std::mt19937_64 make_rng(std::initializer_list<std::uint64_t> parts) {
  std::vector<std::uint32_t> words;
  for (auto p : parts) {
    words.push_back(static_cast<std::uint32_t>(p));
    words.push_back(static_cast<std::uint32_t>(p >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return std::mt19937_64(seq);
}

constexpr std::uint64_t kPhaseStream = 0x9a5e;
constexpr std::uint64_t kSplitStream = 0x5b17;

void require(bool ok, const std::string& key, const std::string& rule) {
  if (!ok) throw ConfigError(key + ": " + rule);
}

std::size_t wrap_index(std::size_t k, std::size_t n) { return (n - k) % n; }

// Zero-mean power-law field with unit standard deviation.
std::vector<double> power_law_field(const DomainStyle& style, std::size_t n, std::mt19937_64& rng) {
  auto base_rng = make_rng({kPhaseStream, static_cast<std::uint64_t>(style.domain_id)});
  std::uniform_real_distribution<double> base(-std::numbers::pi, std::numbers::pi);
  std::uniform_real_distribution<double> jitter(-style.phase_jitter, style.phase_jitter);

  std::vector<double> re(n * n, 0.0), im(n * n, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      const std::size_t cr = wrap_index(r, n), cc = wrap_index(c, n);
      // visit each conjugate pair once, from the lower index
      if (cr * n + cc < r * n + c) continue;
      // draw both in every bin so the jitter stream does not depend on the base
      const double phase = base(base_rng) + jitter(rng);
      if (r == 0 && c == 0) continue;
      const double kr = r <= n / 2 ? double(r) : double(r) - double(n);
      const double kc = c <= n / 2 ? double(c) : double(c) - double(n);
      const double amp = std::pow(std::hypot(kr, kc), -style.beta);
      if (cr == r && cc == c) {
        re[r * n + c] = amp * std::cos(phase);
        continue;
      }
      re[r * n + c] = amp * std::cos(phase);
      im[r * n + c] = amp * std::sin(phase);
      re[cr * n + cc] = re[r * n + c];
      im[cr * n + cc] = -im[r * n + c];
    }
  }
  fft::transform_2d(re.data(), im.data(), n, n, fft::Direction::kInverse);
  double mean = std::accumulate(re.begin(), re.end(), 0.0) / double(re.size());
  double var = 0.0;
  for (double v : re) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / double(re.size()));
  for (double& v : re) v = sd > 0 ? (v - mean) / sd : 0.0;
  return re;
}

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

}  // namespace

void DomainStyle::validate() const {
  require(domain_id >= 0, "domain_id", "must be non-negative");
  require(beta >= 0.5 && beta <= 3.0, "beta", "must lie in [0.5, 3]");
  require(mean >= 0.0 && mean <= 1.0, "mean", "must lie in [0, 1]");
  require(spread >= 0.0 && spread <= 1.0, "spread", "must lie in [0, 1]");
  require(clutter_density >= 0.0, "clutter_density", "must be non-negative");
  require(clutter_scale > 0.0, "clutter_scale", "must be positive");
  require(noise_sigma >= 0.0, "noise_sigma", "must be non-negative");
  require(phase_jitter >= 0.0 && phase_jitter <= std::numbers::pi, "phase_jitter", "must lie in [0, pi]");
}

void SceneSpec::validate() const {
  require(fft::is_power_of_two(size) && size >= 2 * kWindow, "size", "must be a power of two >= 32");
  require(min_targets <= max_targets, "min_targets", "must not exceed max_targets");
  require(min_diameter > 0.0 && min_diameter <= max_diameter, "min_diameter", "must lie in (0, max_diameter]");
  require(max_diameter < double(size) / 4.0, "max_diameter", "must be below size / 4");
  require(min_scr > 1.0 && min_scr <= max_scr, "min_scr", "must lie in (1, max_scr]");
}

double target_support_radius(double diameter) { return 3.0 * diameter / 4.0; }

LocalStats local_background(const GrayImage& image, std::size_t row, std::size_t col, const BinaryMask& exclude) {
  const std::size_t r0 = row >= kWindow / 2 ? row - kWindow / 2 : 0;
  const std::size_t c0 = col >= kWindow / 2 ? col - kWindow / 2 : 0;
  const std::size_t r1 = std::min(image.height, row + kWindow / 2);
  const std::size_t c1 = std::min(image.width, col + kWindow / 2);
  LocalStats s;
  double sum = 0.0, sq = 0.0;
  for (std::size_t r = r0; r < r1; ++r) {
    for (std::size_t c = c0; c < c1; ++c) {
      if (exclude.at(r, c)) continue;
      const double v = image.at(r, c);
      sum += v;
      sq += v * v;
      ++s.count;
    }
  }
  if (s.count == 0) return s;
  s.mean = sum / double(s.count);
  s.stddev = std::sqrt(std::max(0.0, sq / double(s.count) - s.mean * s.mean));
  return s;
}

RenderedScene render_scene(const DomainStyle& style, const SceneSpec& spec, std::uint64_t seed) {
  style.validate();
  spec.validate();
  const std::size_t n = spec.size;
  auto rng = make_rng({seed, static_cast<std::uint64_t>(style.domain_id)});

  // background
  const auto field = power_law_field(style, n, rng);
  std::vector<double> bg(n * n);
  for (std::size_t i = 0; i < bg.size(); ++i) bg[i] = style.mean + style.spread * field[i];

  std::poisson_distribution<int> clutter_count(style.clutter_density);
  std::uniform_real_distribution<double> pos(0.0, double(n));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int blobs = style.clutter_density > 0 ? clutter_count(rng) : 0;
  for (int b = 0; b < blobs; ++b) {
    const double cr = pos(rng), cc = pos(rng);
    const double sigma = style.clutter_scale * (0.7 + 0.6 * unit(rng));
    const double amp = style.spread * (0.5 + 0.5 * unit(rng));
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < n; ++c) {
        const double d2 = (double(r) - cr) * (double(r) - cr) + (double(c) - cc) * (double(c) - cc);
        bg[r * n + c] += amp * std::exp(-d2 / (2 * sigma * sigma));
      }
  }
  if (style.noise_sigma > 0) {
    std::normal_distribution<double> noise(0.0, style.noise_sigma);
    for (double& v : bg) v += noise(rng);
  }

  RenderedScene out;
  out.background = GrayImage(n, n);
  for (std::size_t i = 0; i < bg.size(); ++i) out.background.pixels[i] = clamp01(bg[i]);

  // target placement
  std::uniform_int_distribution<std::size_t> count_dist(spec.min_targets, spec.max_targets);
  std::uniform_int_distribution<std::size_t> center(kBorder, n - 1 - kBorder);
  std::uniform_real_distribution<double> diameter(spec.min_diameter, spec.max_diameter);
  std::uniform_real_distribution<double> scr(spec.min_scr, spec.max_scr);
  const std::size_t wanted = count_dist(rng);
  std::vector<PlacedTarget> placed;
  for (std::size_t t = 0; t < wanted; ++t) {
    bool ok = false;
    PlacedTarget cand;
    for (int attempt = 0; attempt < kPlacementAttempts && !ok; ++attempt) {
      cand.row = center(rng);
      cand.col = center(rng);
      ok = std::all_of(placed.begin(), placed.end(), [&](const PlacedTarget& p) {
        return std::hypot(double(p.row) - double(cand.row), double(p.col) - double(cand.col)) >= kMinSeparation;
      });
    }
    if (!ok) {
      std::clog << "synth: placed " << placed.size() << " of " << wanted << " targets (seed " << seed << ")\n";
      break;
    }
    cand.diameter = diameter(rng);
    cand.requested_scr = scr(rng);
    placed.push_back(cand);
  }

  BinaryMask support(n, n);
  for (const auto& p : placed) {
    const double rad = target_support_radius(p.diameter);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < n; ++c)
        if (std::hypot(double(r) - double(p.row), double(c) - double(p.col)) <= rad) support.at(r, c) = 1;
  }

  std::vector<double> img(bg.size());
  for (std::size_t i = 0; i < bg.size(); ++i) img[i] = out.background.pixels[i];
  out.mask = BinaryMask(n, n);
  for (auto p : placed) {
    const auto ls = local_background(out.background, p.row, p.col, support);
    const double base = out.background.at(p.row, p.col);
    double peak = ls.mean + p.requested_scr * ls.stddev;
    if (peak > 1.0) peak = 1.0;
    p.amplitude = peak - base;
    if (p.amplitude < kMinAmplitude) {
      std::clog << "synth: dropped target at (" << p.row << ", " << p.col << "), background already at "
                << base << " (seed " << seed << ")\n";
      continue;
    }
    p.scr = ls.stddev > 0 ? (peak - ls.mean) / ls.stddev : p.requested_scr;
    const double sigma = p.diameter / 4.0;
    const double rad = target_support_radius(p.diameter);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < n; ++c) {
        const double d = std::hypot(double(r) - double(p.row), double(c) - double(p.col));
        if (d > rad) continue;
        const double v = p.amplitude * std::exp(-d * d / (2 * sigma * sigma));
        img[r * n + c] += v;
        if (v >= 0.5 * p.amplitude) out.mask.at(r, c) = 1;
      }
    }
    out.targets.push_back(p);
  }
  out.image = GrayImage(n, n);
  for (std::size_t i = 0; i < img.size(); ++i) out.image.pixels[i] = clamp01(img[i]);
  return out;
}

std::map<int, std::size_t> DatasetManifest::counts_per_domain() const {
  std::map<int, std::size_t> out;
  for (const auto& e : entries) ++out[e.domain];
  return out;
}

std::vector<ManifestEntry> DatasetManifest::select(const std::string& split) const {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries)
    if (split.empty() || e.split == split) out.push_back(e);
  return out;
}

std::filesystem::path DatasetManifest::resolve(const std::filesystem::path& p) const {
  return p.is_absolute() ? p : root / p;
}

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write manifest " + path.string());
  for (const auto& e : manifest.entries)
    f << e.image.generic_string() << '\t' << e.mask.generic_string() << '\t' << e.domain << '\t' << e.split << '\n';
  if (!f) throw IoError("failed writing manifest " + path.string());
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read manifest " + path.string());
  DatasetManifest m;
  m.root = path.parent_path();
  std::string line;
  std::size_t offset = 0;
  while (std::getline(f, line)) {
    const std::size_t line_start = offset;
    offset += line.size() + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, '\t')) fields.push_back(field);
    if (fields.size() != 4) throw ParseError("manifest line needs 4 tab-separated fields", line_start);
    ManifestEntry e;
    e.image = fields[0];
    e.mask = fields[1];
    try {
      std::size_t used = 0;
      e.domain = std::stoi(fields[2], &used);
      if (used != fields[2].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ParseError("manifest domain id '" + fields[2] + "' is not an integer", line_start);
    }
    e.split = fields[3];
    if (e.split != "train" && e.split != "val" && e.split != "test")
      throw ParseError("manifest split '" + e.split + "' is not train, val or test", line_start);
    m.entries.push_back(std::move(e));
  }
  return m;
}

DatasetManifest generate_domain_dataset(const DomainStyle& style, const SceneSpec& spec, std::size_t n,
                                        std::uint64_t seed, const std::filesystem::path& out_dir) {
  style.validate();
  spec.validate();
  if (n == 0) throw ConfigError("n: must be at least 1");
  const auto dir = out_dir / ("domain-" + std::to_string(style.domain_id));
  std::error_code ec;
  std::filesystem::create_directories(dir / "img", ec);
  if (!ec) std::filesystem::create_directories(dir / "mask", ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto split_rng = make_rng({seed, static_cast<std::uint64_t>(style.domain_id), kSplitStream});
  std::shuffle(order.begin(), order.end(), split_rng);
  std::vector<bool> is_val(n, false);
  for (std::size_t p = 0; p < n; ++p)
    if (p % 5 == 4) is_val[order[p]] = true;

  DatasetManifest m;
  m.root = dir;
  for (std::size_t i = 0; i < n; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "%04zu.pgm", i);
    const auto scene = render_scene(style, spec, seed * 1000003ULL + i);
    const std::filesystem::path img = std::filesystem::path("img") / name;
    const std::filesystem::path mask = std::filesystem::path("mask") / name;
    save_pgm(scene.image, dir / img, 16);
    save_pgm(to_image(scene.mask), dir / mask, 8);
    m.entries.push_back({img, mask, style.domain_id, is_val[i] ? "val" : "train"});
  }
  write_manifest(m, dir / "manifest.tsv");
  return m;
}

std::vector<Sample> load_samples(const DatasetManifest& manifest, const std::string& split) {
  std::vector<Sample> out;
  for (const auto& e : manifest.select(split)) {
    Sample s;
    s.image = load_pgm(manifest.resolve(e.image));
    s.mask = binarize(load_pgm(manifest.resolve(e.mask)));
    if (s.mask.height != s.image.height || s.mask.width != s.image.width)
      throw ShapeError("mask " + e.mask.string() + " does not match image " + e.image.string());
    s.domain = e.domain;
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<DomainStyle> default_domain_presets() {
  DomainStyle a;
  a.domain_id = 0;
  a.beta = 1.2;
  a.mean = 0.25;
  a.spread = 0.06;
  a.clutter_density = 2;
  a.clutter_scale = 2.0;
  a.noise_sigma = 0.01;
  a.phase_jitter = 1.0;

  DomainStyle b;
  b.domain_id = 1;
  b.beta = 2.0;
  b.mean = 0.3;
  b.spread = 0.06;
  b.clutter_density = 3;
  b.clutter_scale = 3.0;
  b.noise_sigma = 0.02;
  b.phase_jitter = 1.6;

  DomainStyle c;
  c.domain_id = 2;
  c.beta = 2.6;
  c.mean = 0.45;
  c.spread = 0.05;
  c.clutter_density = 4;
  c.clutter_scale = 2.5;
  c.noise_sigma = 0.015;
  c.phase_jitter = 2.5;
  return {a, b, c};
}

}  // namespace s2cp
