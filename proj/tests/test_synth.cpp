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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>

#include "s2cp/errors.hpp"
#include "s2cp/metrics.hpp"
#include "s2cp/spectral.hpp"
#include "s2cp/synth.hpp"

using namespace s2cp;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("s2cp-" + tag + "-" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::vector<unsigned char> read_bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

DomainStyle quiet_style() {
  DomainStyle s;
  s.domain_id = 7;
  s.clutter_density = 0;
  s.noise_sigma = 0;
  return s;
}

std::vector<GrayImage> render_many(const DomainStyle& style, std::size_t count, std::uint64_t first_seed) {
  SceneSpec spec;
  std::vector<GrayImage> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(render_scene(style, spec, first_seed + i).image);
  return out;
}

// Least-squares slope of the magnitude profile against log radius.
double magnitude_slope(const SpectrumProfile& p) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0, n = 0;
  for (std::size_t b = 2; b < p.radial_magnitude.size(); ++b) {
    if (p.bin_population[b] == 0) continue;
    const double x = std::log(double(b)), y = p.radial_magnitude[b];
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    n += 1;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace

TEST_CASE("style and spec validation names the key") {
  DomainStyle s;
  s.beta = 3.5;
  try {
    s.validate();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("beta") != std::string::npos);
  }
  s.beta = 0.4;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = DomainStyle{};
  s.phase_jitter = -1;
  CHECK_THROWS_AS(s.validate(), ConfigError);

  SceneSpec spec;
  spec.size = 48;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = SceneSpec{};
  spec.max_diameter = 16;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = SceneSpec{};
  spec.min_scr = 1.0;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  for (const auto& p : default_domain_presets()) CHECK_NOTHROW(p.validate());
}

TEST_CASE("noiseless single target") {
  auto style = quiet_style();
  SceneSpec spec;
  spec.min_targets = spec.max_targets = 1;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto scene = render_scene(style, spec, seed);
    REQUIRE(scene.targets.size() == 1);
    const auto& t = scene.targets[0];
    const double sigma = t.diameter / 4.0;
    const double half_radius2 = 2.0 * sigma * sigma * std::log(2.0);
    std::size_t disc = 0;
    for (std::size_t r = 0; r < spec.size; ++r) {
      for (std::size_t c = 0; c < spec.size; ++c) {
        const double dr = double(r) - double(t.row), dc = double(c) - double(t.col);
        const double d2 = dr * dr + dc * dc;
        // off the support the image is the background, bit for bit
        if (std::sqrt(d2) > target_support_radius(t.diameter)) CHECK(scene.image.at(r, c) == scene.background.at(r, c));
        const bool in_disc = d2 <= half_radius2 * (1 + 1e-12);
        if (std::abs(d2 - half_radius2) > 1e-9) CHECK(bool(scene.mask.at(r, c)) == in_disc);
        disc += in_disc;
      }
    }
    CHECK(scene.mask.count() == disc);
  }
}

TEST_CASE("rendering is deterministic") {
  const auto style = default_domain_presets()[1];
  SceneSpec spec;
  const auto a = render_scene(style, spec, 42), b = render_scene(style, spec, 42);
  CHECK(a.image == b.image);
  CHECK(a.mask == b.mask);
  const auto c = render_scene(style, spec, 43);
  CHECK_FALSE(a.image == c.image);
}

TEST_CASE("re-measured SCR matches the request") {
  SceneSpec spec;
  std::size_t measured = 0;
  for (const auto& style : default_domain_presets()) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      const auto scene = render_scene(style, spec, seed);
      // recompute everything from the rendered output alone
      BinaryMask support(spec.size, spec.size);
      for (const auto& t : scene.targets)
        for (std::size_t r = 0; r < spec.size; ++r)
          for (std::size_t c = 0; c < spec.size; ++c)
            if (std::hypot(double(r) - double(t.row), double(c) - double(t.col)) <=
                target_support_radius(t.diameter))
              support.at(r, c) = 1;
      for (const auto& t : scene.targets) {
        const auto ls = local_background(scene.image, t.row, t.col, support);
        REQUIRE(ls.stddev > 0);
        const double scr = (scene.image.at(t.row, t.col) - ls.mean) / ls.stddev;
        CHECK(std::abs(scr - t.requested_scr) <= 0.15 * t.requested_scr);
        ++measured;
      }
    }
  }
  CHECK(measured >= 300);
}

TEST_CASE("masks hold one component per placed target") {
  SceneSpec spec;
  for (const auto& style : default_domain_presets()) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      const auto scene = render_scene(style, spec, seed);
      CHECK(scene.targets.size() >= 1);
      CHECK(scene.mask.count() > 0);
      for (auto b : scene.mask.bits) CHECK(b <= 1);
      CHECK(connected_components(scene.mask).size() == scene.targets.size());
      for (auto v : scene.image.pixels) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
      }
    }
  }
}

TEST_CASE("crowded scenes place fewer targets") {
  SceneSpec spec;
  spec.size = 32;
  spec.min_targets = spec.max_targets = 8;
  spec.max_diameter = 4;
  const auto scene = render_scene(quiet_style(), spec, 3);
  CHECK(scene.targets.size() < 8);
  CHECK(connected_components(scene.mask).size() == scene.targets.size());
}

TEST_CASE("higher beta gives a steeper magnitude falloff") {
  auto flat = quiet_style(), steep = quiet_style();
  flat.beta = 1.0;
  steep.beta = 2.5;
  const auto pf = dataset_spectrum_profile(render_many(flat, 32, 0));
  const auto ps = dataset_spectrum_profile(render_many(steep, 32, 0));
  const double sf = magnitude_slope(pf), ss = magnitude_slope(ps);
  CHECK(sf < 0);
  CHECK(ss < sf);
}

TEST_CASE("phase jitter separates congruency, not magnitude") {
  auto calm = default_domain_presets()[0], shaky = calm;
  calm.phase_jitter = 0.3;
  shaky.phase_jitter = 2.8;
  shaky.domain_id = 5;
  const auto a = dataset_spectrum_profile(render_many(calm, 64, 0));
  const auto b = dataset_spectrum_profile(render_many(shaky, 64, 1000));
  const auto d = profile_divergence(a, b);
  MESSAGE("magnitude " << d.magnitude << " congruency " << d.congruency);
  CHECK(d.congruency > 0.05);
  CHECK(d.magnitude < 0.05);
  CHECK(d.congruency > d.magnitude);
}

TEST_CASE("dataset generation") {
  TempDir tmp("synth");
  const auto style = default_domain_presets()[2];
  SceneSpec spec;
  const auto m = generate_domain_dataset(style, spec, 10, 5, tmp.path);
  const auto dir = tmp.path / "domain-2";
  CHECK(m.select("train").size() == 8);
  CHECK(m.select("val").size() == 2);
  CHECK(m.counts_per_domain().at(2) == 10);
  std::size_t imgs = 0, masks = 0;
  for (auto& e : fs::directory_iterator(dir / "img")) imgs += e.path().extension() == ".pgm";
  for (auto& e : fs::directory_iterator(dir / "mask")) masks += e.path().extension() == ".pgm";
  CHECK(imgs == 10);
  CHECK(masks == 10);

  SUBCASE("manifest round trip") {
    const auto back = read_manifest(dir / "manifest.tsv");
    REQUIRE(back.entries.size() == 10);
    for (std::size_t i = 0; i < 10; ++i) {
      CHECK(back.entries[i].image == m.entries[i].image);
      CHECK(back.entries[i].split == m.entries[i].split);
      CHECK(back.entries[i].domain == 2);
    }
    const auto samples = load_samples(back, "val");
    REQUIRE(samples.size() == 2);
    CHECK(samples[0].image.height == 64);
    CHECK(samples[0].mask.count() > 0);
  }
  SUBCASE("stored images match the renderer within quantization") {
    const auto samples = load_samples(m, "");
    const auto scene = render_scene(style, spec, 5 * 1000003ULL + 0);
    double worst = 0;
    for (std::size_t i = 0; i < scene.image.pixels.size(); ++i)
      worst = std::max(worst, double(std::abs(samples[0].image.pixels[i] - scene.image.pixels[i])));
    CHECK(worst <= 0.5 / 65535 + 1e-7);
    CHECK(samples[0].mask == scene.mask);
  }
  SUBCASE("regeneration is byte-identical") {
    TempDir again("synth2");
    generate_domain_dataset(style, spec, 10, 5, again.path);
    for (const auto& e : m.entries) {
      CHECK(read_bytes(dir / e.image) == read_bytes(again.path / "domain-2" / e.image));
      CHECK(read_bytes(dir / e.mask) == read_bytes(again.path / "domain-2" / e.mask));
    }
    CHECK(read_bytes(dir / "manifest.tsv") == read_bytes(again.path / "domain-2" / "manifest.tsv"));
  }
  SUBCASE("bad arguments") {
    CHECK_THROWS_AS(generate_domain_dataset(style, spec, 0, 5, tmp.path), ConfigError);
    std::ofstream(tmp.path / "blocker") << "x";
    CHECK_THROWS_AS(generate_domain_dataset(style, spec, 2, 5, tmp.path / "blocker"), IoError);
  }
}

TEST_CASE("manifest parse errors") {
  TempDir tmp("manifest");
  const auto p = tmp.path / "m.tsv";
  std::ofstream(p) << "img/a.pgm\tmask/a.pgm\t0\ttrain\nimg/b.pgm\tmask/b.pgm\tx\ttrain\n";
  try {
    read_manifest(p);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.offset() == 29);
  }
  std::ofstream(p) << "img/a.pgm\tmask/a.pgm\t0\n";
  CHECK_THROWS_AS(read_manifest(p), ParseError);
  std::ofstream(p) << "img/a.pgm\tmask/a.pgm\t0\tholdout\n";
  CHECK_THROWS_AS(read_manifest(p), ParseError);
  CHECK_THROWS_AS(read_manifest(tmp.path / "missing.tsv"), IoError);
}

TEST_CASE("pgm io") {
  TempDir tmp("pgm");
  SUBCASE("hand-written 2x2 fixture") {
    const std::vector<unsigned char> bytes{'P', '5', '\n', '2', ' ', '2', '\n', '2', '5', '5', '\n', 0, 128, 255, 64};
    const auto img = decode_pgm(bytes);
    REQUIRE(img.height == 2);
    REQUIRE(img.width == 2);
    CHECK(img.pixels[0] == 0.0f);
    CHECK(img.pixels[1] == doctest::Approx(128.0 / 255.0));
    CHECK(img.pixels[2] == 1.0f);
    CHECK(img.pixels[3] == doctest::Approx(64.0 / 255.0));
  }
  SUBCASE("comments in the header") {
    const std::string head = "P5\n# made by hand\n2 # width\n1\n255\n";
    std::vector<unsigned char> bytes(head.begin(), head.end());
    bytes.push_back(10);
    bytes.push_back(20);
    const auto img = decode_pgm(bytes);
    CHECK(img.width == 2);
    CHECK(img.pixels[1] == doctest::Approx(20.0 / 255.0));
  }
  SUBCASE("16-bit quantization bound") {
    GrayImage half(5, 7, 0.5f);
    save_pgm(half, tmp.path / "h.pgm", 16);
    const auto back = load_pgm(tmp.path / "h.pgm");
    for (auto v : back.pixels) CHECK(std::abs(double(v) - 0.5) <= 1.0 / 131070 + 1e-9);
  }
  SUBCASE("random images round trip at both depths") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    GrayImage img(9, 4);
    for (auto& v : img.pixels) v = u(rng);
    for (int depth : {8, 16}) {
      const double maxval = depth == 8 ? 255.0 : 65535.0;
      const auto back = decode_pgm(encode_pgm(img, depth));
      for (std::size_t i = 0; i < img.pixels.size(); ++i)
        CHECK(std::abs(double(back.pixels[i]) - double(img.pixels[i])) <= 0.5 / maxval + 1e-7);
      CHECK(decode_pgm(encode_pgm(back, depth)) == back);
    }
  }
  SUBCASE("malformed input") {
    const std::vector<unsigned char> magic{'P', '2', '\n', '1', ' ', '1', '\n', '2', '5', '5', '\n', 0};
    CHECK_THROWS_AS(decode_pgm(magic), ParseError);
    const std::vector<unsigned char> truncated{'P', '5', '\n', '2', ' ', '2', '\n', '2', '5', '5', '\n', 0};
    CHECK_THROWS_AS(decode_pgm(truncated), ParseError);
    const std::vector<unsigned char> maxval{'P', '5', '\n', '1', ' ', '1', '\n', '1', '0', '0', '\n', 0};
    CHECK_THROWS_AS(decode_pgm(maxval), ParseError);
    CHECK_THROWS_AS(load_pgm(tmp.path / "none.pgm"), IoError);
  }
}
