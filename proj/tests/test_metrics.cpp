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

#include <algorithm>
#include <random>

#include "metric_oracles.hpp"
#include "s2cp/errors.hpp"
#include "s2cp/metrics.hpp"

using namespace s2cp;
using namespace s2cp::testing;

namespace {

BinaryMask mask_from(std::size_t h, std::size_t w, std::initializer_list<std::pair<int, int>> on) {
  BinaryMask m(h, w);
  for (auto [r, c] : on) m.at(r, c) = 1;
  return m;
}

}  // namespace

TEST_CASE("pixel metrics") {
  SUBCASE("perfect") {
    std::vector<BinaryMask> g{mask_from(4, 4, {{0, 0}, {1, 1}})};
    const auto m = pixel_metrics(g, g);
    CHECK(m.iou == 1.0);
    CHECK(m.f1 == 1.0);
  }
  SUBCASE("disjoint") {
    std::vector<BinaryMask> p{mask_from(4, 4, {{0, 0}})}, g{mask_from(4, 4, {{3, 3}})};
    CHECK(pixel_metrics(p, g).iou == 0.0);
  }
  SUBCASE("crafted counts") {
    // TP 3, FP 1, FN 2
    std::vector<BinaryMask> p{mask_from(4, 4, {{0, 0}, {0, 1}, {0, 2}, {3, 3}})};
    std::vector<BinaryMask> g{mask_from(4, 4, {{0, 0}, {0, 1}, {0, 2}, {2, 0}, {2, 1}})};
    const auto m = pixel_metrics(p, g);
    CHECK(m.counts.tp == 3);
    CHECK(m.counts.fp == 1);
    CHECK(m.counts.fn == 2);
    CHECK(m.iou == doctest::Approx(0.5));
    CHECK(m.f1 == doctest::Approx(2.0 / 3.0));
  }
  SUBCASE("both empty") {
    std::vector<BinaryMask> e{BinaryMask(4, 4)};
    CHECK(pixel_metrics(e, e).iou == 1.0);
  }
  SUBCASE("shape errors") {
    std::vector<BinaryMask> a{BinaryMask(4, 4)}, b{BinaryMask(4, 5)}, c;
    CHECK_THROWS_AS(pixel_metrics(a, b), ShapeError);
    CHECK_THROWS_AS(pixel_metrics(a, c), ShapeError);
  }
  SUBCASE("random masks against a per-pixel tally") {
    std::mt19937_64 rng(50);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<BinaryMask> p, g;
      for (int k = 0; k < 3; ++k) {
        p.push_back(random_mask(32, 32, 0.3, rng));
        g.push_back(random_mask(32, 32, 0.1, rng));
      }
      const auto m = pixel_metrics(p, g);
      const auto o = brute_pixel_counts(p, g);
      CHECK(m.counts.tp == o.tp);
      CHECK(m.counts.fp == o.fp);
      CHECK(m.counts.fn == o.fn);
      CHECK(m.counts.tn == o.tn);
      CHECK(m.iou <= m.f1);
      CHECK(m.f1 <= 1.0);
      CHECK(m.f1 == doctest::Approx(2 * m.iou / (1 + m.iou)).epsilon(1e-12));
    }
  }
}

TEST_CASE("connected components") {
  CHECK(connected_components(BinaryMask(5, 5)).empty());
  const auto diag = connected_components(mask_from(4, 4, {{1, 1}, {2, 2}}));
  REQUIRE(diag.size() == 1);
  CHECK(diag[0].area() == 2);
  CHECK(diag[0].centroid_row == 1.5);
  CHECK(diag[0].centroid_col == 1.5);

  SUBCASE("ordered by topmost-leftmost pixel") {
    const auto cc = connected_components(mask_from(6, 6, {{4, 0}, {0, 5}, {1, 4}, {0, 2}, {5, 5}}));
    REQUIRE(cc.size() == 4);
    CHECK(cc[0].pixels.front() == 2);      // (0, 2)
    CHECK(cc[1].pixels.front() == 5);      // (0, 5) joined with (1, 4)
    CHECK(cc[1].area() == 2);
    CHECK(cc[2].pixels.front() == 4 * 6);  // (4, 0)
    CHECK(cc[3].pixels.front() == 35);
  }
  SUBCASE("union-find oracle") {
    std::mt19937_64 rng(51);
    for (int trial = 0; trial < 100; ++trial) {
      const auto m = random_mask(32, 32, 0.05 + 0.5 * (trial % 10) / 10.0, rng);
      const auto cc = connected_components(m);
      const auto oracle = union_find_components(m);
      REQUIRE(cc.size() == oracle.size());
      std::size_t covered = 0;
      for (std::size_t i = 0; i < cc.size(); ++i) {
        CHECK(cc[i].pixels == oracle[i]);
        covered += cc[i].area();
      }
      CHECK(covered == m.count());
    }
  }
}

TEST_CASE("target metrics") {
  SUBCASE("perfect") {
    std::vector<BinaryMask> g{mask_from(16, 16, {{2, 2}, {2, 3}, {10, 10}})};
    const auto m = target_metrics(g, g);
    CHECK(m.pd == 1.0);
    CHECK(m.fa == 0.0);
    CHECK(m.counts.targets == 2);
  }
  SUBCASE("one of two detected") {
    std::vector<BinaryMask> g{mask_from(16, 16, {{2, 2}, {12, 12}})};
    std::vector<BinaryMask> p{mask_from(16, 16, {{3, 3}})};
    const auto m = target_metrics(p, g);
    CHECK(m.pd == 0.5);
    CHECK(m.fa == 0.0);
  }
  SUBCASE("empty predictions") {
    std::vector<BinaryMask> g{mask_from(16, 16, {{2, 2}})}, p{BinaryMask(16, 16)};
    const auto m = target_metrics(p, g);
    CHECK(m.pd == 0.0);
    CHECK(m.fa == 0.0);
  }
  SUBCASE("a spurious component counts its pixels") {
    std::vector<BinaryMask> g{mask_from(16, 16, {{2, 2}})};
    std::vector<BinaryMask> p{mask_from(16, 16, {{2, 2}, {12, 12}, {12, 13}})};
    const auto m = target_metrics(p, g);
    CHECK(m.pd == 1.0);
    CHECK(m.counts.false_alarm_pixels == 2);
    CHECK(m.fa == doctest::Approx(2.0 / 256.0));
  }
  SUBCASE("radius boundary") {
    std::vector<BinaryMask> g{mask_from(16, 16, {{5, 5}})};
    std::vector<BinaryMask> at{mask_from(16, 16, {{5, 8}})}, beyond{mask_from(16, 16, {{5, 9}})};
    CHECK(target_metrics(at, g).pd == 1.0);
    CHECK(target_metrics(beyond, g).pd == 0.0);
  }
  SUBCASE("overlap detects even with a distant centroid") {
    std::vector<BinaryMask> g{mask_from(16, 16, {{0, 0}})};
    BinaryMask long_bar(16, 16);
    for (int c = 0; c < 16; ++c) long_bar.at(0, c) = 1;
    std::vector<BinaryMask> p{long_bar};
    CHECK(target_metrics(p, g).pd == 1.0);
  }
  SUBCASE("one component matches one target") {
    std::vector<BinaryMask> g{mask_from(16, 16, {{5, 5}, {5, 7}})};
    std::vector<BinaryMask> p{mask_from(16, 16, {{5, 6}})};
    const auto m = target_metrics(p, g);
    CHECK(m.pd == 0.5);
  }
  SUBCASE("random masks against an exhaustive greedy oracle") {
    std::mt19937_64 rng(52);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<BinaryMask> p, g;
      for (int k = 0; k < 2; ++k) {
        p.push_back(random_mask(32, 32, 0.04, rng));
        g.push_back(random_blobs(32, 32, 1 + trial % 4, rng));
      }
      const auto m = target_metrics(p, g);
      const auto o = brute_target_counts(p, g, kDefaultMatchRadius);
      CHECK(m.counts.detected == o.detected);
      CHECK(m.counts.targets == o.targets);
      CHECK(m.counts.false_alarm_pixels == o.false_alarm_pixels);
      CHECK(m.pd >= 0.0);
      CHECK(m.pd <= 1.0);
      CHECK(m.fa >= 0.0);
    }
  }
  SUBCASE("invariant to traversal order") {
    std::mt19937_64 rng(53);
    for (int trial = 0; trial < 20; ++trial) {
      auto p = random_mask(32, 32, 0.05, rng);
      auto g = random_blobs(32, 32, 3, rng);
      std::vector<BinaryMask> ps{p}, gs{g};
      // transposing the images changes the scan order of every component
      std::vector<BinaryMask> pt{transpose(p)}, gt{transpose(g)};
      const auto a = target_metrics(ps, gs), b = target_metrics(pt, gt);
      CHECK(a.counts.detected == b.counts.detected);
      CHECK(a.counts.false_alarm_pixels == b.counts.false_alarm_pixels);
    }
  }
}

TEST_CASE("roc sweep") {
  std::mt19937_64 rng(54);
  std::vector<BinaryMask> gts{random_blobs(32, 32, 3, rng), random_blobs(32, 32, 2, rng)};
  SUBCASE("exclusive top threshold predicts nothing") {
    std::vector<GrayImage> probs{to_image(gts[0]), to_image(gts[1])};
    const std::vector<double> th{1.0};
    const auto roc = roc_sweep(probs, gts, th);
    CHECK(roc[0].pd == 0.0);
    CHECK(roc[0].fa == 0.0);
  }
  SUBCASE("perfect probabilities") {
    std::vector<GrayImage> probs{to_image(gts[0]), to_image(gts[1])};
    const std::vector<double> th{0.9, 0.7, 0.5, 0.3, 0.1, 0.01};
    for (const auto& pt : roc_sweep(probs, gts, th)) {
      CHECK(pt.pd == 1.0);
      CHECK(pt.fa == 0.0);
    }
  }
  SUBCASE("threshold order is enforced") {
    std::vector<GrayImage> probs{to_image(gts[0]), to_image(gts[1])};
    const std::vector<double> up{0.2, 0.5}, dup{0.5, 0.5}, out{1.5, 0.5};
    CHECK_THROWS_AS(roc_sweep(probs, gts, up), ValueError);
    CHECK_THROWS_AS(roc_sweep(probs, gts, dup), ValueError);
    CHECK_THROWS_AS(roc_sweep(probs, gts, out), ValueError);
  }
  SUBCASE("a merge lowers Pd under one-to-one matching") {
    // Two targets, each covered by its own blob at 0.8; a 0.3 bridge joins
    // the blobs once the threshold drops below it.
    BinaryMask g(8, 16);
    g.at(4, 2) = 1;
    g.at(4, 13) = 1;
    GrayImage p(8, 16, 0.0f);
    for (int c = 0; c < 16; ++c) p.at(4, c) = 0.3f;
    p.at(4, 2) = 0.8f;
    p.at(4, 13) = 0.8f;
    std::vector<GrayImage> probs{p};
    std::vector<BinaryMask> gs{g};
    const std::vector<double> th{0.5, 0.2};
    const auto roc = roc_sweep(probs, gs, th);
    CHECK(roc[0].pd == 1.0);
    CHECK(roc[1].pd == 0.5);
  }
}
