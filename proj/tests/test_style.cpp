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
#include <numbers>

#include "oracles.hpp"
#include "s2cp/style.hpp"

using namespace s2cp;
using s2cp::testing::grad_check;
using s2cp::testing::kl_quadrature;
using s2cp::testing::probe;
using s2cp::testing::random_tensor;

namespace {

StylePrototype proto(std::vector<double> mu, std::vector<double> sigma, int id = 0) {
  StylePrototype p;
  p.domain_id = id;
  p.mu = std::move(mu);
  p.sigma = std::move(sigma);
  p.initialized = true;
  p.update_count = 1;
  return p;
}

std::vector<int> all_domain(std::size_t n, int d) { return std::vector<int>(n, d); }

}  // namespace

TEST_CASE("channel_stats") {
  SUBCASE("constant channel") {
    const auto s = channel_stats(Tensor64::full({1, 1, 4, 4}, 5.0), 0);
    CHECK(s.mu[0] == 5.0);
    CHECK(s.sigma[0] == doctest::Approx(kSigmaMin).epsilon(1e-6));
  }
  SUBCASE("two values") {
    const auto s = channel_stats(Tensor64::from({1, 1, 2, 2}, {0, 2, 2, 0}), 0);
    CHECK(s.mu[0] == 1.0);
    CHECK(s.sigma[0] == doctest::Approx(1.0).epsilon(1e-9));
  }
  SUBCASE("two-pass oracle") {
    std::mt19937_64 rng(30);
    const auto x = random_tensor({3, 4, 5, 6}, rng, -2, 7, false);
    for (std::size_t n = 0; n < 3; ++n) {
      const auto s = channel_stats(x, n);
      for (std::size_t c = 0; c < 4; ++c) {
        double m = 0;
        for (std::size_t i = 0; i < 30; ++i) m += x.at(n, c, i / 6, i % 6);
        m /= 30;
        double v = 0;
        for (std::size_t i = 0; i < 30; ++i) v += std::pow(x.at(n, c, i / 6, i % 6) - m, 2);
        v /= 30;
        CHECK(std::abs(s.mu[c] - m) < 1e-8);
        CHECK(std::abs(s.sigma[c] - std::sqrt(v + kVarianceFloor)) < 1e-8);
      }
    }
    CHECK_THROWS_AS(channel_stats(x, 3), ShapeError);
  }
}

TEST_CASE("update_prototype") {
  SUBCASE("first update copies") {
    StylePrototype p;
    const auto q = update_prototype(p, ChannelStats{{1.5, -2}, {0.5, 3}}, 0.95, Mode::kTrain);
    CHECK(q.initialized);
    CHECK(q.mu == std::vector<double>{1.5, -2});
    CHECK(q.sigma == std::vector<double>{0.5, 3});
    CHECK(q.update_count == 1);
  }
  SUBCASE("fixed point") {
    const auto p = proto({0.3, 0.4}, {1.2, 0.7});
    const auto q = update_prototype(p, ChannelStats{p.mu, p.sigma}, 0.95, Mode::kTrain);
    CHECK(q.mu == p.mu);
    CHECK(q.sigma == p.sigma);
    CHECK(q.update_count == 2);
  }
  SUBCASE("single step") {
    const auto q = update_prototype(proto({1.0}, {1.0}), ChannelStats{{2.0}, {2.0}}, 0.95, Mode::kTrain);
    CHECK(q.mu[0] == doctest::Approx(1.05).epsilon(1e-12));
    CHECK(q.sigma[0] == doctest::Approx(1.05).epsilon(1e-12));
  }
  SUBCASE("geometric convergence") {
    const double alpha = 0.95, p0 = -1.0, s = 3.0;
    auto p = proto({p0}, {0.5});
    for (int n = 1; n <= 40; ++n) {
      p = update_prototype(p, ChannelStats{{s}, {2.0}}, alpha, Mode::kTrain);
      CHECK(std::abs(p.mu[0] - s) == doctest::Approx(std::pow(alpha, n) * std::abs(p0 - s)).epsilon(1e-10));
    }
  }
  SUBCASE("eval is rejected") {
    CHECK_THROWS_AS(update_prototype(proto({0}, {1}), ChannelStats{{0}, {1}}, 0.95, Mode::kEval), ValueError);
  }
}

TEST_CASE("gaussian_kl") {
  CHECK(gaussian_kl(ChannelStats{{0.2, -1}, {0.5, 2}}, proto({0.2, -1}, {0.5, 2})) == 0.0);
  CHECK(gaussian_kl(ChannelStats{{0}, {1}}, proto({1}, {1})) == doctest::Approx(0.5).epsilon(1e-12));
  StylePrototype blank;
  blank.mu = {0};
  blank.sigma = {1};
  CHECK_THROWS_AS(gaussian_kl(ChannelStats{{0}, {1}}, blank), ValueError);

  SUBCASE("quadrature oracle") {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> mu(-2, 2), sd(0.3, 2.5);
    for (int trial = 0; trial < 5; ++trial) {
      ChannelStats s{std::vector<double>(4), std::vector<double>(4)};
      auto p = proto(std::vector<double>(4), std::vector<double>(4));
      double oracle = 0;
      for (int c = 0; c < 4; ++c) {
        s.mu[c] = mu(rng);
        s.sigma[c] = sd(rng);
        p.mu[c] = mu(rng);
        p.sigma[c] = sd(rng);
        oracle += kl_quadrature(s.mu[c], s.sigma[c], p.mu[c], p.sigma[c]);
      }
      CHECK(std::abs(gaussian_kl(s, p) - oracle) < 1e-5);
    }
  }
  SUBCASE("non-negative") {
    std::mt19937_64 rng(32);
    std::uniform_real_distribution<double> mu(-3, 3), sd(1e-3, 4);
    for (int trial = 0; trial < 200; ++trial) {
      CHECK(gaussian_kl(ChannelStats{{mu(rng), mu(rng)}, {sd(rng), sd(rng)}},
                        proto({mu(rng), mu(rng)}, {sd(rng), sd(rng)})) >= 0.0);
    }
  }
}

TEST_CASE("attribution") {
  SUBCASE("identical prototypes split evenly") {
    SsrSite site(1, 2, 2);
    site.prototypes[0] = proto({0.5, 1}, {1, 2}, 0);
    site.prototypes[1] = proto({0.5, 1}, {1, 2}, 1);
    const auto k = attribution(ChannelStats{{0, 0}, {1, 1}}, site);
    CHECK(k[0] == doctest::Approx(0.5));
    CHECK(k[1] == doctest::Approx(0.5));
  }
  SUBCASE("far prototype gets almost nothing") {
    SsrSite site(1, 2, 1);
    site.prototypes[0] = proto({0}, {1}, 0);
    // KL(N(0,1) || N(mu, 1)) = mu^2 / 2 = 20
    site.prototypes[1] = proto({std::sqrt(40.0)}, {1}, 1);
    const auto k = attribution(ChannelStats{{0}, {1}}, site);
    CHECK(k[0] == doctest::Approx(1.0 / (1.0 + std::exp(-20.0))).epsilon(1e-12));
    CHECK(k[1] == doctest::Approx(std::exp(-20.0) / (1.0 + std::exp(-20.0))).epsilon(1e-9));
  }
  SUBCASE("shift invariance and normalization") {
    std::mt19937_64 rng(33);
    std::uniform_real_distribution<double> mu(-1, 1), sd(0.5, 1.5);
    for (int trial = 0; trial < 50; ++trial) {
      SsrSite site(1, 3, 2);
      for (int m = 0; m < 3; ++m) site.prototypes[m] = proto({mu(rng), mu(rng)}, {sd(rng), sd(rng)}, m);
      const ChannelStats s{{mu(rng), mu(rng)}, {sd(rng), sd(rng)}};
      const auto k = attribution(s, site);
      double total = 0;
      for (double v : k) {
        CHECK(v >= 0.0);
        total += v;
      }
      CHECK(std::abs(total - 1.0) < 1e-9);
      // an extra channel equally far from every prototype shifts all KLs by 0.5
      auto s2 = s;
      auto site2 = site;
      s2.mu.push_back(0.0);
      s2.sigma.push_back(1.0);
      for (int m = 0; m < 3; ++m) {
        site2.prototypes[m].mu.push_back(1.0);
        site2.prototypes[m].sigma.push_back(1.0);
      }
      const auto k2 = attribution(s2, site2);
      for (int m = 0; m < 3; ++m) CHECK(k2[m] == doctest::Approx(k[m]).epsilon(1e-12));
    }
  }
  SUBCASE("uninitialized prototypes are skipped") {
    SsrSite site(1, 2, 1);
    site.prototypes[1] = proto({0}, {1}, 1);
    const auto k = attribution(ChannelStats{{3}, {1}}, site);
    CHECK(k[0] == 0.0);
    CHECK(k[1] == 1.0);
    CHECK_THROWS_AS(attribution(ChannelStats{{3}, {1}}, SsrSite(1, 2, 1)), ValueError);
  }
}

TEST_CASE("activation_mask") {
  ChannelStats s{std::vector<double>(10, 0.0), {0.1, 0.9, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.2, 1.0}};
  const auto all = activation_mask(s, 1.0);
  for (auto b : all) CHECK(b == 1);

  const auto three = activation_mask(s, 0.3);
  std::size_t count = 0;
  for (auto b : three) count += b;
  CHECK(count == 3);
  CHECK(three[9] == 1);
  CHECK(three[1] == 1);
  CHECK(three[7] == 1);

  const auto small = activation_mask(ChannelStats{{0, 0, 0}, {3, 1, 2}}, 0.34);
  CHECK(small == std::vector<std::uint8_t>{1, 0, 0});

  SUBCASE("ties go to the lower index") {
    const auto m = activation_mask(ChannelStats{{0, 0, 0, 0}, {1, 2, 2, 2}}, 0.5);
    CHECK(m == std::vector<std::uint8_t>{0, 1, 1, 0});
  }
  SUBCASE("ranking by mean") {
    const auto m = activation_mask(ChannelStats{{5, -1, 7}, {1, 9, 1}}, 0.34, StyleRanking::kMu);
    CHECK(m == std::vector<std::uint8_t>{0, 0, 1});
  }
  SUBCASE("count is at least one") {
    CHECK(selected_channel_count(0.01, 8) == 1);
    CHECK(selected_channel_count(0.3, 16) == 5);
    CHECK(selected_channel_count(1.0, 16) == 16);
  }
  CHECK_THROWS_AS(activation_mask(s, 0.0), ValueError);
  CHECK_THROWS_AS(activation_mask(s, 1.5), ValueError);
}

TEST_CASE("recompose") {
  std::mt19937_64 rng(34);
  SUBCASE("lambda one is the identity") {
    SsrSite site(1, 2, 4);
    site.lambda = 1.0;
    site.tau = 1.0;
    site.prototypes[0] = proto({1, 2, 3, 4}, {2, 2, 2, 2}, 0);
    site.prototypes[1] = proto({0, 0, 0, 0}, {1, 1, 1, 1}, 1);
    const auto f = random_tensor({2, 4, 8, 8}, rng, -1, 1, false);
    const auto y = recompose(f, site, Mode::kEval, {});
    for (std::size_t i = 0; i < f.numel(); ++i) CHECK(y.values()[i] == f.values()[i]);
  }
  SUBCASE("restyling to its own statistics") {
    const auto f = random_tensor({1, 3, 8, 8}, rng, -1, 2, false);
    const auto s = channel_stats(f, 0);
    SsrSite site(1, 1, 3);
    site.tau = 1.0;
    site.prototypes[0] = proto(s.mu, s.sigma, 0);
    const auto y = recompose(f, site, Mode::kEval, {});
    for (std::size_t i = 0; i < f.numel(); ++i) CHECK(std::abs(y.values()[i] - f.values()[i]) < 1e-6);
  }
  SUBCASE("full restyle to a standard prototype") {
    const auto f = random_tensor({2, 3, 8, 8}, rng, -3, 5, false);
    SsrSite site(1, 1, 3);
    site.tau = 1.0;
    site.lambda = 0.0;
    site.prototypes[0] = proto({0, 0, 0}, {1, 1, 1}, 0);
    const auto y = recompose(f, site, Mode::kEval, {});
    for (std::size_t n = 0; n < 2; ++n) {
      const auto s = channel_stats(y, n);
      for (std::size_t c = 0; c < 3; ++c) {
        CHECK(std::abs(s.mu[c]) < 1e-9);
        CHECK(std::abs(s.sigma[c] - 1.0) < 1e-6);
      }
    }
  }
  SUBCASE("unselected channels are untouched") {
    const auto f = random_tensor({3, 10, 4, 4}, rng, -2, 2, false);
    SsrSite site(1, 2, 10);
    site.prototypes[0] = proto(std::vector<double>(10, 0.4), std::vector<double>(10, 3.0), 0);
    site.prototypes[1] = proto(std::vector<double>(10, -1.0), std::vector<double>(10, 0.2), 1);
    const auto y = recompose(f, site, Mode::kEval, {});
    for (std::size_t n = 0; n < 3; ++n) {
      const auto mask = activation_mask(channel_stats(f, n), site.tau);
      std::size_t changed = 0;
      for (std::size_t c = 0; c < 10; ++c) {
        bool differs = false;
        for (std::size_t i = 0; i < 16; ++i) differs |= y.at(n, c, i / 4, i % 4) != f.at(n, c, i / 4, i % 4);
        if (!mask[c]) CHECK_FALSE(differs);
        changed += differs;
      }
      CHECK(changed == 3);
    }
  }
  SUBCASE("training updates the sample's prototype first") {
    SsrSite site(1, 2, 2);
    const auto f = random_tensor({2, 2, 4, 4}, rng, -1, 1, false);
    const std::vector<int> dom{1, 1};
    const auto y = recompose(f, site, Mode::kTrain, dom);
    CHECK_FALSE(site.prototypes[0].initialized);
    REQUIRE(site.prototypes[1].initialized);
    const auto s0 = channel_stats(f, 0), s1 = channel_stats(f, 1);
    for (std::size_t c = 0; c < 2; ++c) {
      CHECK(site.prototypes[1].mu[c] == doctest::Approx((s0.mu[c] + s1.mu[c]) / 2).epsilon(1e-12));
      CHECK(site.prototypes[1].sigma[c] == doctest::Approx((s0.sigma[c] + s1.sigma[c]) / 2).epsilon(1e-12));
    }
    CHECK(y.shape() == f.shape());
    CHECK_THROWS_AS(recompose(f, site, Mode::kTrain, std::vector<int>{0}), ShapeError);
    CHECK_THROWS_AS(recompose(f, site, Mode::kTrain, std::vector<int>{0, 5}), ValueError);
  }
  SUBCASE("eval never touches prototypes") {
    SsrSite site(1, 2, 2);
    site.prototypes[0] = proto({0, 1}, {1, 1}, 0);
    const auto before = site.prototypes;
    recompose(random_tensor({1, 2, 4, 4}, rng, -1, 1, false), site, Mode::kEval, all_domain(1, 1));
    CHECK(site.prototypes[0].mu == before[0].mu);
    CHECK_FALSE(site.prototypes[1].initialized);
  }
  SUBCASE("no prototypes passes through") {
    SsrSite site(2, 2, 3);
    const auto f = random_tensor({1, 3, 4, 4}, rng, -1, 1, false);
    const auto y = recompose(f, site, Mode::kEval, {});
    for (std::size_t i = 0; i < f.numel(); ++i) CHECK(y.values()[i] == f.values()[i]);
  }
  SUBCASE("finite on degenerate input") {
    SsrSite site(1, 1, 2);
    site.tau = 1.0;
    site.prototypes[0] = proto({0, 0}, {1, 1}, 0);
    const auto y = recompose(Tensor64::full({1, 2, 4, 4}, 3.0), site, Mode::kEval, {});
    for (double v : y.values()) CHECK(std::isfinite(v));
  }
  SUBCASE("gradient with frozen prototypes") {
    for (double tau : {0.5, 1.0}) {
      SsrSite site(1, 2, 4);
      site.tau = tau;
      site.prototypes[0] = proto({0.2, -0.1, 0.4, 0}, {0.8, 1.1, 0.6, 1.0}, 0);
      site.prototypes[1] = proto({-0.3, 0.5, 0, 0.1}, {0.5, 0.9, 1.4, 0.7}, 1);
      auto f = random_tensor({2, 4, 4, 4}, rng, -1, 1);
      auto r = grad_check([&] { return probe(recompose(f, site, Mode::kTrain, all_domain(2, 0), false), 35); },
                          {f}, rng);
      CHECK(r.max_rel_error < 1e-4);
    }
  }
}

TEST_CASE("site validation") {
  SsrSite site(1, 2, 4);
  CHECK_NOTHROW(site.validate());
  site.tau = 0.0;
  CHECK_THROWS_AS(site.validate(), ConfigError);
  site.tau = 0.3;
  site.lambda = 1.5;
  CHECK_THROWS_AS(site.validate(), ConfigError);
}
