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
#include <filesystem>
#include <map>

#include "network_oracles.hpp"
#include "oracles.hpp"
#include "s2cp/network.hpp"

using namespace s2cp;
using namespace s2cp::testing;

namespace {

ModelConfig small_config(std::size_t stages = 3, std::size_t base = 4, std::size_t size = 16) {
  ModelConfig c;
  c.stages = stages;
  c.base_channels = base;
  c.height = size;
  c.width = size;
  c.seed = 7;
  return c;
}

template <typename T>
void reset_bn(BasicS2cpModel<T>& m) {
  for (auto& [name, bn] : m.batch_norms()) bn->reset_running_stats();
}

}  // namespace

TEST_CASE("config validation") {
  ModelConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.channels(1) == 16);
  CHECK(c.channels(4) == 128);
  c.stages = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = ModelConfig{};
  c.height = 48;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = ModelConfig{};
  c.ssr_stages = {5};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = ModelConfig{};
  c.prm_stages = {true, false};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.prm_stages = {true, false, true, false};
  CHECK(c.prm_at(1));
  CHECK_FALSE(c.prm_at(2));
  c.prm = false;
  CHECK_FALSE(c.prm_at(1));
}

TEST_CASE("encoder shapes at 256x256") {
  ModelConfig c;
  c.height = c.width = 256;
  S2cpModel m(c);
  reset_bn(m);
  const auto skips = encode(Tensor::zeros({1, 1, 256, 256}), m, Mode::kEval);
  REQUIRE(skips.size() == 4);
  CHECK(skips[0].shape() == Shape{1, 16, 256, 256});
  CHECK(skips[1].shape() == Shape{1, 32, 128, 128});
  CHECK(skips[2].shape() == Shape{1, 64, 64, 64});
  CHECK(skips[3].shape() == Shape{1, 128, 32, 32});
}

TEST_CASE("forward contract") {
  std::mt19937_64 rng(40);
  auto cfg = small_config(3, 4, 16);
  S2cpModel64 m(cfg);
  const auto x = random_tensor({2, 1, 16, 16}, rng, 0, 1, false);
  const std::vector<int> dom{0, 1};
  const auto t = forward_trace(x, m, Mode::kTrain, {dom});
  CHECK(t.probability.shape() == Shape{2, 1, 16, 16});
  for (double v : t.probability.values()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
  SUBCASE("pyramid and decoder shapes") {
    for (std::size_t l = 0; l + 1 < t.skips.size(); ++l) {
      CHECK(t.skips[l].shape().h == 2 * t.skips[l + 1].shape().h);
      CHECK(t.skips[l].shape().w == 2 * t.skips[l + 1].shape().w);
    }
    for (std::size_t l = 1; l < cfg.stages; ++l)
      CHECK(t.decoded[l - 1].shape() == Shape{2, cfg.channels(l), 16u >> (l - 1), 16u >> (l - 1)});
  }
  SUBCASE("intermediates stay bounded") {
    double worst = 0;
    for (const auto& s : t.skips)
      for (double v : s.values()) worst = std::max(worst, std::abs(v));
    for (const auto& s : t.decoded)
      for (double v : s.values()) worst = std::max(worst, std::abs(v));
    CHECK(worst < 1e6);
  }
  SUBCASE("eval is deterministic") {
    const auto a = forward(x, m, Mode::kEval);
    const auto b = forward(x, m, Mode::kEval);
    CHECK(max_abs_diff(a.values(), b.values()) == 0.0);
  }
  SUBCASE("training with SSR needs domain ids") {
    CHECK_THROWS_AS(forward(x, m, Mode::kTrain), ValueError);
    const std::vector<int> one{0};
    CHECK_THROWS_AS(forward(x, m, Mode::kTrain, {one}), ValueError);
  }
  SUBCASE("wrong input") {
    CHECK_THROWS_AS(forward(Tensor64::zeros({1, 2, 16, 16}), m, Mode::kEval), ShapeError);
    CHECK_THROWS_AS(forward(Tensor64::zeros({1, 1, 12, 12}), m, Mode::kEval), ShapeError);
  }
}

TEST_CASE("zero input with zero biases stays zero") {
  auto cfg = small_config(3, 4, 16);
  S2cpModel64 m(cfg);
  reset_bn(m);
  for (auto& p : m.parameters())
    if (p.name.ends_with(".bias") || p.name.ends_with(".beta"))
      for (auto& v : p.tensor.mutable_values()) v = 0.0;
  const auto skips = encode(Tensor64::zeros({1, 1, 16, 16}), m, Mode::kEval);
  for (const auto& s : skips)
    for (double v : s.values()) CHECK(v == 0.0);
}

TEST_CASE("disabled components") {
  std::mt19937_64 rng(41);
  SUBCASE("ablation parity with an independent plain U-Net") {
    for (Upsample up : {Upsample::kBilinear, Upsample::kNearest}) {
      auto cfg = small_config(3, 4, 16);
      cfg.prm = cfg.oam = cfg.ssr = false;
      cfg.upsample = up;
      S2cpModel64 m(cfg);
      // realistic running statistics from one training pass
      forward(random_tensor({2, 1, 16, 16}, rng, 0, 1, false), m, Mode::kTrain);
      // both graphs read the same (fp32) checkpoint
      const auto records = m.to_records();
      m.load_records(records);
      PlainUnet plain(records, cfg.stages, up);
      const auto x = random_tensor({2, 1, 16, 16}, rng, 0, 1, false);
      CHECK(max_abs_diff(forward(x, m, Mode::kEval).values(), plain.forward(x).values()) < 1e-9);
    }
  }
  SUBCASE("zero-initialized PRM leaves outputs unchanged") {
    auto cfg = small_config(3, 4, 16);
    cfg.zero_init_branches = true;
    cfg.ssr = false;
    cfg.oam = false;
    S2cpModel64 with(cfg);
    cfg.prm = false;
    S2cpModel64 without(cfg);
    forward(random_tensor({2, 1, 16, 16}, rng, 0, 1, false), with, Mode::kTrain);
    without.load_records(with.to_records());
    const auto x = random_tensor({1, 1, 16, 16}, rng, 0, 1, false);
    CHECK(max_abs_diff(forward(x, with, Mode::kEval).values(), forward(x, without, Mode::kEval).values()) < 1e-6);
  }
  SUBCASE("zero-initialized OAM halves the skip") {
    auto cfg = small_config(3, 4, 16);
    cfg.zero_init_branches = true;
    S2cpModel64 m(cfg);
    const auto skip = random_tensor({1, 4, 8, 8}, rng, -1, 1, false);
    const auto up = random_tensor({1, 4, 8, 8}, rng, -1, 1, false);
    const auto r = oam_refine(skip, up, m.decoder[0].oam);
    for (double v : r.mask.values()) CHECK(v == 0.5);
    for (std::size_t i = 0; i < skip.numel(); ++i) CHECK(r.refined.values()[i] == 0.5 * skip.values()[i]);
  }
}

TEST_CASE("orthogonal attention") {
  std::mt19937_64 rng(42);
  auto oam = make_oam<double>(4, rng);
  const auto skip = random_tensor({2, 4, 8, 8}, rng, -1, 1, false);
  const auto up = random_tensor({2, 4, 8, 8}, rng, -1, 1, false);
  const auto base = oam_refine(skip, up, oam);
  for (double v : base.mask.values()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
  std::vector<std::size_t> perm(8);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);

  SUBCASE("row permutation equivariance") {
    const auto r = oam_refine(permute_rows(skip, perm), permute_rows(up, perm), oam);
    CHECK(max_abs_diff(r.mask.values(), permute_rows(base.mask, perm).values()) < 1e-12);
  }
  SUBCASE("column permutation equivariance") {
    const auto r = oam_refine(permute_cols(skip, perm), permute_cols(up, perm), oam);
    CHECK(max_abs_diff(r.mask.values(), permute_cols(base.mask, perm).values()) < 1e-12);
  }
  SUBCASE("global pooling baseline is permutation invariant") {
    const auto g = global_pool_refine(skip, up, oam);
    const auto r = global_pool_refine(permute_rows(skip, perm), permute_rows(up, perm), oam);
    CHECK(g.mask.shape() == skip.shape());
    CHECK(max_abs_diff(r.mask.values(), g.mask.values()) < 1e-12);
    // the orthogonal mask is not
    CHECK(max_abs_diff(base.mask.values(), permute_rows(skip, perm).values()) > 0.0);
    const auto o = oam_refine(permute_rows(skip, perm), permute_rows(up, perm), oam);
    CHECK(max_abs_diff(o.mask.values(), base.mask.values()) > 1e-6);
  }
  SUBCASE("shape mismatch") {
    CHECK_THROWS_AS(oam_refine(skip, random_tensor({2, 4, 4, 8}, rng), oam), ShapeError);
  }
  SUBCASE("gradients") {
    auto s = random_tensor({1, 4, 4, 8}, rng);
    auto u = random_tensor({1, 4, 4, 8}, rng);
    std::vector<Tensor64> leaves{s, u};
    for (auto* c : {&oam.h_in, &oam.h_out, &oam.w_in, &oam.w_out}) {
      leaves.push_back(c->weight);
      leaves.push_back(c->bias);
    }
    auto r = grad_check([&] { return probe(oam_refine(s, u, oam).refined, 43); }, leaves, rng);
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("decode stage") {
  std::mt19937_64 rng(44);
  for (bool oam : {true, false}) {
    auto cfg = small_config(3, 4, 16);
    cfg.oam = oam;
    S2cpModel64 m(cfg);
    reset_bn(m);
    const auto d2 = decode_stage(random_tensor({1, 16, 4, 4}, rng, -1, 1, false),
                                 random_tensor({1, 8, 8, 8}, rng, -1, 1, false), m, 2, Mode::kEval);
    CHECK(d2.shape() == Shape{1, 8, 8, 8});
    const auto d1 = decode_stage(d2, random_tensor({1, 4, 16, 16}, rng, -1, 1, false), m, 1, Mode::kEval);
    CHECK(d1.shape() == Shape{1, 4, 16, 16});
  }
  SUBCASE("plain skip when OAM is off") {
    auto cfg = small_config(2, 4, 8);
    cfg.oam = false;
    S2cpModel64 m(cfg);
    reset_bn(m);
    const auto deeper = random_tensor({1, 8, 4, 4}, rng, -1, 1, false);
    const auto skip = random_tensor({1, 4, 8, 8}, rng, -1, 1, false);
    auto& d = m.decoder[0];
    const auto up = upsample2x(conv2d(deeper, d.reduce), cfg.upsample);
    const auto expect = leaky_relu(batch_norm(conv2d(concat_channels(skip, up), d.fuse.conv), d.fuse.bn, Mode::kEval));
    CHECK(max_abs_diff(decode_stage(deeper, skip, m, 1, Mode::kEval).values(), expect.values()) == 0.0);
  }
  SUBCASE("errors") {
    S2cpModel64 m(small_config(3, 4, 16));
    reset_bn(m);
    CHECK_THROWS_AS(decode_stage(Tensor64::zeros({1, 16, 4, 4}), Tensor64::zeros({1, 8, 4, 4}), m, 2, Mode::kEval),
                    ShapeError);
    CHECK_THROWS_AS(decode_stage(Tensor64::zeros({1, 16, 4, 4}), Tensor64::zeros({1, 8, 8, 8}), m, 3, Mode::kEval),
                    ShapeError);
  }
}

TEST_CASE("full model gradient") {
  std::mt19937_64 rng(45);
  auto cfg = small_config(3, 4, 16);
  S2cpModel64 m(cfg);
  const std::vector<int> dom{0};
  // one training pass initializes running statistics and style prototypes
  forward(random_tensor({1, 1, 16, 16}, rng, 0, 1, false), m, Mode::kTrain, {dom});
  REQUIRE(m.ssr.at(1).prototypes[0].initialized);
  auto x = random_tensor({1, 1, 16, 16}, rng, 0, 1);
  auto leaves = m.parameter_tensors();
  leaves.push_back(x);
  auto r = grad_check([&] { return probe(forward(x, m, Mode::kEval), 46); }, leaves, rng, 400);
  CHECK_MESSAGE(r.max_rel_error < 1e-3, "analytic " << r.worst_analytic << " numeric " << r.worst_numeric);

  SUBCASE("training mode with frozen prototypes") {
    // batch statistics place each PRM DC bin at H*W*beta; keep it off the
    // atan2 branch point
    for (auto& p : m.prm) p.bn.beta = random_tensor({1, p.channels(), 1, 1}, rng, 0.2, 1.0);
    auto leaves2 = m.parameter_tensors();
    leaves2.push_back(x);
    ForwardOptions opt{dom, false};
    auto r2 = grad_check([&] { return probe(forward(x, m, Mode::kTrain, opt), 47); }, leaves2, rng, 400);
    CHECK_MESSAGE(r2.max_rel_error < 1e-3, "analytic " << r2.worst_analytic << " numeric " << r2.worst_numeric);
  }
}

TEST_CASE("state round trip") {
  std::mt19937_64 rng(48);
  auto cfg = small_config(3, 4, 16);
  S2cpModel m(cfg);
  const std::vector<int> dom{0, 1};
  forward(cast<float>(random_tensor({2, 1, 16, 16}, rng, 0, 1, false)), m, Mode::kTrain, {dom});

  const auto path = std::filesystem::temp_directory_path() / "s2cp_network_roundtrip.ckpt";
  save_checkpoint(path, m.to_records());
  auto cfg2 = cfg;
  cfg2.seed = 99;
  S2cpModel other(cfg2);
  other.load_records(load_checkpoint(path));
  std::filesystem::remove(path);

  const auto x = cast<float>(random_tensor({1, 1, 16, 16}, rng, 0, 1, false));
  const auto a = forward(x, m, Mode::kEval);
  const auto b = forward(x, other, Mode::kEval);
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a.values()[i] == b.values()[i]);
  CHECK(other.ssr.at(2).prototypes[1].initialized);

  SUBCASE("names") {
    std::vector<std::string> names;
    for (const auto& r : m.to_records()) names.push_back(r.name);
    for (const char* n : {"enc1.conv1.weight", "enc1.bn1.gamma", "enc1.bn1.running_mean", "prm1.phase_in.weight",
                          "dec1.oam.h_in.weight", "head.weight", "ssr.stage1.domain0.mu", "ssr.stage2.domain1.sigma"})
      CHECK_MESSAGE(std::find(names.begin(), names.end(), n) != names.end(), n);
  }
  SUBCASE("missing parameter") {
    auto recs = m.to_records();
    recs.erase(recs.begin());
    S2cpModel fresh(cfg);
    CHECK_THROWS_AS(fresh.load_records(recs), ValueError);
  }
  SUBCASE("precision copy") {
    S2cpModel64 wide(cfg);
    copy_state(m, wide);
    const auto c = forward(cast<double>(x), wide, Mode::kEval);
    for (std::size_t i = 0; i < a.numel(); ++i) CHECK(std::abs(c.values()[i] - a.values()[i]) < 1e-4);
  }
}

TEST_CASE("predict_mask") {
  const auto m = predict_mask(Tensor::full({1, 1, 4, 4}, 0.4f), 0.5);
  CHECK(m[0].count() == 0);
  std::mt19937_64 rng(49);
  const auto p = sigmoid(random_tensor({2, 1, 4, 4}, rng, -30, 30, false));
  for (const auto& mask : predict_mask(p, 0.0)) CHECK(mask.count() == 16);
  const auto half = predict_mask(Tensor64::from({1, 1, 1, 3}, {0.5, 0.50001, 0.2}), 0.5);
  CHECK(half[0].bits == std::vector<std::uint8_t>{0, 1, 0});
  CHECK_THROWS_AS(predict_mask(p, 1.5), ValueError);
  CHECK_THROWS_AS(predict_mask(p, -0.1), ValueError);
}
