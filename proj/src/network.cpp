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

#include "s2cp/network.hpp"

#include <algorithm>
#include <random>

#include "s2cp/fft.hpp"

namespace s2cp {

// ---------------------------------------------------------------------------
// ModelConfig

bool ModelConfig::prm_at(std::size_t stage) const {
  if (!prm) return false;
  if (prm_stages.empty()) return true;
  return stage >= 1 && stage <= prm_stages.size() && prm_stages[stage - 1];
}

bool ModelConfig::ssr_at(std::size_t stage) const {
  return ssr && std::find(ssr_stages.begin(), ssr_stages.end(), stage) != ssr_stages.end();
}

void ModelConfig::validate() const {
  if (stages < 2) throw ConfigError("stages must be at least 2");
  if (base_channels < 1) throw ConfigError("base_channels must be positive");
  if (input_channels < 1) throw ConfigError("input_channels must be positive");
  if (!fft::is_power_of_two(height) || !fft::is_power_of_two(width)) {
    throw ConfigError("input size must be powers of two");
  }
  const std::size_t div = std::size_t{1} << (stages - 1);
  if (height % div != 0 || width % div != 0 || height / div < 2 || width / div < 2) {
    throw ConfigError("input size must be divisible by 2^(stages-1) with at least 2 pixels left");
  }
  if (!prm_stages.empty() && prm_stages.size() != stages) {
    throw ConfigError("prm stage flags must list every stage");
  }
  for (std::size_t s : ssr_stages)
    if (s < 1 || s > stages) throw ConfigError("ssr_stages must lie in 1..stages");
  if (domains < 1) throw ConfigError("domains must be at least 1");
  if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("tau must lie in (0, 1]");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in [0, 1]");
  if (!(alpha >= 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in [0, 1)");
}

// ---------------------------------------------------------------------------
// Construction

template <typename T>
BasicOamParams<T> make_oam(std::size_t channels, std::mt19937_64& rng, ConvInit branch_init) {
  const std::size_t hidden = std::max<std::size_t>(channels / 2, 1);
  BasicOamParams<T> p;
  p.h_in = make_conv<T>(2 * channels, hidden, 1, rng);
  p.h_out = make_conv<T>(hidden, channels, 1, rng, branch_init);
  p.w_in = make_conv<T>(2 * channels, hidden, 1, rng);
  p.w_out = make_conv<T>(hidden, channels, 1, rng, branch_init);
  return p;
}

namespace {

template <typename T>
BasicConvUnit<T> make_unit(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  return {make_conv<T>(in, out, 3, rng), make_batch_norm<T>(out)};
}

template <typename T>
BasicTensor<T> apply_unit(const BasicTensor<T>& x, BasicConvUnit<T>& unit, Mode mode) {
  return leaky_relu(batch_norm(conv2d(x, unit.conv), unit.bn, mode));
}

template <typename T>
void add_conv(std::vector<NamedTensor<T>>& out, const std::string& name, const BasicConvParams<T>& c) {
  out.push_back({name + ".weight", c.weight});
  if (c.bias.defined()) out.push_back({name + ".bias", c.bias});
}

template <typename T>
void add_bn(std::vector<NamedTensor<T>>& out, const std::string& name, const BasicBatchNormParams<T>& b) {
  out.push_back({name + ".gamma", b.gamma});
  out.push_back({name + ".beta", b.beta});
}

template <typename T>
CheckpointRecord record_of(const std::string& name, const Shape& s, std::span<const T> values) {
  CheckpointRecord r;
  r.name = name;
  r.dims = {static_cast<std::uint32_t>(s.n), static_cast<std::uint32_t>(s.c),
            static_cast<std::uint32_t>(s.h), static_cast<std::uint32_t>(s.w)};
  r.values.assign(values.begin(), values.end());
  return r;
}

template <typename T>
CheckpointRecord vector_record(const std::string& name, const std::vector<T>& values) {
  CheckpointRecord r;
  r.name = name;
  r.dims = {static_cast<std::uint32_t>(values.size())};
  r.values.assign(values.begin(), values.end());
  return r;
}

std::size_t record_count(const CheckpointRecord& r) {
  std::size_t n = 1;
  for (auto d : r.dims) n *= d;
  return n;
}

}  // namespace

template <typename T>
BasicS2cpModel<T>::BasicS2cpModel(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  std::mt19937_64 rng(config_.seed);
  const ConvInit branch = config_.zero_init_branches ? ConvInit::kZero : ConvInit::kKaimingUniform;
  const std::size_t stages = config_.stages;
  std::size_t in = config_.input_channels;
  for (std::size_t l = 1; l <= stages; ++l) {
    const std::size_t c = config_.channels(l);
    encoder.push_back({make_unit<T>(in, c, rng), make_unit<T>(c, c, rng)});
    prm.push_back(make_prm<T>(c, rng, branch));
    in = c;
  }
  for (std::size_t l = 1; l < stages; ++l) {
    const std::size_t c = config_.channels(l);
    BasicDecoderStage<T> d;
    d.reduce = make_conv<T>(config_.channels(l + 1), c, 1, rng);
    d.oam = make_oam<T>(c, rng, branch);
    d.fuse = make_unit<T>(2 * c, c, rng);
    decoder.push_back(std::move(d));
  }
  head = make_conv<T>(config_.channels(1), 1, 1, rng);
  for (std::size_t l : config_.ssr_stages) {
    SsrSite site(l, config_.domains, config_.channels(l));
    site.tau = config_.tau;
    site.lambda = config_.lambda;
    site.alpha = config_.alpha;
    site.ranking = config_.ranking;
    ssr.emplace(l, std::move(site));
  }
}

template <typename T>
std::vector<NamedTensor<T>> BasicS2cpModel<T>::parameters() const {
  std::vector<NamedTensor<T>> out;
  for (std::size_t i = 0; i < encoder.size(); ++i) {
    const std::string p = "enc" + std::to_string(i + 1);
    add_conv(out, p + ".conv1", encoder[i].first.conv);
    add_bn(out, p + ".bn1", encoder[i].first.bn);
    add_conv(out, p + ".conv2", encoder[i].second.conv);
    add_bn(out, p + ".bn2", encoder[i].second.bn);
  }
  for (std::size_t i = 0; i < prm.size(); ++i) {
    const std::string p = "prm" + std::to_string(i + 1);
    add_bn(out, p + ".bn", prm[i].bn);
    add_conv(out, p + ".phase_in", prm[i].phase_in);
    add_conv(out, p + ".phase_out", prm[i].phase_out);
    add_conv(out, p + ".amp_in", prm[i].amp_in);
    add_conv(out, p + ".amp_out", prm[i].amp_out);
  }
  for (std::size_t i = 0; i < decoder.size(); ++i) {
    const std::string p = "dec" + std::to_string(i + 1);
    add_conv(out, p + ".reduce", decoder[i].reduce);
    add_conv(out, p + ".oam.h_in", decoder[i].oam.h_in);
    add_conv(out, p + ".oam.h_out", decoder[i].oam.h_out);
    add_conv(out, p + ".oam.w_in", decoder[i].oam.w_in);
    add_conv(out, p + ".oam.w_out", decoder[i].oam.w_out);
    add_conv(out, p + ".fuse", decoder[i].fuse.conv);
    add_bn(out, p + ".fuse_bn", decoder[i].fuse.bn);
  }
  add_conv(out, "head", head);
  return out;
}

template <typename T>
std::vector<BasicTensor<T>> BasicS2cpModel<T>::parameter_tensors() const {
  std::vector<BasicTensor<T>> out;
  for (auto& p : parameters()) out.push_back(p.tensor);
  return out;
}

template <typename T>
void BasicS2cpModel<T>::zero_grad() {
  for (auto& p : parameters()) p.tensor.zero_grad();
}

template <typename T>
std::size_t BasicS2cpModel<T>::parameter_count() const {
  std::size_t n = 0;
  for (auto& p : parameters()) n += p.tensor.numel();
  return n;
}

template <typename T>
std::vector<std::pair<std::string, BasicBatchNormParams<T>*>> BasicS2cpModel<T>::batch_norms() {
  std::vector<std::pair<std::string, BasicBatchNormParams<T>*>> out;
  for (std::size_t i = 0; i < encoder.size(); ++i) {
    const std::string p = "enc" + std::to_string(i + 1);
    out.emplace_back(p + ".bn1", &encoder[i].first.bn);
    out.emplace_back(p + ".bn2", &encoder[i].second.bn);
  }
  for (std::size_t i = 0; i < prm.size(); ++i) out.emplace_back("prm" + std::to_string(i + 1) + ".bn", &prm[i].bn);
  for (std::size_t i = 0; i < decoder.size(); ++i)
    out.emplace_back("dec" + std::to_string(i + 1) + ".fuse_bn", &decoder[i].fuse.bn);
  return out;
}

template <typename T>
std::vector<CheckpointRecord> BasicS2cpModel<T>::to_records() const {
  std::vector<CheckpointRecord> out;
  for (const auto& p : parameters()) out.push_back(record_of<T>(p.name, p.tensor.shape(), p.tensor.values()));
  for (auto& [name, bn] : const_cast<BasicS2cpModel*>(this)->batch_norms()) {
    if (!bn->running_initialized) continue;
    out.push_back(vector_record(name + ".running_mean", bn->running_mean));
    out.push_back(vector_record(name + ".running_var", bn->running_var));
  }
  for (const auto& [stage, site] : ssr) {
    for (const auto& proto : site.prototypes) {
      if (!proto.initialized) continue;
      const std::string p = "ssr.stage" + std::to_string(stage) + ".domain" + std::to_string(proto.domain_id);
      out.push_back(vector_record(p + ".mu", proto.mu));
      out.push_back(vector_record(p + ".sigma", proto.sigma));
    }
  }
  return out;
}

template <typename T>
void BasicS2cpModel<T>::load_records(const std::vector<CheckpointRecord>& records) {
  std::map<std::string, const CheckpointRecord*> by_name;
  for (const auto& r : records) by_name[r.name] = &r;

  auto fetch = [&](const std::string& name, std::size_t count) -> const CheckpointRecord* {
    auto it = by_name.find(name);
    if (it == by_name.end()) return nullptr;
    if (record_count(*it->second) != count) {
      throw ShapeError("checkpoint record '" + name + "' has " + std::to_string(record_count(*it->second)) +
                       " values, model expects " + std::to_string(count));
    }
    return it->second;
  };

  for (auto& p : parameters()) {
    const CheckpointRecord* r = fetch(p.name, p.tensor.numel());
    if (r == nullptr) throw ValueError("checkpoint lacks parameter '" + p.name + "'");
    auto dst = p.tensor.mutable_values();
    std::copy(r->values.begin(), r->values.end(), dst.begin());
  }
  for (auto& [name, bn] : batch_norms()) {
    const CheckpointRecord* m = fetch(name + ".running_mean", bn->channels());
    const CheckpointRecord* v = fetch(name + ".running_var", bn->channels());
    if (m == nullptr || v == nullptr) continue;
    std::copy(m->values.begin(), m->values.end(), bn->running_mean.begin());
    std::copy(v->values.begin(), v->values.end(), bn->running_var.begin());
    bn->running_initialized = true;
  }
  for (auto& [stage, site] : ssr) {
    for (auto& proto : site.prototypes) {
      const std::string p = "ssr.stage" + std::to_string(stage) + ".domain" + std::to_string(proto.domain_id);
      const CheckpointRecord* mu = fetch(p + ".mu", proto.mu.size());
      const CheckpointRecord* sigma = fetch(p + ".sigma", proto.sigma.size());
      if (mu == nullptr || sigma == nullptr) continue;
      proto.mu.assign(mu->values.begin(), mu->values.end());
      proto.sigma.assign(sigma->values.begin(), sigma->values.end());
      proto.initialized = true;
    }
  }
}

// ---------------------------------------------------------------------------
// Forward pieces

template <typename T>
std::vector<BasicTensor<T>> encode(const BasicTensor<T>& x, BasicS2cpModel<T>& model, Mode mode,
                                   const ForwardOptions& options) {
  const ModelConfig& cfg = model.config();
  const Shape s = x.shape();
  if (s.c != cfg.input_channels) {
    throw ShapeError("encode expects " + std::to_string(cfg.input_channels) + "-channel input, got " +
                     to_string(s));
  }
  const std::size_t div = std::size_t{1} << (cfg.stages - 1);
  if (s.h % div != 0 || s.w % div != 0 || !fft::is_power_of_two(s.h) || !fft::is_power_of_two(s.w)) {
    throw ShapeError("input " + to_string(s) + " incompatible with " + std::to_string(cfg.stages) + " stages");
  }
  const bool needs_domains = mode == Mode::kTrain && cfg.ssr && options.update_prototypes;
  if (needs_domains && options.domains.size() != s.n) {
    throw ValueError("training with SSR needs one domain id per sample");
  }

  std::vector<BasicTensor<T>> skips;
  BasicTensor<T> h = x;
  for (std::size_t l = 1; l <= cfg.stages; ++l) {
    if (l > 1) h = maxpool2(skips.back());
    auto& stage = model.encoder[l - 1];
    h = apply_unit(apply_unit(h, stage.first, mode), stage.second, mode);
    if (cfg.prm_at(l)) h = prm_forward(h, model.prm[l - 1], mode);
    if (cfg.ssr_at(l)) {
      h = recompose(h, model.ssr.at(l), mode, options.domains, options.update_prototypes);
    }
    skips.push_back(h);
  }
  return skips;
}

namespace {

template <typename T>
BasicTensor<T> branch(const BasicTensor<T>& g, const BasicConvParams<T>& in, const BasicConvParams<T>& out) {
  return conv2d(leaky_relu(conv2d(g, in)), out);
}

}  // namespace

template <typename T>
OamResult<T> oam_refine(const BasicTensor<T>& skip, const BasicTensor<T>& up,
                        const BasicOamParams<T>& params) {
  if (skip.shape() != up.shape()) {
    throw ShapeError("oam_refine: skip " + to_string(skip.shape()) + " vs decoder " + to_string(up.shape()));
  }
  const auto g_h = concat_channels(axis_mean(skip, Axis::kWidth), axis_mean(up, Axis::kWidth));
  const auto g_w = concat_channels(axis_mean(skip, Axis::kHeight), axis_mean(up, Axis::kHeight));
  const auto logits = branch(g_h, params.h_in, params.h_out) + branch(g_w, params.w_in, params.w_out);
  const auto mask = sigmoid(logits);
  return {mask * skip, mask};
}

template <typename T>
OamResult<T> global_pool_refine(const BasicTensor<T>& skip, const BasicTensor<T>& up,
                                const BasicOamParams<T>& params) {
  if (skip.shape() != up.shape()) {
    throw ShapeError("global_pool_refine: skip " + to_string(skip.shape()) + " vs decoder " +
                     to_string(up.shape()));
  }
  const auto g = concat_channels(axis_mean(skip, Axis::kSpatial), axis_mean(up, Axis::kSpatial));
  const auto logits = branch(g, params.h_in, params.h_out) + branch(g, params.w_in, params.w_out);
  const auto mask = sigmoid(logits);
  return {mask * skip, mask * BasicTensor<T>::full(skip.shape(), T(1))};
}

template <typename T>
BasicTensor<T> decode_stage(const BasicTensor<T>& deeper, const BasicTensor<T>& skip,
                            BasicS2cpModel<T>& model, std::size_t stage, Mode mode) {
  const ModelConfig& cfg = model.config();
  if (stage < 1 || stage >= cfg.stages) throw ShapeError("decode_stage: stage out of range");
  if (deeper.shape().h * 2 != skip.shape().h || deeper.shape().w * 2 != skip.shape().w) {
    throw ShapeError("decode_stage: deeper map " + to_string(deeper.shape()) +
                     " is not half the size of skip " + to_string(skip.shape()));
  }
  auto& d = model.decoder[stage - 1];
  // A 1x1 projection commutes with bilinear/nearest upsampling, so it runs at
  // the coarse resolution.
  const auto up = upsample2x(conv2d(deeper, d.reduce), cfg.upsample);
  const auto refined = cfg.oam ? oam_refine(skip, up, d.oam).refined : skip;
  return apply_unit(concat_channels(refined, up), d.fuse, mode);
}

template <typename T>
ForwardTrace<T> forward_trace(const BasicTensor<T>& x, BasicS2cpModel<T>& model, Mode mode,
                              const ForwardOptions& options) {
  ForwardTrace<T> trace;
  trace.skips = encode(x, model, mode, options);
  const std::size_t stages = model.config().stages;
  trace.decoded.resize(stages - 1);
  BasicTensor<T> d = trace.skips.back();
  for (std::size_t l = stages - 1; l >= 1; --l) {
    d = decode_stage(d, trace.skips[l - 1], model, l, mode);
    trace.decoded[l - 1] = d;
  }
  trace.probability = sigmoid(conv2d(d, model.head));
  return trace;
}

template <typename T>
std::vector<BinaryMask> predict_mask(const BasicTensor<T>& probability, double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ValueError("threshold must lie in [0, 1]");
  const Shape s = probability.shape();
  if (s.c != 1) throw ShapeError("predict_mask expects (N, 1, H, W), got " + to_string(s));
  std::vector<BinaryMask> out;
  for (std::size_t n = 0; n < s.n; ++n) {
    BinaryMask m(s.h, s.w);
    const T* p = probability.values().data() + n * s.plane();
    for (std::size_t i = 0; i < s.plane(); ++i) m.bits[i] = static_cast<double>(p[i]) > threshold ? 1 : 0;
    out.push_back(std::move(m));
  }
  return out;
}

#define S2CP_INSTANTIATE(T)                                                                        \
  template BasicOamParams<T> make_oam(std::size_t, std::mt19937_64&, ConvInit);                    \
  template class BasicS2cpModel<T>;                                                                \
  template std::vector<BasicTensor<T>> encode(const BasicTensor<T>&, BasicS2cpModel<T>&, Mode,      \
                                              const ForwardOptions&);                              \
  template OamResult<T> oam_refine(const BasicTensor<T>&, const BasicTensor<T>&,                    \
                                   const BasicOamParams<T>&);                                      \
  template OamResult<T> global_pool_refine(const BasicTensor<T>&, const BasicTensor<T>&,            \
                                           const BasicOamParams<T>&);                              \
  template BasicTensor<T> decode_stage(const BasicTensor<T>&, const BasicTensor<T>&,                \
                                       BasicS2cpModel<T>&, std::size_t, Mode);                     \
  template ForwardTrace<T> forward_trace(const BasicTensor<T>&, BasicS2cpModel<T>&, Mode,           \
                                         const ForwardOptions&);                                   \
  template std::vector<BinaryMask> predict_mask(const BasicTensor<T>&, double);

S2CP_INSTANTIATE(float)
S2CP_INSTANTIATE(double)

#undef S2CP_INSTANTIATE

}  // namespace s2cp
