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
#include <map>
#include <span>
#include <string>
#include <vector>

#include "s2cp/checkpoint.hpp"
#include "s2cp/image.hpp"
#include "s2cp/ops.hpp"
#include "s2cp/spectral.hpp"
#include "s2cp/style.hpp"
#include "s2cp/tensor.hpp"

namespace s2cp {

/// Architecture hyperparameters. Stages are numbered from 1 (full resolution).
struct ModelConfig {
  std::size_t stages = 4;
  std::size_t base_channels = 16;
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t input_channels = 1;
  /// Per-stage PRM switch; empty means "all stages".
  std::vector<bool> prm_stages;
  bool prm = true;
  bool oam = true;
  bool ssr = true;
  std::vector<std::size_t> ssr_stages{1, 2};
  std::size_t domains = 2;  // source domains, one style prototype each
  double tau = 0.3;
  double lambda = 0.3;
  double alpha = 0.95;
  StyleRanking ranking = StyleRanking::kSigma;
  Upsample upsample = Upsample::kBilinear;
  /// Zero-initialize the output convolution of every PRM/OAM branch.
  bool zero_init_branches = false;
  std::uint64_t seed = 0;

  std::size_t channels(std::size_t stage) const { return base_channels << (stage - 1); }
  bool prm_at(std::size_t stage) const;
  bool ssr_at(std::size_t stage) const;
  /// Throws ConfigError on violated invariants.
  void validate() const;
};

/// Orthogonal attention branches: height-direction and width-direction
/// two-layer 1x1 stacks (2C -> C/2 -> C).
template <typename T>
struct BasicOamParams {
  BasicConvParams<T> h_in, h_out;
  BasicConvParams<T> w_in, w_out;
};

using OamParams = BasicOamParams<float>;

template <typename T>
BasicOamParams<T> make_oam(std::size_t channels, std::mt19937_64& rng,
                           ConvInit branch_init = ConvInit::kKaimingUniform);

/// conv3x3 + BN + leaky-relu.
template <typename T>
struct BasicConvUnit {
  BasicConvParams<T> conv;
  BasicBatchNormParams<T> bn;
};

template <typename T>
struct BasicEncoderStage {
  BasicConvUnit<T> first;
  BasicConvUnit<T> second;
};

template <typename T>
struct BasicDecoderStage {
  BasicConvParams<T> reduce;  // 1x1, C_{l+1} -> C_l, ahead of upsampling
  BasicOamParams<T> oam;
  BasicConvUnit<T> fuse;      // 2 C_l -> C_l
};

template <typename T>
struct NamedTensor {
  std::string name;
  BasicTensor<T> tensor;
};

/// Full parameter set and mutable state (BN running stats, style prototypes).
template <typename T>
class BasicS2cpModel {
 public:
  explicit BasicS2cpModel(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  ModelConfig& mutable_config() { return config_; }

  std::vector<BasicEncoderStage<T>> encoder;    // index l-1
  std::vector<BasicPrmParams<T>> prm;           // index l-1, present for every stage
  std::vector<BasicDecoderStage<T>> decoder;    // index l-1 for l = 1..L-1
  BasicConvParams<T> head;
  std::map<std::size_t, SsrSite> ssr;           // keyed by stage

  /// Trainable tensors in a fixed order with stable names.
  std::vector<NamedTensor<T>> parameters() const;
  std::vector<BasicTensor<T>> parameter_tensors() const;
  void zero_grad();
  std::size_t parameter_count() const;

  /// Every BN layer in a fixed order with names.
  std::vector<std::pair<std::string, BasicBatchNormParams<T>*>> batch_norms();

  /// Parameters, BN running statistics and initialized style prototypes.
  std::vector<CheckpointRecord> to_records() const;
  /// Loads every record whose name the model knows; throws on shape mismatch
  /// or when a parameter is missing.
  void load_records(const std::vector<CheckpointRecord>& records);

 private:
  ModelConfig config_;
};

using S2cpModel = BasicS2cpModel<float>;
using S2cpModel64 = BasicS2cpModel<double>;

struct ForwardOptions {
  /// Per-sample source-domain ids; required for prototype updates in training.
  std::span<const int> domains;
  bool update_prototypes = true;
};

template <typename T>
struct OamResult {
  BasicTensor<T> refined;
  BasicTensor<T> mask;
};

/// Encoder skips [E_1 .. E_L]; stage l has spatial size H / 2^(l-1).
template <typename T>
std::vector<BasicTensor<T>> encode(const BasicTensor<T>& x, BasicS2cpModel<T>& model, Mode mode,
                                   const ForwardOptions& options = {});

/// Mask from orthogonal (height / width) squeeze descriptors of the skip and
/// the upsampled decoder map; refined = mask * skip.
template <typename T>
OamResult<T> oam_refine(const BasicTensor<T>& skip, const BasicTensor<T>& up,
                        const BasicOamParams<T>& params);

/// Ablation baseline: same branches fed by 2-D global pooling, so the mask is
/// constant over positions.
template <typename T>
OamResult<T> global_pool_refine(const BasicTensor<T>& skip, const BasicTensor<T>& up,
                                const BasicOamParams<T>& params);

/// D_l from D_{l+1} and the skip of stage l (1-based, l < L).
template <typename T>
BasicTensor<T> decode_stage(const BasicTensor<T>& deeper, const BasicTensor<T>& skip,
                            BasicS2cpModel<T>& model, std::size_t stage, Mode mode);

template <typename T>
struct ForwardTrace {
  BasicTensor<T> probability;            // (N, 1, H, W), values in (0, 1)
  std::vector<BasicTensor<T>> skips;     // encoder outputs per stage
  std::vector<BasicTensor<T>> decoded;   // D_1 .. D_{L-1}, index l-1
};

template <typename T>
ForwardTrace<T> forward_trace(const BasicTensor<T>& x, BasicS2cpModel<T>& model, Mode mode,
                              const ForwardOptions& options = {});

template <typename T>
BasicTensor<T> forward(const BasicTensor<T>& x, BasicS2cpModel<T>& model, Mode mode,
                       const ForwardOptions& options = {}) {
  return forward_trace(x, model, mode, options).probability;
}

/// Pixelwise prob > threshold for every sample of a (N, 1, H, W) map.
template <typename T>
std::vector<BinaryMask> predict_mask(const BasicTensor<T>& probability, double threshold = 0.5);

/// Copies a model's state into a model of another precision.
template <typename To, typename From>
void copy_state(const BasicS2cpModel<From>& from, BasicS2cpModel<To>& to) {
  to.load_records(from.to_records());
}

}  // namespace s2cp
