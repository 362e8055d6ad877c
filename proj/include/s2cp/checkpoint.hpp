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
#include <string>
#include <vector>

namespace s2cp {

/// One named array in a checkpoint file.
struct CheckpointRecord {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> values;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Little-endian layout: "S2CP", u32 version, then per record
/// u32 name length, name bytes, u32 rank, u32 dims..., fp32 values.
void save_checkpoint(const std::filesystem::path& path, const std::vector<CheckpointRecord>& records);
std::vector<CheckpointRecord> load_checkpoint(const std::filesystem::path& path);

std::vector<char> encode_checkpoint(const std::vector<CheckpointRecord>& records);
std::vector<CheckpointRecord> decode_checkpoint(const std::vector<char>& bytes);

}  // namespace s2cp
