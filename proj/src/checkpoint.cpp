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

#include "s2cp/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "s2cp/errors.hpp"

namespace s2cp {

namespace {

void put_u32(std::vector<char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

class Reader {
 public:
  explicit Reader(const std::vector<char>& bytes) : bytes_(bytes) {}
  bool done() const { return pos_ == bytes_.size(); }
  std::size_t pos() const { return pos_; }

  std::uint32_t u32() {
    need(4, "u32");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::string str(std::size_t len) {
    need(len, "name");
    std::string s(bytes_.data() + pos_, len);
    pos_ += len;
    return s;
  }
  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) throw ParseError(std::string("checkpoint truncated reading ") + what, pos_);
  }

 private:
  const std::vector<char>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<char> encode_checkpoint(const std::vector<CheckpointRecord>& records) {
  std::vector<char> out{'S', '2', 'C', 'P'};
  put_u32(out, kCheckpointVersion);
  for (const auto& r : records) {
    std::size_t count = 1;
    for (auto d : r.dims) count *= d;
    if (count != r.values.size()) {
      throw ShapeError("checkpoint record '" + r.name + "' dims do not match value count");
    }
    put_u32(out, static_cast<std::uint32_t>(r.name.size()));
    out.insert(out.end(), r.name.begin(), r.name.end());
    put_u32(out, static_cast<std::uint32_t>(r.dims.size()));
    for (auto d : r.dims) put_u32(out, d);
    for (float f : r.values) put_u32(out, std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

std::vector<CheckpointRecord> decode_checkpoint(const std::vector<char>& bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), "S2CP", 4) != 0) {
    throw ParseError("not a checkpoint (bad magic)", 0);
  }
  Reader in(bytes);
  in.str(4);
  const std::uint32_t version = in.u32();
  if (version != kCheckpointVersion) {
    throw ParseError("unsupported checkpoint version " + std::to_string(version), 4);
  }
  std::vector<CheckpointRecord> records;
  while (!in.done()) {
    CheckpointRecord r;
    r.name = in.str(in.u32());
    const std::uint32_t rank = in.u32();
    std::size_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      r.dims.push_back(in.u32());
      count *= r.dims.back();
    }
    in.need(count * 4, "values");
    r.values.reserve(count);
    for (std::size_t i = 0; i < count; ++i) r.values.push_back(std::bit_cast<float>(in.u32()));
    records.push_back(std::move(r));
  }
  return records;
}

void save_checkpoint(const std::filesystem::path& path, const std::vector<CheckpointRecord>& records) {
  const auto bytes = encode_checkpoint(records);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<CheckpointRecord> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace s2cp
