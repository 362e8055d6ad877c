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

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace s2cp {

/// Single-channel image with values in [0, 1], row-major.
struct GrayImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> pixels;

  GrayImage() = default;
  GrayImage(std::size_t h, std::size_t w, float fill = 0.0f) : height(h), width(w), pixels(h * w, fill) {}

  float& at(std::size_t r, std::size_t c) { return pixels[r * width + c]; }
  float at(std::size_t r, std::size_t c) const { return pixels[r * width + c]; }
  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

/// Binary per-pixel mask, row-major, values 0 or 1.
struct BinaryMask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> bits;

  BinaryMask() = default;
  BinaryMask(std::size_t h, std::size_t w) : height(h), width(w), bits(h * w, 0) {}

  std::uint8_t& at(std::size_t r, std::size_t c) { return bits[r * width + c]; }
  std::uint8_t at(std::size_t r, std::size_t c) const { return bits[r * width + c]; }
  std::size_t count() const {
    std::size_t n = 0;
    for (auto b : bits) n += b;
    return n;
  }
  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

/// Pixels >= 0.5 become 1.
BinaryMask binarize(const GrayImage& image, float threshold = 0.5f);
GrayImage to_image(const BinaryMask& mask);

/// Reads a binary (P5) PGM with maxval 255 or 65535; values scaled to [0, 1].
/// Throws ParseError (with byte offset) on malformed content, IoError if unreadable.
GrayImage load_pgm(const std::filesystem::path& path);
GrayImage decode_pgm(const std::vector<unsigned char>& bytes);

/// Writes a P5 PGM at 8 or 16 bits; values are clamped to [0, 1] and rounded.
void save_pgm(const GrayImage& image, const std::filesystem::path& path, int depth = 8);
std::vector<unsigned char> encode_pgm(const GrayImage& image, int depth = 8);

}  // namespace s2cp
