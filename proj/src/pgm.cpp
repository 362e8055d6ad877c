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

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "s2cp/errors.hpp"
#include "s2cp/image.hpp"

namespace s2cp {

namespace {

class HeaderReader {
 public:
  explicit HeaderReader(const std::vector<unsigned char>& b) : bytes_(b) {}

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::size_t number(const char* what) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    std::size_t v = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + (bytes_[pos_] - '0');
      if (v > (1u << 30)) throw ParseError(std::string("PGM ") + what + " too large", start);
      ++pos_;
    }
    if (pos_ == start) throw ParseError(std::string("PGM header: expected ") + what, start);
    return v;
  }

  std::size_t pos() const { return pos_; }
  void advance() { ++pos_; }

 private:
  const std::vector<unsigned char>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

GrayImage decode_pgm(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
    throw ParseError("not a binary PGM (magic must be P5)", 0);
  }
  HeaderReader in(bytes);
  in.advance();
  in.advance();
  const std::size_t width = in.number("width");
  const std::size_t height = in.number("height");
  const std::size_t maxval_pos = in.pos();
  const std::size_t maxval = in.number("maxval");
  if (maxval != 255 && maxval != 65535) {
    throw ParseError("unsupported PGM maxval " + std::to_string(maxval), maxval_pos);
  }
  if (in.pos() >= bytes.size() || !std::isspace(bytes[in.pos()])) {
    throw ParseError("PGM header must end with one whitespace byte", in.pos());
  }
  in.advance();
  const std::size_t bpp = maxval == 255 ? 1 : 2;
  const std::size_t need = width * height * bpp;
  if (bytes.size() - in.pos() < need) {
    throw ParseError("PGM raster truncated: need " + std::to_string(need) + " bytes", in.pos());
  }
  GrayImage img(height, width);
  const unsigned char* p = bytes.data() + in.pos();
  for (std::size_t i = 0; i < width * height; ++i) {
    const unsigned v = bpp == 1 ? p[i] : (static_cast<unsigned>(p[2 * i]) << 8) | p[2 * i + 1];
    img.pixels[i] = static_cast<float>(static_cast<double>(v) / static_cast<double>(maxval));
  }
  return img;
}

GrayImage load_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_pgm(bytes);
}

std::vector<unsigned char> encode_pgm(const GrayImage& image, int depth) {
  if (depth != 8 && depth != 16) throw ValueError("PGM depth must be 8 or 16");
  const unsigned maxval = depth == 8 ? 255u : 65535u;
  const std::string header = "P5\n" + std::to_string(image.width) + " " +
                             std::to_string(image.height) + "\n" + std::to_string(maxval) + "\n";
  std::vector<unsigned char> out(header.begin(), header.end());
  out.reserve(out.size() + image.pixels.size() * (depth / 8));
  for (float v : image.pixels) {
    const double clamped = std::clamp(static_cast<double>(v), 0.0, 1.0);
    const auto q = static_cast<unsigned>(std::lround(clamped * maxval));
    if (depth == 16) out.push_back(static_cast<unsigned char>(q >> 8));
    out.push_back(static_cast<unsigned char>(q & 0xFFu));
  }
  return out;
}

void save_pgm(const GrayImage& image, const std::filesystem::path& path, int depth) {
  const auto bytes = encode_pgm(image, depth);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace s2cp

namespace s2cp {

BinaryMask binarize(const GrayImage& image, float threshold) {
  BinaryMask m(image.height, image.width);
  for (std::size_t i = 0; i < image.pixels.size(); ++i) m.bits[i] = image.pixels[i] >= threshold ? 1 : 0;
  return m;
}

GrayImage to_image(const BinaryMask& mask) {
  GrayImage img(mask.height, mask.width);
  for (std::size_t i = 0; i < mask.bits.size(); ++i) img.pixels[i] = mask.bits[i] ? 1.0f : 0.0f;
  return img;
}

}  // namespace s2cp
