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

#include <stdexcept>
#include <string>

namespace s2cp {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand extents are incompatible.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A value violates an operation's domain (non-finite, out of range, ...).
class ValueError : public Error {
 public:
  using Error::Error;
};

/// Filesystem or stream failure.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed file content. `offset` is the byte where parsing stopped.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

/// Invalid configuration key or value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Experimental protocol violated (e.g. evaluating on a training domain).
class ProtocolError : public Error {
 public:
  using Error::Error;
};

}  // namespace s2cp
