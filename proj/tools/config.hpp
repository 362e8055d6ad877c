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
#include <map>
#include <string>
#include <vector>

namespace s2cp::cli {

/// Flat key=value settings. Every key has a default; unknown keys are
/// rejected. Per-domain generator overrides use keys "style.<id>.<field>".
class RunConfig {
 public:
  RunConfig();

  /// Lines of "key = value"; '#' starts a comment.
  void apply_text(const std::string& text, const std::string& source);
  void apply_file(const std::filesystem::path& path);
  /// Accepts "key=value".
  void apply_override(const std::string& assignment);
  void set(const std::string& key, const std::string& value);

  bool is_known(const std::string& key) const;
  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  std::size_t get_size(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<std::string> get_list(const std::string& key) const;
  std::vector<double> get_doubles(const std::string& key) const;
  std::vector<std::size_t> get_sizes(const std::string& key) const;

  /// Style override keys present for domain `id`, as field -> value.
  std::map<std::string, std::string> style_overrides(int id) const;

  /// Sorted "key=value" lines; applying them to a default config reproduces this one.
  std::string resolved() const;
  void write_resolved(const std::filesystem::path& path) const;

  static const std::map<std::string, std::string>& defaults();

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace s2cp::cli
