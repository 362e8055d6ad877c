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

#include "config.hpp"

#include <algorithm>
#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "s2cp/errors.hpp"

namespace s2cp::cli {

namespace {

const std::set<std::string> kStyleFields{"base",          "beta",          "mean",        "spread",
                                         "clutter_density", "clutter_scale", "noise_sigma", "phase_jitter"};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_style_key(const std::string& key, int* id, std::string* field) {
  if (key.rfind("style.", 0) != 0) return false;
  const auto dot = key.find('.', 6);
  if (dot == std::string::npos) return false;
  const std::string num = key.substr(6, dot - 6);
  if (num.empty() || num.size() > 6 || !std::all_of(num.begin(), num.end(), ::isdigit)) return false;
  const std::string f = key.substr(dot + 1);
  if (!kStyleFields.count(f)) return false;
  if (id) *id = std::stoi(num);
  if (field) *field = f;
  return true;
}

}  // namespace

const std::map<std::string, std::string>& RunConfig::defaults() {
  static const std::map<std::string, std::string> d{
      // model
      {"stages", "4"},
      {"base_channels", "16"},
      {"prm", "true"},
      {"oam", "true"},
      {"ssr", "true"},
      {"ssr_stages", "1,2"},
      {"tau", "0.3"},
      {"lambda", "0.3"},
      {"alpha", "0.95"},
      {"ranking", "sigma"},
      {"upsample", "bilinear"},
      // training
      {"epochs", "30"},
      {"lr", "0.0005"},
      {"batch", "8"},
      {"seed", "0"},
      {"resume", "false"},
      {"manifests", ""},
      // generator
      {"data_dir", "data"},
      {"gen_domains", "0,1,2"},
      {"gen_n", "250"},
      {"gen_seed", "0"},
      {"size", "64"},
      {"min_targets", "1"},
      {"max_targets", "3"},
      {"min_diameter", "2"},
      {"max_diameter", "9"},
      {"min_scr", "2"},
      {"max_scr", "10"},
      // evaluation
      {"target_manifest", ""},
      {"eval_split", "all"},
      {"checkpoint", ""},
      {"threshold", "0.5"},
      {"match_radius", "3"},
      {"roc_thresholds", "0.95,0.9,0.8,0.7,0.6,0.5,0.4,0.3,0.2,0.1,0.05"},
      {"allow_same_domain", "false"},
      {"dump_activations", "false"},
      // paths
      {"out_dir", "runs/default"},
  };
  return d;
}

RunConfig::RunConfig() : values_(defaults()) {}

bool RunConfig::is_known(const std::string& key) const {
  return defaults().count(key) > 0 || parse_style_key(key, nullptr, nullptr);
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (!is_known(key)) throw ConfigError("unknown config key '" + key + "'");
  values_[key] = value;
}

void RunConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void RunConfig::apply_text(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(source + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (!is_known(key))
      throw ConfigError(source + ":" + std::to_string(lineno) + ": unknown config key '" + key + "'");
    values_[key] = trim(line.substr(eq + 1));
  }
}

void RunConfig::apply_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read config " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  apply_text(ss.str(), path.string());
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("config key '" + key + "' is not set");
  return it->second;
}

double RunConfig::get_double(const std::string& key) const {
  const auto& s = get(key);
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || *end != '\0' || errno != 0) throw ConfigError(key + ": '" + s + "' is not a number");
  return v;
}

std::int64_t RunConfig::get_int(const std::string& key) const {
  const auto& s = get(key);
  char* end = nullptr;
  errno = 0;
  const long long v = std::strtoll(s.c_str(), &end, 10);
  if (s.empty() || *end != '\0' || errno != 0) throw ConfigError(key + ": '" + s + "' is not an integer");
  return v;
}

std::size_t RunConfig::get_size(const std::string& key) const {
  const auto v = get_int(key);
  if (v < 0) throw ConfigError(key + ": must be non-negative");
  return static_cast<std::size_t>(v);
}

bool RunConfig::get_bool(const std::string& key) const {
  const auto& s = get(key);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError(key + ": '" + s + "' is not a boolean");
}

std::vector<std::string> RunConfig::get_list(const std::string& key) const {
  std::vector<std::string> out;
  std::stringstream ss(get(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> RunConfig::get_doubles(const std::string& key) const {
  std::vector<double> out;
  for (const auto& item : get_list(key)) {
    char* end = nullptr;
    const double v = std::strtod(item.c_str(), &end);
    if (*end != '\0') throw ConfigError(key + ": '" + item + "' is not a number");
    out.push_back(v);
  }
  return out;
}

std::vector<std::size_t> RunConfig::get_sizes(const std::string& key) const {
  std::vector<std::size_t> out;
  for (const auto& item : get_list(key)) {
    char* end = nullptr;
    const long long v = std::strtoll(item.c_str(), &end, 10);
    if (*end != '\0' || v < 0) throw ConfigError(key + ": '" + item + "' is not a non-negative integer");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

std::map<std::string, std::string> RunConfig::style_overrides(int id) const {
  std::map<std::string, std::string> out;
  for (const auto& [key, value] : values_) {
    int kid = 0;
    std::string field;
    if (parse_style_key(key, &kid, &field) && kid == id) out[field] = value;
  }
  return out;
}

std::string RunConfig::resolved() const {
  std::string out;
  for (const auto& [key, value] : values_) out += key + "=" + value + "\n";
  return out;
}

void RunConfig::write_resolved(const std::filesystem::path& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << resolved();
  if (!f) throw IoError("failed writing " + path.string());
}

}  // namespace s2cp::cli
