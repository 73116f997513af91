// Copyright 2026 The quadbench Authors
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

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "quadbench/math.hpp"

namespace quadbench {

// Flat `key = value` configuration store, `#` starts a comment.
// Keys are dotted (e.g. dyn.mass); values are scalars, bools, or
// comma-separated numeric lists. All units are SI.
class Config {
 public:
  Config() = default;

  static Config from_file(const std::string& path);
  static Config from_string(const std::string& text);

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get_str(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  Vec3 get_vec3(const std::string& key, const Vec3& fallback) const;
  std::vector<double> get_list(const std::string& key) const;

  void set(const std::string& key, const std::string& value);
  void set_str(const std::string& key, const std::string& value);
  void set_double(const std::string& key, double value);
  void set_int(const std::string& key, int value);
  void set_bool(const std::string& key, bool value);
  void set_vec3(const std::string& key, const Vec3& value);

  // Merges `other` on top of this config (other wins).
  void merge(const Config& other);

  // Canonical text form: sorted keys, one `key = value` per line.
  std::string to_string() const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

// Exact decimal-text round trip for doubles ("%.17g").
std::string format_double(double v);

// Stable 64-bit content hash (FNV-1a) of arbitrary bytes, hex-encoded.
std::string content_hash(const std::string& bytes);

}  // namespace quadbench
