// Copyright 2026 The vvit Authors
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

#include "vvit/kv_config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "vvit/error.hpp"

namespace vvit {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

KeyValues parse_key_values(std::string_view text, const std::string& source) {
  KeyValues kv;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": expected `key = value`");
    }
    std::string key(trim(line.substr(0, eq)));
    std::string value(trim(line.substr(eq + 1)));
    if (key.empty()) throw ConfigError(source + ":" + std::to_string(line_no) + ": empty key");
    if (!seen.insert(key).second) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": duplicate key `" + key + "`");
    }
    kv.emplace_back(std::move(key), std::move(value));
  }
  return kv;
}

KeyValues load_key_values(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config file " + path.string());
  std::stringstream buffer;
  buffer << is.rdbuf();
  return parse_key_values(buffer.str(), path.string());
}

std::string format_key_values(const KeyValues& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

KeyValueReader::KeyValueReader(const KeyValues& kv, std::string source) : source_(std::move(source)) {
  for (const auto& [k, v] : kv) values_[k] = v;
}

const std::string* KeyValueReader::find(const std::string& key) {
  auto it = values_.find(key);
  if (it == values_.end()) return nullptr;
  used_.insert(key);
  return &it->second;
}

void KeyValueReader::read(const std::string& key, double& out) {
  const std::string* v = find(key);
  if (!v) return;
  double parsed = 0.0;
  const auto res = std::from_chars(v->data(), v->data() + v->size(), parsed);
  if (res.ec != std::errc() || res.ptr != v->data() + v->size()) {
    throw ConfigError(source_ + ": `" + key + "` expects a number, got `" + *v + "`");
  }
  out = parsed;
}

void KeyValueReader::read(const std::string& key, std::size_t& out) {
  const std::string* v = find(key);
  if (!v) return;
  std::size_t parsed = 0;
  const auto res = std::from_chars(v->data(), v->data() + v->size(), parsed);
  if (res.ec != std::errc() || res.ptr != v->data() + v->size()) {
    throw ConfigError(source_ + ": `" + key + "` expects a non-negative integer, got `" + *v + "`");
  }
  out = parsed;
}

void KeyValueReader::read(const std::string& key, bool& out) {
  const std::string* v = find(key);
  if (!v) return;
  if (*v == "true" || *v == "1") {
    out = true;
  } else if (*v == "false" || *v == "0") {
    out = false;
  } else {
    throw ConfigError(source_ + ": `" + key + "` expects true/false, got `" + *v + "`");
  }
}

void KeyValueReader::read(const std::string& key, std::string& out) {
  if (const std::string* v = find(key)) out = *v;
}

void KeyValueReader::finish() const {
  for (const auto& [k, v] : values_) {
    if (!used_.count(k)) throw ConfigError(source_ + ": unknown key `" + k + "`");
  }
}

}  // namespace vvit
