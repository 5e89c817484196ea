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

#include "vvit/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "vvit/error.hpp"

namespace vvit {

namespace {

constexpr char kMagic[8] = {'V', 'V', 'I', 'T', 'C', 'K', 'P', 'T'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::ostream& os, T value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& is, const std::filesystem::path& path) {
  T value{};
  if (!is.read(reinterpret_cast<char*>(&value), sizeof(T))) {
    throw ParseError("checkpoint " + path.string() + ": truncated file");
  }
  return value;
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const nlohmann::json& metadata,
                      const NamedParameters& parameters) {
  nlohmann::json header;
  header["metadata"] = metadata;
  header["parameters"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, tensor] : parameters) {
    header["parameters"].push_back({{"name", name}, {"shape", tensor.shape()}, {"offset", offset}});
    offset += tensor.numel();
  }
  header["total_values"] = offset;
  const std::string text = header.dump();

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(os, kCheckpointVersion);
  put<std::uint64_t>(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, tensor] : parameters) {
    for (double v : tensor.values()) put<std::uint64_t>(os, std::bit_cast<std::uint64_t>(v));
  }
  if (!os) throw IoError("failed writing " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint " + path.string());
  char magic[8];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw ParseError("checkpoint " + path.string() + ": bad magic");
  }
  const auto version = get<std::uint32_t>(is, path);
  if (version != kCheckpointVersion) {
    throw ParseError("checkpoint " + path.string() + ": unsupported version " + std::to_string(version));
  }
  const auto header_len = get<std::uint64_t>(is, path);
  std::string text(header_len, '\0');
  if (!is.read(text.data(), static_cast<std::streamsize>(header_len))) {
    throw ParseError("checkpoint " + path.string() + ": truncated header");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("checkpoint " + path.string() + ": bad header: " + e.what());
  }

  Checkpoint ck;
  try {
    const auto total = header.at("total_values").get<std::uint64_t>();
    std::vector<double> values(total);
    for (auto& v : values) v = std::bit_cast<double>(get<std::uint64_t>(is, path));

    ck.metadata = header.value("metadata", nlohmann::json::object());
    for (const auto& entry : header.at("parameters")) {
      const auto shape = entry.at("shape").get<Shape>();
      const auto offset = entry.at("offset").get<std::uint64_t>();
      const std::size_t count = numel(shape);
      if (offset + count > total) throw ParseError("checkpoint " + path.string() + ": parameter out of range");
      std::vector<double> slice(values.begin() + static_cast<std::ptrdiff_t>(offset),
                                values.begin() + static_cast<std::ptrdiff_t>(offset + count));
      ck.parameters.emplace_back(entry.at("name").get<std::string>(), Tensor(shape, std::move(slice), true));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("checkpoint " + path.string() + ": malformed header: " + e.what());
  }
  return ck;
}

void load_parameters(NamedParameters& dst, const NamedParameters& src) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& [name, t] : src) by_name[name] = &t;
  if (by_name.size() != dst.size() || src.size() != dst.size()) {
    throw InputError("incompatible checkpoint: expected " + std::to_string(dst.size()) + " parameters, found " +
                     std::to_string(src.size()));
  }
  for (auto& [name, t] : dst) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw InputError("incompatible checkpoint: missing parameter " + name);
    if (it->second->shape() != t.shape()) {
      throw InputError("incompatible checkpoint: parameter " + name + " has shape " +
                       to_string(it->second->shape()) + ", model expects " + to_string(t.shape()));
    }
    auto out = t.mutable_values();
    auto in = it->second->values();
    std::copy(in.begin(), in.end(), out.begin());
  }
}

}  // namespace vvit
