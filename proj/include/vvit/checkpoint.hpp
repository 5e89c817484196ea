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

#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>

#include "vvit/optim.hpp"

namespace vvit {

// Checkpoint container, little-endian throughout:
//
//   offset 0   8 bytes   magic "VVITCKPT"
//   offset 8   u32       format version (1)
//   offset 12  u64       header length H in bytes
//   offset 20  H bytes   UTF-8 JSON header:
//                          {"metadata": {...},
//                           "parameters": [{"name", "shape", "offset"}...],
//                           "total_values": N}
//   offset 20+H          N IEEE-754 binary64 values; parameter i occupies
//                        [offset_i, offset_i + numel(shape_i)).
//
// Values are stored as raw bits, so a write/read round trip is exact.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  nlohmann::json metadata;
  NamedParameters parameters;
};

void write_checkpoint(const std::filesystem::path& path, const nlohmann::json& metadata,
                      const NamedParameters& parameters);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Copies values by name into `dst`. Every destination parameter must be
/// present with an identical shape, and `src` may not carry extras.
void load_parameters(NamedParameters& dst, const NamedParameters& src);

}  // namespace vvit
