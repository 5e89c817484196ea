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
#include <string>

namespace vvit {

/// Plain-text tables for the artifacts the tools write.
std::string render_metrics_json(const std::string& text, const std::string& source);
std::string render_ablation_csv(const std::string& text, const std::string& source);
std::string render_loss_csv(const std::string& text, const std::string& source);

/// Picks the renderer from the content: a metrics JSON object, an ablation
/// CSV (header starting "B,V,M") or a loss log (header starting "epoch").
/// A directory is read through its metrics.json.
std::string render_report_file(const std::filesystem::path& path);

}  // namespace vvit
