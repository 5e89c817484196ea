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

#include "vvit/report.hpp"

#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <vector>

#include "vvit/error.hpp"

namespace vvit {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text, const std::string& source) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    rows.push_back(split_csv_line(line));
    if (rows.size() > 1 && rows.back().size() != rows.front().size()) {
      throw ParseError(source + ":" + std::to_string(rows.size()) + ": expected " +
                       std::to_string(rows.front().size()) + " columns");
    }
  }
  if (rows.empty()) throw ParseError(source + ": empty CSV");
  return rows;
}

double to_number(const std::string& cell, const std::string& source) {
  try {
    std::size_t used = 0;
    const double v = std::stod(cell, &used);
    if (used != cell.size()) throw std::invalid_argument(cell);
    return v;
  } catch (const std::exception&) {
    throw ParseError(source + ": not a number: '" + cell + "'");
  }
}

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

std::string table(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> widths;
  for (const auto& r : rows) {
    if (widths.size() < r.size()) widths.resize(r.size(), 0);
    for (std::size_t i = 0; i < r.size(); ++i) widths[i] = std::max(widths[i], r[i].size());
  }
  std::string out;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    for (std::size_t i = 0; i < rows[k].size(); ++i) out += (i ? "  " : "") + pad(rows[k][i], widths[i]);
    out += "\n";
    if (k == 0) {
      std::size_t total = 0;
      for (std::size_t w : widths) total += w;
      out += std::string(total + 2 * (widths.size() - 1), '-') + "\n";
    }
  }
  return out;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read " + path.string());
  std::stringstream buf;
  buf << is.rdbuf();
  return buf.str();
}

}  // namespace

std::string render_metrics_json(const std::string& text, const std::string& source) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(source + ": invalid JSON: " + e.what());
  }
  std::vector<std::vector<std::string>> rows = {{"metric", "value"}};
  for (const char* key : {"recall", "f1", "brier", "auroc", "ece", "accuracy"}) {
    if (!j.contains(key) || !j[key].is_number()) throw ParseError(source + ": missing metric '" + key + "'");
    rows.push_back({key, fixed(j[key].get<double>())});
  }
  std::string out = table(rows);
  if (j.contains("count")) out += "records: " + j["count"].dump() + "\n";
  if (j.value("classification_warning", false)) {
    out += "warning: a recall/precision denominator was zero; the affected metric is reported as 0\n";
  }
  return out;
}

std::string render_ablation_csv(const std::string& text, const std::string& source) {
  const auto rows = parse_csv(text, source);
  const auto& h = rows.front();
  if (h.size() < 15 || h[0] != "B" || h[1] != "V" || h[2] != "M") throw ParseError(source + ": not an ablation CSV");
  std::vector<std::vector<std::string>> out = {{"B", "V", "M", "Recall", "F1", "Brier", "AUROC", "ECE", "ACC"}};
  for (std::size_t k = 1; k < rows.size(); ++k) {
    const auto& r = rows[k];
    std::vector<std::string> line = {r[0], r[1], r[2]};
    for (std::size_t c = 3; c + 1 < 15; c += 2) {
      line.push_back(fixed(to_number(r[c], source), 3) + " ± " + fixed(to_number(r[c + 1], source), 3));
    }
    out.push_back(std::move(line));
  }
  return table(out);
}

std::string render_loss_csv(const std::string& text, const std::string& source) {
  const auto rows = parse_csv(text, source);
  if (rows.front().empty() || rows.front()[0] != "epoch") throw ParseError(source + ": not a loss log");
  std::vector<std::vector<std::string>> out = {rows.front()};
  for (std::size_t k = 1; k < rows.size(); ++k) {
    std::vector<std::string> line = {rows[k][0]};
    for (std::size_t c = 1; c < rows[k].size(); ++c) {
      line.push_back(rows[k][c].empty() ? "-" : fixed(to_number(rows[k][c], source), 5));
    }
    out.push_back(std::move(line));
  }
  return table(out);
}

std::string render_report_file(const std::filesystem::path& path) {
  std::error_code ec;
  if (std::filesystem::is_directory(path, ec)) return render_report_file(path / "metrics.json");
  const std::string text = read_text(path);
  const std::string source = path.string();
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') return render_metrics_json(text, source);
  if (text.rfind("B,V,M", 0) == 0) return render_ablation_csv(text, source);
  if (text.rfind("epoch", 0) == 0) return render_loss_csv(text, source);
  throw ParseError(source + ": unrecognised report (expected metrics JSON, ablation CSV or loss CSV)");
}

}  // namespace vvit
