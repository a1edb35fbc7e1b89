// Copyright 2026 The privlens Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "common.hpp"

#include <charconv>
#include <fstream>
#include <iostream>

#include "privlens/errors.hpp"
#include "privlens/version.hpp"

namespace privlens::cli {

Json report_header(const std::string& command, const GlobalOptions& global) {
  Json j;
  j["command"] = command;
  j["version"] = kVersion;
  j["seed"] = global.seed;
  return j;
}

void write_output(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    std::cout.flush();
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw FormatError("write to '" + path + "' failed");
}

std::string to_json_text(const Json& report) { return report.dump(2) + "\n"; }

std::string format_double(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, end);
}

std::vector<std::size_t> select_layers(const std::string& selector, std::size_t num_layers) {
  std::vector<std::size_t> layers;
  if (selector == "all") {
    for (std::size_t l = 0; l < num_layers; ++l) layers.push_back(l);
    return layers;
  }
  std::size_t layer = 0;
  auto [end, ec] = std::from_chars(selector.data(), selector.data() + selector.size(), layer);
  if (ec != std::errc() || end != selector.data() + selector.size()) {
    throw UsageError("--layer must be 'all' or a non-negative integer, got '" + selector + "'");
  }
  if (layer >= num_layers) {
    throw UsageError("--layer " + selector + " out of range: dump has " + std::to_string(num_layers) + " layers");
  }
  layers.push_back(layer);
  return layers;
}

}  // namespace privlens::cli
