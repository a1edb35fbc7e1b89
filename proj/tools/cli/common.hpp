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

#ifndef PRIVLENS_TOOLS_CLI_COMMON_HPP
#define PRIVLENS_TOOLS_CLI_COMMON_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

namespace privlens::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitAlignment = 4;

/// Flags shared by every subcommand.
struct GlobalOptions {
  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::string format;  // empty: the command's own default
};

/// Invalid combination of options discovered after parsing (exit 2).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Json = nlohmann::ordered_json;

struct Command {
  CLI::App* app = nullptr;
  std::function<void()> run;
};

/// {"command", "version", "seed"} prefix common to every report. The thread
/// count is deliberately absent: reports must not depend on it.
Json report_header(const std::string& command, const GlobalOptions& global);

/// Writes to `path`, or to stdout when path is empty or "-".
void write_output(const std::string& path, const std::string& text);

/// Two-space indented JSON with a trailing newline.
std::string to_json_text(const Json& report);

/// Shortest text that parses back to the same double.
std::string format_double(double value);

/// "all" or a single layer index below num_layers.
std::vector<std::size_t> select_layers(const std::string& selector, std::size_t num_layers);

Command register_privatize(CLI::App& app, const GlobalOptions& global);
Command register_rsa(CLI::App& app, const GlobalOptions& global);
Command register_probe(CLI::App& app, const GlobalOptions& global);
Command register_attention(CLI::App& app, const GlobalOptions& global);
Command register_stats(CLI::App& app, const GlobalOptions& global);

}  // namespace privlens::cli

#endif  // PRIVLENS_TOOLS_CLI_COMMON_HPP
