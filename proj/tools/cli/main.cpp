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

#include <iostream>

#include "common.hpp"
#include "privlens/errors.hpp"
#include "privlens/version.hpp"

using namespace privlens::cli;

int main(int argc, char** argv) {
  CLI::App app{"privlens: metric-DP text privatization and language-model introspection"};
  app.set_version_flag("--version", privlens::kVersion);
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions global;
  app.add_option("--seed", global.seed, "Seed for every random substream")->capture_default_str();
  app.add_option("--threads", global.threads, "Worker threads; results do not depend on it")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_option("--format", global.format, "Report format (default json; csv for attention)")
      ->check(CLI::IsMember({"json", "csv"}));

  const std::vector<Command> commands = {
      register_privatize(app, global), register_rsa(app, global),   register_probe(app, global),
      register_attention(app, global), register_stats(app, global),
  };

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    for (const auto& command : commands) {
      if (command.app->parsed()) command.run();
    }
    return kExitOk;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const privlens::ContractError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const privlens::AlignmentError& e) {
    std::cerr << "alignment error: " << e.what() << "\n";
    return kExitAlignment;
  } catch (const privlens::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
}
