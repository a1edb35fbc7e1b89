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

#include <memory>

#include "common.hpp"
#include "privlens/activation_io.hpp"
#include "privlens/errors.hpp"
#include "privlens/rsa.hpp"

namespace privlens::cli {
namespace {

struct RsaOptions {
  std::string a;
  std::string b;
  std::string layer = "all";
  std::string output = "-";
};

void run_rsa(const RsaOptions& opt, const GlobalOptions& global) {
  const ActivationDump a = read_dump(opt.a);
  const ActivationDump b = read_dump(opt.b);
  check_aligned(a, b);
  if (a.num_layers != b.num_layers) {
    throw AlignmentError("dumps differ in layer count: " + std::to_string(a.num_layers) + " vs " +
                         std::to_string(b.num_layers));
  }
  const auto layers = select_layers(opt.layer, a.num_layers);

  std::vector<LayerScore> scores;
  for (std::size_t layer : layers) scores.push_back({layer, rsa_score(a, b, layer, global.threads)});

  if (global.format == "csv") {
    std::string text = "layer,rho\n";
    for (const auto& s : scores) text += std::to_string(s.layer) + "," + format_double(s.rho) + "\n";
    write_output(opt.output, text);
    return;
  }

  Json report = report_header("rsa", global);
  Json cfg;
  cfg["a"] = opt.a;
  cfg["b"] = opt.b;
  cfg["layer"] = opt.layer;
  cfg["seed"] = global.seed;
  report["config"] = cfg;
  report["sentences"] = a.sentences.size();
  Json rows = Json::array();
  double total = 0.0;
  for (const auto& s : scores) {
    rows.push_back({{"layer", s.layer}, {"rho", s.rho}});
    total += s.rho;
  }
  report["layers"] = rows;
  report["mean_rho"] = total / static_cast<double>(scores.size());
  write_output(opt.output, to_json_text(report));
}

}  // namespace

Command register_rsa(CLI::App& app, const GlobalOptions& global) {
  auto opt = std::make_shared<RsaOptions>();
  CLI::App* sub = app.add_subcommand("rsa", "Layer-wise representational similarity between two aligned dumps");
  sub->add_option("--a", opt->a, "First activation dump")->required()->check(CLI::ExistingFile);
  sub->add_option("--b", opt->b, "Second activation dump")->required()->check(CLI::ExistingFile);
  sub->add_option("--layer", opt->layer, "'all' or a layer index")->capture_default_str();
  sub->add_option("--output", opt->output, "Report path ('-' for stdout)")->capture_default_str();
  return {sub, [opt, &global] { run_rsa(*opt, global); }};
}

}  // namespace privlens::cli
