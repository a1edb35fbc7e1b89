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

#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include "common.hpp"
#include "privlens/errors.hpp"
#include "privlens/parallel.hpp"
#include "privlens/privatizer.hpp"

namespace privlens::cli {
namespace {

struct PrivatizeOptions {
  std::string embeddings;
  std::optional<double> epsilon;
  bool identity = false;
  std::string input;
  std::string output;
  std::string report;
  bool lowercase = false;
  bool no_passthrough = false;
};

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

std::vector<std::string> split_whitespace(const std::string& line) {
  std::istringstream stream(line);
  std::vector<std::string> tokens;
  std::string token;
  while (stream >> token) tokens.push_back(token);
  return tokens;
}

void run_privatize(const PrivatizeOptions& opt, const GlobalOptions& global) {
  if (opt.epsilon.has_value() == opt.identity) throw UsageError("exactly one of --epsilon and --identity is required");
  if (global.format == "csv") throw UsageError("privatize writes text and a JSON report; --format csv is not supported");

  PrivatizationConfig config;
  config.budget = opt.identity ? PrivacyBudget::identity() : PrivacyBudget::finite(*opt.epsilon);
  config.seed = global.seed;
  config.lowercase = opt.lowercase;
  config.passthrough_oov = !opt.no_passthrough;

  const EmbeddingSpace space = load_embeddings(opt.embeddings, opt.lowercase);
  const std::vector<std::string> lines = read_lines(opt.input);

  const StreamKey root = StreamKey(global.seed).child("privatize");
  std::vector<PrivatizedText> results(lines.size());
  parallel_for(lines.size(), global.threads, [&](std::size_t l) {
    results[l] = privatize_text(split_whitespace(lines[l]), space, config, root.child(l), 1);
  });

  std::string text;
  std::size_t tokens = 0;
  std::size_t changed = 0;
  std::size_t oov = 0;
  for (const auto& r : results) {
    for (std::size_t i = 0; i < r.tokens.size(); ++i) {
      if (i > 0) text += ' ';
      text += r.tokens[i];
    }
    text += '\n';
    tokens += r.tokens.size();
    changed += r.changed;
    oov += r.oov;
  }
  write_output(opt.output, text);

  Json report = report_header("privatize", global);
  Json cfg;
  cfg["embeddings"] = opt.embeddings;
  cfg["input"] = opt.input;
  cfg["output"] = opt.output;
  cfg["identity"] = opt.identity;
  cfg["epsilon"] = opt.identity ? Json(nullptr) : Json(*opt.epsilon);
  cfg["lowercase"] = opt.lowercase;
  cfg["passthrough_oov"] = config.passthrough_oov;
  cfg["seed"] = global.seed;
  report["config"] = cfg;
  report["lines"] = lines.size();
  report["tokens"] = tokens;
  report["changed"] = changed;
  report["oov"] = oov;
  report["epsilon"] = cfg["epsilon"];
  report["identity"] = opt.identity;
  report["vocabulary"] = space.size();
  report["dim"] = space.dim();

  const std::string report_path =
      !opt.report.empty() ? opt.report : (opt.output == "-" ? std::string() : opt.output + ".report.json");
  if (report_path.empty()) {
    std::cerr << to_json_text(report);
  } else {
    write_output(report_path, to_json_text(report));
  }
}

}  // namespace

Command register_privatize(CLI::App& app, const GlobalOptions& global) {
  auto opt = std::make_shared<PrivatizeOptions>();
  CLI::App* sub = app.add_subcommand("privatize", "Replace each token by the nearest word to its noised embedding");
  sub->add_option("--embeddings", opt->embeddings, "Embedding file (word2vec/GloVe text)")
      ->required()
      ->check(CLI::ExistingFile);
  sub->add_option("--epsilon", opt->epsilon, "Privacy budget (finite, > 0)");
  sub->add_flag("--identity", opt->identity, "No noise: every token maps to itself");
  sub->add_option("--input", opt->input, "Input text, one sentence per line")->required()->check(CLI::ExistingFile);
  sub->add_option("--output", opt->output, "Privatized text ('-' for stdout)")->required();
  sub->add_option("--report", opt->report, "Report path (default <output>.report.json)");
  sub->add_flag("--lowercase", opt->lowercase, "Case-fold tokens and vocabulary");
  sub->add_flag("--no-passthrough", opt->no_passthrough, "Fail on out-of-vocabulary tokens instead of copying them");
  return {sub, [opt, &global] { run_privatize(*opt, global); }};
}

}  // namespace privlens::cli
