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
#include <optional>

#include "common.hpp"
#include "privlens/errors.hpp"
#include "privlens/privatizer.hpp"

namespace privlens::cli {
namespace {

struct StatsOptions {
  std::string embeddings;
  bool demo = false;
  std::vector<std::string> words;
  bool dp_bound = false;
  std::optional<double> epsilon;
  bool identity = false;
  std::size_t trials = 10000;
  double slack = 0.15;
  std::size_t hit_floor = 100;
  std::string noise = "laplace";
  bool lowercase = false;
  std::string output = "-";
};

void run_stats(const StatsOptions& opt, const GlobalOptions& global) {
  if (opt.demo == !opt.embeddings.empty()) throw UsageError("exactly one of --embeddings and --demo is required");
  if (opt.epsilon.has_value() == opt.identity) throw UsageError("exactly one of --epsilon and --identity is required");
  if (opt.words.empty() && !opt.dp_bound) throw UsageError("nothing to do: give --word and/or --dp-bound");
  if (opt.trials == 0) throw UsageError("--trials must be >= 1");
  if (opt.dp_bound && opt.identity) throw UsageError("--dp-bound needs a finite --epsilon");
  if (opt.noise != "laplace" && !opt.dp_bound) throw UsageError("--noise applies to --dp-bound only");
  if (!(opt.slack >= 0.0)) throw UsageError("--slack must be >= 0");
  if (global.format == "csv") throw UsageError("stats writes a JSON report; --format csv is not supported");

  const EmbeddingSpace space = opt.demo ? demo_space() : load_embeddings(opt.embeddings, opt.lowercase);
  PrivatizationConfig config;
  config.budget = opt.identity ? PrivacyBudget::identity() : PrivacyBudget::finite(*opt.epsilon);
  config.seed = global.seed;
  config.lowercase = opt.lowercase;

  const StreamKey root = StreamKey(global.seed).child("stats");
  Json report = report_header("stats", global);
  Json cfg;
  cfg["embeddings"] = opt.demo ? Json("demo") : Json(opt.embeddings);
  cfg["identity"] = opt.identity;
  cfg["epsilon"] = opt.identity ? Json(nullptr) : Json(*opt.epsilon);
  cfg["words"] = opt.words;
  cfg["dp_bound"] = opt.dp_bound;
  cfg["trials"] = opt.trials;
  cfg["lowercase"] = opt.lowercase;
  if (opt.dp_bound) {
    cfg["slack"] = opt.slack;
    cfg["hit_floor"] = opt.hit_floor;
    cfg["noise"] = opt.noise;
  }
  cfg["seed"] = global.seed;
  report["config"] = cfg;
  report["vocabulary"] = space.size();
  report["dim"] = space.dim();

  if (!opt.words.empty()) {
    Json rows = Json::array();
    for (const auto& word : opt.words) {
      const SubstitutionStats s =
          substitution_stats(word, space, config, opt.trials, root.child(word), global.threads);
      Json histogram = Json::object();
      for (const auto& [w, count] : s.histogram) histogram[w] = count;
      rows.push_back({{"word", s.word},
                      {"self_probability", s.self_probability},
                      {"support_size", s.support_size},
                      {"trials", s.trials},
                      {"histogram", histogram}});
    }
    report["substitution"] = rows;
  }

  if (opt.dp_bound) {
    const NoiseKind kind = opt.noise == "laplace" ? NoiseKind::MetricLaplace : NoiseKind::GaussianMagnitude;
    const DpBoundReport r = verify_dp_bound(space, *opt.epsilon, opt.trials, opt.slack, root.child("dp-bound"),
                                            global.threads, kind, opt.hit_floor);
    Json bound;
    bound["epsilon"] = r.epsilon;
    bound["trials"] = r.trials;
    bound["slack"] = r.slack;
    bound["hit_floor"] = r.hit_floor;
    bound["max_violation"] = r.max_violation;
    bound["pass"] = r.pass;
    bound["excluded"] = r.excluded;
    bound["worst"] = {{"input", space.word(r.worst_input)},
                      {"other", space.word(r.worst_other)},
                      {"output", space.word(r.worst_output)}};
    report["dp_bound"] = bound;
  }
  write_output(opt.output, to_json_text(report));
}

}  // namespace

Command register_stats(CLI::App& app, const GlobalOptions& global) {
  auto opt = std::make_shared<StatsOptions>();
  CLI::App* sub = app.add_subcommand("stats", "Substitution statistics and a Monte-Carlo check of the privacy bound");
  sub->add_option("--embeddings", opt->embeddings, "Embedding file")->check(CLI::ExistingFile);
  sub->add_flag("--demo", opt->demo, "Use the built-in five-word demo space");
  sub->add_option("--word", opt->words, "Word to report substitution statistics for (repeatable)");
  sub->add_flag("--dp-bound", opt->dp_bound, "Check P[M(w)=o] <= exp(eps*d(w,w')) P[M(w')=o] for all triples");
  sub->add_option("--epsilon", opt->epsilon, "Privacy budget (finite, > 0)");
  sub->add_flag("--identity", opt->identity, "No noise");
  sub->add_option("--trials", opt->trials, "Monte-Carlo trials per word")->capture_default_str();
  sub->add_option("--slack", opt->slack, "Relative slack allowed on the bound")->capture_default_str();
  sub->add_option("--hit-floor", opt->hit_floor, "Minimum hits for an estimate to be compared")
      ->capture_default_str();
  sub->add_option("--noise", opt->noise, "laplace|gaussian-magnitude (negative control)")
      ->check(CLI::IsMember({"laplace", "gaussian-magnitude"}))
      ->capture_default_str();
  sub->add_flag("--lowercase", opt->lowercase, "Case-fold words and vocabulary");
  sub->add_option("--output", opt->output, "Report path ('-' for stdout)")->capture_default_str();
  return {sub, [opt, &global] { run_stats(*opt, global); }};
}

}  // namespace privlens::cli
