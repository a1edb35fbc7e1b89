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

#include <cmath>
#include <iostream>
#include <memory>
#include <numeric>
#include <optional>

#include "common.hpp"
#include "privlens/activation_io.hpp"
#include "privlens/errors.hpp"
#include "privlens/probes.hpp"
#include "privlens/structural_probe.hpp"

namespace privlens::cli {
namespace {

struct ProbeOptions {
  std::string task;
  std::string dump;
  std::string layer = "all";
  std::string trees;
  std::string spans;
  bool linear = false;
  bool control = false;
  bool eval_on_train = false;
  double train_fraction = 0.8;
  std::optional<std::size_t> epochs;
  std::optional<double> lr;
  std::size_t batch_size = 32;
  std::size_t hidden = 256;
  std::optional<std::size_t> rank;
  std::size_t negatives = 1;
  std::size_t pairs = 5;
  bool include_punct = false;
  std::string model_out;
  std::string output = "-";
};

bool is_structural(const std::string& task) { return task == "depth" || task == "distance"; }

Json metrics_json(const ClassifierMetrics& m) {
  return {{"accuracy", m.accuracy}, {"micro_f1", m.micro_f1}, {"examples", m.examples}};
}

Json run_classifier_layer(const ProbeOptions& opt, const ActivationDump& dump, std::size_t layer,
                          std::span<const SpanExample> spans, const StreamKey& key) {
  Engine build_rng = key.child("build").engine();
  Dataset data;
  if (opt.task == "length") {
    data = build_length_task(dump, layer, build_rng);
  } else if (opt.task == "content") {
    data = build_content_task(dump, layer, opt.negatives, build_rng);
  } else if (opt.task == "order") {
    data = build_order_task(dump, layer, opt.pairs, build_rng);
  } else {
    data = build_edge_features(dump, layer, spans);
  }
  if (opt.control) {
    Engine control_rng = key.child("control").engine();
    data = shuffle_labels(data, control_rng);
  }
  Engine split_rng = key.child("split").engine();
  const auto [train, test] = split_dataset(data, opt.train_fraction, split_rng);

  ClassifierConfig config;
  config.hidden_dim = opt.linear ? 0 : opt.hidden;
  if (opt.lr) config.learning_rate = *opt.lr;
  if (opt.epochs) config.epochs = *opt.epochs;
  config.batch_size = opt.batch_size;
  Engine train_rng = key.child("train").engine();
  const ClassifierProbe probe = train_classifier(train, config, train_rng);
  if (!opt.model_out.empty()) save_classifier(probe, opt.model_out);

  Json row;
  row["layer"] = layer;
  row["classes"] = data.class_names;
  row["train_examples"] = train.size();
  row["test_examples"] = test.size();
  row["final_loss"] = probe.final_loss;
  row["test"] = metrics_json(eval_classifier(probe, test));
  if (opt.eval_on_train) row["train"] = metrics_json(eval_classifier(probe, train));
  return row;
}

Json structural_metrics(StructuralLoss kind, const Eigen::MatrixXd& B, std::span<const StructuralSample> samples,
                        bool exclude_punct) {
  if (kind == StructuralLoss::Depth) {
    const DepthMetrics m = eval_depth_probe(B, samples);
    return {{"root_accuracy", m.root_accuracy},
            {"spearman", m.mean_spearman},
            {"sentences", m.sentences},
            {"spearman_sentences", m.spearman_sentences}};
  }
  const DistanceMetrics m = eval_distance_probe(B, samples, exclude_punct);
  return {{"uuas", m.uuas},
          {"spearman", m.mean_spearman},
          {"sentences", m.sentences},
          {"spearman_sentences", m.spearman_sentences}};
}

Json run_structural_layer(const ProbeOptions& opt, const ActivationDump& dump, std::size_t layer,
                          std::span<const ParseTree> trees, const StreamKey& key) {
  const StructuralLoss kind = opt.task == "depth" ? StructuralLoss::Depth : StructuralLoss::Distance;
  const std::vector<StructuralSample> samples = make_structural_samples(dump, layer, trees);

  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Engine split_rng = key.child("split").engine();
  shuffle(order, split_rng);
  const auto cut = static_cast<std::size_t>(std::floor(opt.train_fraction * static_cast<double>(order.size())));
  if (cut == 0 || cut == order.size()) {
    throw DataError("cannot split " + std::to_string(order.size()) + " sentences into non-empty train and test sets");
  }
  std::vector<StructuralSample> train;
  std::vector<StructuralSample> test;
  for (std::size_t i = 0; i < order.size(); ++i) (i < cut ? train : test).push_back(samples[order[i]]);

  StructuralConfig config;
  if (opt.lr) config.learning_rate = *opt.lr;
  if (opt.epochs) config.epochs = *opt.epochs;
  const std::size_t rank = opt.rank.value_or(dump.hidden_dim);
  Engine train_rng = key.child("train").engine();
  StructuralProbeModel model = train_structural_probe(kind, train, rank, config, train_rng);
  model.layer = layer;
  if (!opt.model_out.empty()) save_structural_probe(model, opt.model_out);

  Json row;
  row["layer"] = layer;
  row["rank"] = rank;
  row["train_sentences"] = train.size();
  row["test_sentences"] = test.size();
  row["epochs_run"] = model.loss_history.size() - 1;
  row["initial_loss"] = model.loss_history.front();
  row["final_loss"] = model.loss_history.back();
  row["test"] = structural_metrics(kind, model.B, test, !opt.include_punct);
  if (opt.eval_on_train) row["train"] = structural_metrics(kind, model.B, train, !opt.include_punct);
  return row;
}

std::string csv_report(const std::string& task, const Json& rows) {
  const bool structural = is_structural(task);
  std::string text;
  if (!structural) {
    text = "layer,accuracy,micro_f1,train_examples,test_examples\n";
  } else if (task == "depth") {
    text = "layer,root_accuracy,spearman,train_sentences,test_sentences\n";
  } else {
    text = "layer,uuas,spearman,train_sentences,test_sentences\n";
  }
  for (const auto& row : rows) {
    const Json& t = row["test"];
    text += std::to_string(row["layer"].get<std::size_t>()) + ",";
    if (!structural) {
      text += format_double(t["accuracy"].get<double>()) + "," + format_double(t["micro_f1"].get<double>()) + "," +
              std::to_string(row["train_examples"].get<std::size_t>()) + "," +
              std::to_string(row["test_examples"].get<std::size_t>());
    } else {
      const char* first = task == "depth" ? "root_accuracy" : "uuas";
      text += format_double(t[first].get<double>()) + "," + format_double(t["spearman"].get<double>()) + "," +
              std::to_string(row["train_sentences"].get<std::size_t>()) + "," +
              std::to_string(row["test_sentences"].get<std::size_t>());
    }
    text += "\n";
  }
  return text;
}

void run_probe(const ProbeOptions& opt, const GlobalOptions& global) {
  const bool structural = is_structural(opt.task);
  if (structural && opt.trees.empty()) throw UsageError("--task " + opt.task + " requires --trees");
  if (structural && opt.control) throw UsageError("--control applies to classifier tasks only");
  if (opt.task == "edge" && opt.spans.empty()) throw UsageError("--task edge requires --spans");
  if (!(opt.train_fraction > 0.0 && opt.train_fraction < 1.0)) throw UsageError("--train-fraction must be in (0, 1)");

  const ActivationDump dump = read_dump(opt.dump);
  const auto layers = select_layers(opt.layer, dump.num_layers);
  if (!opt.model_out.empty() && layers.size() != 1) throw UsageError("--model-out requires a single --layer");

  ConlluResult parsed;
  if (structural) {
    parsed = read_conllu(opt.trees);
    for (const auto& w : parsed.warnings) std::cerr << "warning: " << w << "\n";
  }
  std::vector<SpanExample> spans;
  if (opt.task == "edge") spans = read_span_tasks(opt.spans, word_counts(dump));

  const StreamKey root = StreamKey(global.seed).child("probe").child(opt.task);
  Json rows = Json::array();
  for (std::size_t layer : layers) {
    const StreamKey key = root.child(layer);
    rows.push_back(structural ? run_structural_layer(opt, dump, layer, parsed.trees, key)
                              : run_classifier_layer(opt, dump, layer, spans, key));
  }

  if (global.format == "csv") {
    write_output(opt.output, csv_report(opt.task, rows));
    return;
  }

  Json report = report_header("probe", global);
  Json cfg;
  cfg["task"] = opt.task;
  cfg["dump"] = opt.dump;
  cfg["layer"] = opt.layer;
  if (structural) {
    cfg["trees"] = opt.trees;
    cfg["rank"] = opt.rank.value_or(dump.hidden_dim);
    cfg["include_punct"] = opt.include_punct;
    const StructuralConfig defaults;
    cfg["epochs"] = opt.epochs.value_or(defaults.epochs);
    cfg["lr"] = opt.lr.value_or(defaults.learning_rate);
  } else {
    if (opt.task == "edge") cfg["spans"] = opt.spans;
    if (opt.task == "content") cfg["negatives"] = opt.negatives;
    if (opt.task == "order") cfg["pairs"] = opt.pairs;
    const ClassifierConfig defaults;
    cfg["linear"] = opt.linear;
    cfg["hidden"] = opt.linear ? std::size_t{0} : opt.hidden;
    cfg["epochs"] = opt.epochs.value_or(defaults.epochs);
    cfg["lr"] = opt.lr.value_or(defaults.learning_rate);
    cfg["batch_size"] = opt.batch_size;
    cfg["control"] = opt.control;
  }
  cfg["train_fraction"] = opt.train_fraction;
  cfg["eval_on_train"] = opt.eval_on_train;
  cfg["model_out"] = opt.model_out.empty() ? Json(nullptr) : Json(opt.model_out);
  cfg["seed"] = global.seed;
  report["config"] = cfg;
  if (structural) {
    report["trees"] = parsed.trees.size();
    report["skipped_trees"] = parsed.skipped;
  }
  report["layers"] = rows;
  write_output(opt.output, to_json_text(report));
}

}  // namespace

Command register_probe(CLI::App& app, const GlobalOptions& global) {
  auto opt = std::make_shared<ProbeOptions>();
  CLI::App* sub = app.add_subcommand("probe", "Train and evaluate surface, edge or structural probes per layer");
  sub->add_option("--task", opt->task, "length|content|order|edge|depth|distance")
      ->required()
      ->check(CLI::IsMember({"length", "content", "order", "edge", "depth", "distance"}));
  sub->add_option("--dump", opt->dump, "Activation dump")->required()->check(CLI::ExistingFile);
  sub->add_option("--layer", opt->layer, "'all' or a layer index")->capture_default_str();
  sub->add_option("--trees", opt->trees, "CoNLL-U gold trees (depth, distance)")->check(CLI::ExistingFile);
  sub->add_option("--spans", opt->spans, "JSON-lines span labels (edge)")->check(CLI::ExistingFile);
  sub->add_flag("--linear", opt->linear, "Logistic probe instead of one hidden layer");
  sub->add_flag("--control", opt->control, "Shuffle labels before splitting");
  sub->add_flag("--eval-on-train", opt->eval_on_train, "Also report metrics on the training split");
  sub->add_option("--train-fraction", opt->train_fraction, "Training share of the split")->capture_default_str();
  sub->add_option("--epochs", opt->epochs, "Epochs (default 40 for classifiers, 300 for structural probes)");
  sub->add_option("--lr", opt->lr, "Step size (default 1e-3 for classifiers, 0.01 for structural probes)");
  sub->add_option("--batch-size", opt->batch_size, "Classifier minibatch size")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_option("--hidden", opt->hidden, "Hidden units of the classifier")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_option("--rank", opt->rank, "Structural probe rank (default hidden dim)")->check(CLI::PositiveNumber);
  sub->add_option("--negatives", opt->negatives, "Content task negatives per positive")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_option("--pairs", opt->pairs, "Order task pairs per sentence")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_flag("--include-punct", opt->include_punct, "Keep punctuation words in UUAS");
  sub->add_option("--model-out", opt->model_out, "Save the trained probe (single layer only)");
  sub->add_option("--output", opt->output, "Report path ('-' for stdout)")->capture_default_str();
  return {sub, [opt, &global] { run_probe(*opt, global); }};
}

}  // namespace privlens::cli
