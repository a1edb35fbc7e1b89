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

#include <cstdio>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>

#include "common.hpp"
#include "privlens/activation_io.hpp"
#include "privlens/attention.hpp"
#include "privlens/errors.hpp"

namespace privlens::cli {
namespace {

struct AttentionOptions {
  std::string dump;
  std::string distances_csv;
  std::optional<std::size_t> heads_per_layer;
  std::string aggregation = "token";
  std::string output = "-";
  std::string svg;
  std::string distances_out;
};

std::string g17(double value) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

Eigen::MatrixXd read_distance_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream cells(line);
    std::string cell;
    while (std::getline(cells, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
        if (cell.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw FormatError(path + ":" + std::to_string(line_no) + ": not a number: '" + cell + "'",
                          static_cast<std::int64_t>(line_no));
      }
    }
    rows.push_back(std::move(row));
  }
  const std::size_t n = rows.size();
  if (n == 0) throw DataError(path + ": empty distance matrix");
  Eigen::MatrixXd d(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    if (rows[i].size() != n) {
      throw DataError(path + ": row " + std::to_string(i) + " has " + std::to_string(rows[i].size()) +
                      " entries, expected " + std::to_string(n));
    }
    for (std::size_t j = 0; j < n; ++j) d(i, j) = rows[i][j];
  }
  return d;
}

std::string matrix_csv(const Eigen::MatrixXd& m) {
  std::string text;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j > 0) text += ',';
      text += g17(m(i, j));
    }
    text += '\n';
  }
  return text;
}

void run_attention(const AttentionOptions& opt, const GlobalOptions& global) {
  if (opt.dump.empty() == opt.distances_csv.empty()) {
    throw UsageError("exactly one of --dump and --distances-csv is required");
  }
  if (opt.heads_per_layer && !opt.dump.empty()) {
    throw UsageError("--heads-per-layer applies to --distances-csv only; dumps record their head count");
  }

  Eigen::MatrixXd distances;
  Eigen::MatrixXd coords;
  std::size_t heads_per_layer = 0;
  std::size_t corpus_tokens = 0;
  if (!opt.dump.empty()) {
    const ActivationDump dump = read_dump(opt.dump);
    const HeadAggregation aggregation =
        opt.aggregation == "sentence" ? HeadAggregation::Sentence : HeadAggregation::Token;
    const HeadDistanceMatrix matrix = head_distance_matrix(dump, aggregation, global.threads);
    distances = matrix.values();
    heads_per_layer = matrix.heads_per_layer();
    corpus_tokens = matrix.corpus_tokens();
    coords = classical_mds(matrix);
  } else {
    distances = read_distance_csv(opt.distances_csv);
    heads_per_layer = opt.heads_per_layer.value_or(static_cast<std::size_t>(distances.rows()));
    coords = classical_mds(distances);
  }

  if (!opt.distances_out.empty()) write_output(opt.distances_out, matrix_csv(distances));
  if (!opt.svg.empty()) write_output(opt.svg, render_svg(coords, heads_per_layer));

  if (global.format == "json") {
    Json report = report_header("attention", global);
    Json cfg;
    cfg["dump"] = opt.dump.empty() ? Json(nullptr) : Json(opt.dump);
    cfg["distances_csv"] = opt.distances_csv.empty() ? Json(nullptr) : Json(opt.distances_csv);
    cfg["aggregation"] = opt.dump.empty() ? Json(nullptr) : Json(opt.aggregation);
    cfg["heads_per_layer"] = heads_per_layer;
    cfg["seed"] = global.seed;
    report["config"] = cfg;
    report["heads"] = distances.rows();
    if (!opt.dump.empty()) report["corpus_tokens"] = corpus_tokens;
    Json points = Json::array();
    for (Eigen::Index i = 0; i < coords.rows(); ++i) {
      const auto idx = static_cast<std::size_t>(i);
      points.push_back({{"head", idx % heads_per_layer},
                        {"layer", idx / heads_per_layer},
                        {"x", coords(i, 0)},
                        {"y", coords(i, 1)}});
    }
    report["points"] = points;
    write_output(opt.output, to_json_text(report));
    return;
  }

  std::string text = "head,layer,x,y\n";
  for (Eigen::Index i = 0; i < coords.rows(); ++i) {
    const auto idx = static_cast<std::size_t>(i);
    text += std::to_string(idx % heads_per_layer) + "," + std::to_string(idx / heads_per_layer) + "," +
            g17(coords(i, 0)) + "," + g17(coords(i, 1)) + "\n";
  }
  write_output(opt.output, text);
}

}  // namespace

Command register_attention(CLI::App& app, const GlobalOptions& global) {
  auto opt = std::make_shared<AttentionOptions>();
  CLI::App* sub = app.add_subcommand("attention", "Cluster attention heads by Jensen-Shannon distance and embed with MDS");
  sub->add_option("--dump", opt->dump, "Activation dump with attention maps")->check(CLI::ExistingFile);
  sub->add_option("--distances-csv", opt->distances_csv, "Precomputed symmetric distance matrix")
      ->check(CLI::ExistingFile);
  sub->add_option("--heads-per-layer", opt->heads_per_layer, "Heads per layer for --distances-csv")
      ->check(CLI::PositiveNumber);
  sub->add_option("--aggregation", opt->aggregation, "token|sentence")
      ->check(CLI::IsMember({"token", "sentence"}))
      ->capture_default_str();
  sub->add_option("--output", opt->output, "Coordinates ('-' for stdout)")->capture_default_str();
  sub->add_option("--svg", opt->svg, "Write an SVG scatter colored by layer");
  sub->add_option("--distances-out", opt->distances_out, "Write the head distance matrix as CSV");
  return {sub, [opt, &global] { run_attention(*opt, global); }};
}

}  // namespace privlens::cli
