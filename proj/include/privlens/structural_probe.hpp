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

#ifndef PRIVLENS_STRUCTURAL_PROBE_HPP
#define PRIVLENS_STRUCTURAL_PROBE_HPP

#include <cstddef>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "privlens/activation_io.hpp"
#include "privlens/random.hpp"

namespace privlens {

enum class StructuralLoss { Depth, Distance };

/// Linear map B (k x d). Depths are |B w|^2, distances |B (w_i - w_j)|^2.
struct StructuralProbeModel {
  Eigen::MatrixXd B;
  std::size_t layer = 0;
  StructuralLoss kind = StructuralLoss::Distance;
  /// Loss after each accepted epoch (first entry is the initial loss).
  std::vector<double> loss_history;

  std::size_t rank() const noexcept { return static_cast<std::size_t>(B.rows()); }
};

/// Word representations of one sentence with its gold tree targets.
struct StructuralSample {
  Eigen::MatrixXd reps;       // n x d
  std::vector<int> depths;    // n
  Eigen::MatrixXd distances;  // n x n tree path lengths
  std::vector<std::string> upos;
  std::vector<std::pair<std::size_t, std::size_t>> edges;  // gold, undirected (min, max)
};

/// Pairs dump sentences with trees; throws AlignmentError on count or length mismatch.
std::vector<StructuralSample> make_structural_samples(const ActivationDump& dump, std::size_t layer,
                                                      std::span<const ParseTree> trees);

Eigen::VectorXd predicted_depths(const Eigen::MatrixXd& B, const Eigen::MatrixXd& reps);
Eigen::MatrixXd predicted_distances(const Eigen::MatrixXd& B, const Eigen::MatrixXd& reps);

/// Mean over sentences of (1/n) sum_i |pred_i - depth_i| or
/// (1/n^2) sum_{i,j} |pred_ij - dist_ij|.
double structural_loss(StructuralLoss kind, const Eigen::MatrixXd& B, std::span<const StructuralSample> batch);

/// Analytic (sub)gradient of structural_loss with respect to B. sign(0) = 0.
Eigen::MatrixXd structural_gradient(StructuralLoss kind, const Eigen::MatrixXd& B,
                                    std::span<const StructuralSample> batch);

struct StructuralConfig {
  double learning_rate = 0.01;
  std::size_t epochs = 300;
  /// Stop once the accepted step size falls below this.
  double min_step = 1e-12;
};

/// Full-batch subgradient descent with backtracking: a step is accepted only
/// if it does not increase the loss, so loss_history is non-increasing.
/// B starts from U(-1/sqrt(d), 1/sqrt(d)).
StructuralProbeModel train_structural_probe(StructuralLoss kind, std::span<const StructuralSample> samples,
                                            std::size_t rank, const StructuralConfig& config, Engine& rng);

StructuralProbeModel train_depth_probe(const ActivationDump& dump, std::size_t layer,
                                       std::span<const ParseTree> trees, std::size_t rank,
                                       const StructuralConfig& config, Engine& rng);
StructuralProbeModel train_distance_probe(const ActivationDump& dump, std::size_t layer,
                                          std::span<const ParseTree> trees, std::size_t rank,
                                          const StructuralConfig& config, Engine& rng);

struct DepthMetrics {
  double root_accuracy = 0.0;
  double mean_spearman = 0.0;
  std::size_t sentences = 0;
  std::size_t spearman_sentences = 0;
};

struct DistanceMetrics {
  double uuas = 0.0;
  double mean_spearman = 0.0;
  std::size_t sentences = 0;
  std::size_t spearman_sentences = 0;
};

DepthMetrics eval_depth_probe(const Eigen::MatrixXd& B, std::span<const StructuralSample> samples);
DepthMetrics eval_depth_probe(const StructuralProbeModel& model, const ActivationDump& dump,
                              std::span<const ParseTree> trees);

/// With exclude_punct, words tagged PUNCT are dropped before building the MST
/// and before collecting distance pairs; gold edges touching them are dropped too.
DistanceMetrics eval_distance_probe(const Eigen::MatrixXd& B, std::span<const StructuralSample> samples,
                                    bool exclude_punct);
DistanceMetrics eval_distance_probe(const StructuralProbeModel& model, const ActivationDump& dump,
                                    std::span<const ParseTree> trees, bool exclude_punct);

/// Prim's algorithm from vertex 0 on a dense symmetric matrix; among equal
/// keys the lowest vertex index is taken. Edges are returned as (min, max).
std::vector<std::pair<std::size_t, std::size_t>> prim_mst(const Eigen::MatrixXd& weights);

/// |predicted edges ∩ gold edges| / |gold edges|.
double uuas(std::vector<std::pair<std::size_t, std::size_t>> predicted,
            std::vector<std::pair<std::size_t, std::size_t>> gold);

using GradientFn = std::function<Eigen::MatrixXd(StructuralLoss, const Eigen::MatrixXd&,
                                                 std::span<const StructuralSample>)>;

/// True if some |pred - gold| < 10 * delta, i.e. finite differences may straddle the |.| kink.
bool near_kink(StructuralLoss kind, const Eigen::MatrixXd& B, std::span<const StructuralSample> batch, double delta);

/// Largest |analytic - numeric| / max(|analytic|, |numeric|) over entries of B,
/// with central differences of step delta. Entries where both are below 1e-12 are skipped.
double gradient_check(StructuralLoss kind, const Eigen::MatrixXd& B, std::span<const StructuralSample> batch,
                      double delta, const GradientFn& analytic = structural_gradient);

void save_structural_probe(const StructuralProbeModel& model, const std::filesystem::path& path);
StructuralProbeModel load_structural_probe(const std::filesystem::path& path);

}  // namespace privlens

#endif  // PRIVLENS_STRUCTURAL_PROBE_HPP
