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

#include "privlens/structural_probe.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/random/uniform_real_distribution.hpp>

#include "privlens/errors.hpp"
#include "privlens/rsa.hpp"
#include "probe_format.hpp"

namespace privlens {

namespace {

double sign(double x) { return static_cast<double>((x > 0.0) - (x < 0.0)); }

}  // namespace

std::vector<StructuralSample> make_structural_samples(const ActivationDump& dump, std::size_t layer,
                                                      std::span<const ParseTree> trees) {
  if (trees.size() != dump.sentences.size()) {
    throw AlignmentError("dump has " + std::to_string(dump.sentences.size()) + " sentences but " +
                         std::to_string(trees.size()) + " trees were given");
  }
  std::vector<StructuralSample> out;
  out.reserve(trees.size());
  for (std::size_t s = 0; s < trees.size(); ++s) {
    const auto& tree = trees[s];
    if (tree.size() != dump.sentences[s].num_words()) {
      throw AlignmentError("sentence " + std::to_string(s) + " has " + std::to_string(dump.sentences[s].num_words()) +
                           " words in the dump but " + std::to_string(tree.size()) + " in the tree");
    }
    StructuralSample sample;
    sample.reps = pool_subwords(dump, s, layer);
    sample.depths = tree_depths(tree);
    const auto dist = tree_distances(tree);
    const auto n = static_cast<Eigen::Index>(tree.size());
    sample.distances.resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) sample.distances(i, j) = dist[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
    sample.upos = tree.upos;
    sample.edges = tree_edges(tree);
    out.push_back(std::move(sample));
  }
  return out;
}

Eigen::VectorXd predicted_depths(const Eigen::MatrixXd& B, const Eigen::MatrixXd& reps) {
  const Eigen::MatrixXd projected = reps * B.transpose();
  return projected.rowwise().squaredNorm();
}

Eigen::MatrixXd predicted_distances(const Eigen::MatrixXd& B, const Eigen::MatrixXd& reps) {
  const Eigen::MatrixXd p = reps * B.transpose();
  const Eigen::Index n = p.rows();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      out(i, j) = out(j, i) = (p.row(i) - p.row(j)).squaredNorm();
    }
  }
  return out;
}

double structural_loss(StructuralLoss kind, const Eigen::MatrixXd& B, std::span<const StructuralSample> batch) {
  if (batch.empty()) throw ContractError("structural_loss: empty batch");
  double total = 0.0;
  for (const auto& s : batch) {
    const double n = static_cast<double>(s.reps.rows());
    if (kind == StructuralLoss::Depth) {
      const Eigen::VectorXd pred = predicted_depths(B, s.reps);
      double acc = 0.0;
      for (Eigen::Index i = 0; i < pred.size(); ++i) acc += std::abs(pred[i] - s.depths[static_cast<std::size_t>(i)]);
      total += acc / n;
    } else {
      total += (predicted_distances(B, s.reps) - s.distances).cwiseAbs().sum() / (n * n);
    }
  }
  return total / static_cast<double>(batch.size());
}

Eigen::MatrixXd structural_gradient(StructuralLoss kind, const Eigen::MatrixXd& B,
                                    std::span<const StructuralSample> batch) {
  if (batch.empty()) throw ContractError("structural_gradient: empty batch");
  Eigen::MatrixXd moment = Eigen::MatrixXd::Zero(B.cols(), B.cols());
  for (const auto& s : batch) {
    const Eigen::Index n = s.reps.rows();
    const double nd = static_cast<double>(n);
    if (kind == StructuralLoss::Depth) {
      // d|Bw|^2/dB = 2 B w w^T
      const Eigen::VectorXd pred = predicted_depths(B, s.reps);
      Eigen::VectorXd g(n);
      for (Eigen::Index i = 0; i < n; ++i) g[i] = sign(pred[i] - s.depths[static_cast<std::size_t>(i)]) / nd;
      moment += s.reps.transpose() * g.asDiagonal() * s.reps;
    } else {
      // sum_ij g_ij (w_i - w_j)(w_i - w_j)^T = 2 W^T (diag(G 1) - G) W for symmetric G.
      const Eigen::MatrixXd pred = predicted_distances(B, s.reps);
      Eigen::MatrixXd g(n, n);
      for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) g(i, j) = sign(pred(i, j) - s.distances(i, j)) / (nd * nd);
      }
      Eigen::MatrixXd laplacian = -g;
      laplacian.diagonal() += g.rowwise().sum();
      moment += 2.0 * s.reps.transpose() * laplacian * s.reps;
    }
  }
  return 2.0 * B * moment / static_cast<double>(batch.size());
}

StructuralProbeModel train_structural_probe(StructuralLoss kind, std::span<const StructuralSample> samples,
                                            std::size_t rank, const StructuralConfig& config, Engine& rng) {
  if (samples.empty()) throw ContractError("structural probe needs at least one sentence");
  const auto d = samples.front().reps.cols();
  if (rank < 1 || rank > static_cast<std::size_t>(d)) {
    throw ContractError("probe rank " + std::to_string(rank) + " must be in [1, " + std::to_string(d) + "]");
  }

  StructuralProbeModel model;
  model.kind = kind;
  const double limit = 1.0 / std::sqrt(static_cast<double>(d));
  boost::random::uniform_real_distribution<double> init(-limit, limit);
  model.B.resize(static_cast<Eigen::Index>(rank), d);
  for (Eigen::Index i = 0; i < model.B.size(); ++i) model.B.data()[i] = init(rng);

  double loss = structural_loss(kind, model.B, samples);
  model.loss_history.push_back(loss);
  double step = config.learning_rate;
  for (std::size_t epoch = 0; epoch < config.epochs && step >= config.min_step; ++epoch) {
    const Eigen::MatrixXd grad = structural_gradient(kind, model.B, samples);
    if (!grad.allFinite()) throw DivergenceError("structural probe gradient is not finite; use a smaller step");
    while (step >= config.min_step) {
      const Eigen::MatrixXd candidate = model.B - step * grad;
      const double candidate_loss = structural_loss(kind, candidate, samples);
      if (std::isfinite(candidate_loss) && candidate_loss <= loss) {
        model.B = candidate;
        loss = candidate_loss;
        step *= 1.25;
        break;
      }
      step *= 0.5;
    }
    model.loss_history.push_back(loss);
  }
  return model;
}

StructuralProbeModel train_depth_probe(const ActivationDump& dump, std::size_t layer,
                                       std::span<const ParseTree> trees, std::size_t rank,
                                       const StructuralConfig& config, Engine& rng) {
  const auto samples = make_structural_samples(dump, layer, trees);
  auto model = train_structural_probe(StructuralLoss::Depth, samples, rank, config, rng);
  model.layer = layer;
  return model;
}

StructuralProbeModel train_distance_probe(const ActivationDump& dump, std::size_t layer,
                                          std::span<const ParseTree> trees, std::size_t rank,
                                          const StructuralConfig& config, Engine& rng) {
  const auto samples = make_structural_samples(dump, layer, trees);
  auto model = train_structural_probe(StructuralLoss::Distance, samples, rank, config, rng);
  model.layer = layer;
  return model;
}

// ---------------------------------------------------------------------------
// Evaluation

namespace {

bool distinct_values(std::span<const double> v) {
  return std::any_of(v.begin(), v.end(), [&](double x) { return x != v.front(); });
}

// Spearman with a constant prediction scored as 0 (no ordering information).
double spearman_or_zero(std::span<const double> predicted, std::span<const double> gold) {
  if (!distinct_values(predicted)) return 0.0;
  return spearman(predicted, gold);
}

}  // namespace

DepthMetrics eval_depth_probe(const Eigen::MatrixXd& B, std::span<const StructuralSample> samples) {
  DepthMetrics m;
  double root_hits = 0.0;
  double spearman_sum = 0.0;
  for (const auto& s : samples) {
    const Eigen::VectorXd pred = predicted_depths(B, s.reps);
    Eigen::Index argmin = 0;
    for (Eigen::Index i = 1; i < pred.size(); ++i) {
      if (pred[i] < pred[argmin]) argmin = i;
    }
    const auto gold_root = static_cast<Eigen::Index>(
        std::find(s.depths.begin(), s.depths.end(), 0) - s.depths.begin());
    root_hits += argmin == gold_root ? 1.0 : 0.0;
    ++m.sentences;

    std::vector<double> gold(s.depths.begin(), s.depths.end());
    if (!distinct_values(gold)) continue;
    std::vector<double> p(pred.data(), pred.data() + pred.size());
    spearman_sum += spearman_or_zero(p, gold);
    ++m.spearman_sentences;
  }
  m.root_accuracy = m.sentences ? root_hits / static_cast<double>(m.sentences) : 0.0;
  m.mean_spearman = m.spearman_sentences ? spearman_sum / static_cast<double>(m.spearman_sentences) : 0.0;
  return m;
}

DepthMetrics eval_depth_probe(const StructuralProbeModel& model, const ActivationDump& dump,
                              std::span<const ParseTree> trees) {
  return eval_depth_probe(model.B, make_structural_samples(dump, model.layer, trees));
}

std::vector<std::pair<std::size_t, std::size_t>> prim_mst(const Eigen::MatrixXd& weights) {
  const auto n = static_cast<std::size_t>(weights.rows());
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  if (n < 2) return edges;
  std::vector<bool> in_tree(n, false);
  std::vector<double> key(n, std::numeric_limits<double>::infinity());
  std::vector<std::size_t> parent(n, 0);
  key[0] = 0.0;
  for (std::size_t iter = 0; iter < n; ++iter) {
    std::size_t u = n;
    for (std::size_t v = 0; v < n; ++v) {
      if (!in_tree[v] && (u == n || key[v] < key[u])) u = v;
    }
    in_tree[u] = true;
    if (iter > 0) edges.emplace_back(std::min(u, parent[u]), std::max(u, parent[u]));
    for (std::size_t v = 0; v < n; ++v) {
      const double w = weights(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(v));
      if (!in_tree[v] && w < key[v]) {
        key[v] = w;
        parent[v] = u;
      }
    }
  }
  std::sort(edges.begin(), edges.end());
  return edges;
}

double uuas(std::vector<std::pair<std::size_t, std::size_t>> predicted,
            std::vector<std::pair<std::size_t, std::size_t>> gold) {
  if (gold.empty()) throw ContractError("uuas: no gold edges");
  for (auto* edges : {&predicted, &gold}) {
    for (auto& [a, b] : *edges) {
      if (a > b) std::swap(a, b);
    }
  }
  std::sort(predicted.begin(), predicted.end());
  std::sort(gold.begin(), gold.end());
  std::vector<std::pair<std::size_t, std::size_t>> common;
  std::set_intersection(predicted.begin(), predicted.end(), gold.begin(), gold.end(), std::back_inserter(common));
  return static_cast<double>(common.size()) / static_cast<double>(gold.size());
}

DistanceMetrics eval_distance_probe(const Eigen::MatrixXd& B, std::span<const StructuralSample> samples,
                                    bool exclude_punct) {
  DistanceMetrics m;
  double uuas_sum = 0.0;
  double spearman_sum = 0.0;
  for (const auto& s : samples) {
    const auto n = static_cast<std::size_t>(s.reps.rows());
    std::vector<std::size_t> keep;
    std::vector<std::size_t> position(n, n);
    for (std::size_t i = 0; i < n; ++i) {
      if (exclude_punct && i < s.upos.size() && s.upos[i] == "PUNCT") continue;
      position[i] = keep.size();
      keep.push_back(i);
    }
    std::vector<std::pair<std::size_t, std::size_t>> gold;
    for (const auto& [a, b] : s.edges) {
      if (position[a] < n && position[b] < n) gold.emplace_back(position[a], position[b]);
    }
    if (keep.size() < 2 || gold.empty()) continue;

    const Eigen::MatrixXd full = predicted_distances(B, s.reps);
    const auto k = static_cast<Eigen::Index>(keep.size());
    Eigen::MatrixXd pred(k, k);
    for (Eigen::Index i = 0; i < k; ++i) {
      for (Eigen::Index j = 0; j < k; ++j) {
        pred(i, j) = full(static_cast<Eigen::Index>(keep[static_cast<std::size_t>(i)]),
                          static_cast<Eigen::Index>(keep[static_cast<std::size_t>(j)]));
      }
    }
    uuas_sum += uuas(prim_mst(pred), gold);
    ++m.sentences;

    std::vector<double> p, g;
    for (std::size_t i = 0; i < keep.size(); ++i) {
      for (std::size_t j = i + 1; j < keep.size(); ++j) {
        p.push_back(pred(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
        g.push_back(s.distances(static_cast<Eigen::Index>(keep[i]), static_cast<Eigen::Index>(keep[j])));
      }
    }
    if (g.size() < 2 || !distinct_values(g)) continue;
    spearman_sum += spearman_or_zero(p, g);
    ++m.spearman_sentences;
  }
  m.uuas = m.sentences ? uuas_sum / static_cast<double>(m.sentences) : 0.0;
  m.mean_spearman = m.spearman_sentences ? spearman_sum / static_cast<double>(m.spearman_sentences) : 0.0;
  return m;
}

DistanceMetrics eval_distance_probe(const StructuralProbeModel& model, const ActivationDump& dump,
                                    std::span<const ParseTree> trees, bool exclude_punct) {
  return eval_distance_probe(model.B, make_structural_samples(dump, model.layer, trees), exclude_punct);
}

// ---------------------------------------------------------------------------
// Gradient verification

bool near_kink(StructuralLoss kind, const Eigen::MatrixXd& B, std::span<const StructuralSample> batch, double delta) {
  for (const auto& s : batch) {
    if (kind == StructuralLoss::Depth) {
      const Eigen::VectorXd pred = predicted_depths(B, s.reps);
      for (Eigen::Index i = 0; i < pred.size(); ++i) {
        // Predicted depth is a squared norm, so |pred - 0| = pred is smooth at the root.
        if (s.depths[static_cast<std::size_t>(i)] == 0) continue;
        if (std::abs(pred[i] - s.depths[static_cast<std::size_t>(i)]) < 10 * delta) return true;
      }
    } else {
      const Eigen::MatrixXd pred = predicted_distances(B, s.reps);
      for (Eigen::Index i = 0; i < pred.rows(); ++i) {
        // The diagonal is identically 0 - 0 and contributes no gradient.
        for (Eigen::Index j = 0; j < pred.cols(); ++j) {
          if (i != j && std::abs(pred(i, j) - s.distances(i, j)) < 10 * delta) return true;
        }
      }
    }
  }
  return false;
}

double gradient_check(StructuralLoss kind, const Eigen::MatrixXd& B, std::span<const StructuralSample> batch,
                      double delta, const GradientFn& analytic) {
  const Eigen::MatrixXd grad = analytic(kind, B, batch);
  double worst = 0.0;
  Eigen::MatrixXd probe = B;
  for (Eigen::Index i = 0; i < B.size(); ++i) {
    const double original = probe.data()[i];
    probe.data()[i] = original + delta;
    const double up = structural_loss(kind, probe, batch);
    probe.data()[i] = original - delta;
    const double down = structural_loss(kind, probe, batch);
    probe.data()[i] = original;
    const double numeric = (up - down) / (2.0 * delta);
    const double a = grad.data()[i];
    const double scale = std::max(std::abs(a), std::abs(numeric));
    if (scale < 1e-12) continue;
    worst = std::max(worst, std::abs(a - numeric) / scale);
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Model files

void save_structural_probe(const StructuralProbeModel& model, const std::filesystem::path& path) {
  detail::ProbeWriter w(path, model.kind == StructuralLoss::Depth ? detail::ProbeKind::Depth
                                                                  : detail::ProbeKind::Distance);
  w.u32(static_cast<std::uint32_t>(model.layer));
  w.u32(static_cast<std::uint32_t>(model.B.rows()));
  w.u32(static_cast<std::uint32_t>(model.B.cols()));
  w.matrix(model.B);
  w.finish();
}

StructuralProbeModel load_structural_probe(const std::filesystem::path& path) {
  detail::ProbeReader r(path);
  if (r.kind() == detail::ProbeKind::Classifier) throw FormatError("probe file holds a classifier", 8);
  StructuralProbeModel model;
  model.kind = r.kind() == detail::ProbeKind::Depth ? StructuralLoss::Depth : StructuralLoss::Distance;
  model.layer = r.u32();
  const std::uint32_t k = r.u32();
  const std::uint32_t d = r.u32();
  model.B = r.matrix(k, d);
  r.expect_end();
  return model;
}

}  // namespace privlens
