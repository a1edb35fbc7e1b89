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

#include "privlens/rsa.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "privlens/errors.hpp"
#include "privlens/parallel.hpp"

namespace privlens {

DissimilarityMatrix::DissimilarityMatrix(Eigen::MatrixXd values) : values_(std::move(values)) {
  const Eigen::Index n = values_.rows();
  if (values_.cols() != n) throw ContractError("dissimilarity matrix must be square");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (values_(i, i) != 0.0) throw ContractError("dissimilarity matrix has nonzero diagonal at " + std::to_string(i));
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double v = values_(i, j);
      if (v != values_(j, i)) throw ContractError("dissimilarity matrix is not symmetric");
      if (!(v >= 0.0 && v <= 2.0)) throw ContractError("dissimilarity entry outside [0, 2]");
    }
  }
}

std::vector<double> DissimilarityMatrix::upper_triangle() const {
  const Eigen::Index n = values_.rows();
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) out.push_back(values_(i, j));
  }
  return out;
}

DissimilarityMatrix dissimilarity_matrix(const Eigen::MatrixXd& reps, unsigned threads) {
  const Eigen::Index n = reps.rows();
  if (n < 2) throw ContractError("dissimilarity_matrix needs at least 2 rows");
  Eigen::MatrixXd unit = reps;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double norm = reps.row(i).norm();
    if (norm == 0.0) throw DataError("row " + std::to_string(i) + " has zero norm; cosine distance undefined");
    unit.row(i) /= norm;
  }
  Eigen::MatrixXd values = Eigen::MatrixXd::Zero(n, n);
  parallel_for(static_cast<std::size_t>(n), threads, [&](std::size_t ii) {
    const auto i = static_cast<Eigen::Index>(ii);
    for (Eigen::Index j = i + 1; j < n; ++j) {
      values(i, j) = std::clamp(1.0 - unit.row(i).dot(unit.row(j)), 0.0, 2.0);
    }
  });
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) values(j, i) = values(i, j);
  }
  return DissimilarityMatrix(std::move(values));
}

std::vector<double> fractional_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ContractError("spearman: length mismatch");
  if (x.size() < 2) throw ContractError("spearman: need at least 2 values");
  const auto rx = fractional_ranks(x);
  const auto ry = fractional_ranks(y);
  const double n = static_cast<double>(rx.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    const double dx = rx[i] - mx;
    const double dy = ry[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw DataError("spearman: correlation undefined for a constant vector");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

Eigen::MatrixXd sentence_matrix(const ActivationDump& dump, std::size_t layer) {
  Eigen::MatrixXd reps(static_cast<Eigen::Index>(dump.sentences.size()), dump.hidden_dim);
  for (std::size_t s = 0; s < dump.sentences.size(); ++s) {
    reps.row(static_cast<Eigen::Index>(s)) = sentence_representation(dump, s, layer).transpose();
  }
  return reps;
}

void check_aligned(const ActivationDump& a, const ActivationDump& b) {
  const std::size_t n = std::min(a.sentences.size(), b.sentences.size());
  for (std::size_t s = 0; s < n; ++s) {
    if (a.sentences[s].words != b.sentences[s].words) {
      throw AlignmentError("dumps diverge at sentence " + std::to_string(s));
    }
  }
  if (a.sentences.size() != b.sentences.size()) {
    throw AlignmentError("dumps hold " + std::to_string(a.sentences.size()) + " and " +
                         std::to_string(b.sentences.size()) + " sentences; first unmatched is sentence " +
                         std::to_string(n));
  }
}

double rsa_score(const ActivationDump& a, const ActivationDump& b, std::size_t layer, unsigned threads) {
  check_aligned(a, b);
  if (layer >= a.num_layers || layer >= b.num_layers) {
    throw ContractError("layer " + std::to_string(layer) + " not present in both dumps");
  }
  const auto ua = dissimilarity_matrix(sentence_matrix(a, layer), threads).upper_triangle();
  const auto ub = dissimilarity_matrix(sentence_matrix(b, layer), threads).upper_triangle();
  return spearman(ua, ub);
}

std::vector<LayerScore> rsa_profile(const ActivationDump& a, const ActivationDump& b, unsigned threads) {
  if (a.num_layers != b.num_layers) {
    throw ContractError("dumps have " + std::to_string(a.num_layers) + " and " + std::to_string(b.num_layers) +
                        " layers");
  }
  std::vector<LayerScore> out;
  for (std::size_t l = 0; l < a.num_layers; ++l) out.push_back({l, rsa_score(a, b, l, threads)});
  return out;
}

}  // namespace privlens
