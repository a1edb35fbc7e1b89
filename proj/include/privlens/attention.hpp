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

#ifndef PRIVLENS_ATTENTION_HPP
#define PRIVLENS_ATTENTION_HPP

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "privlens/activation_io.hpp"

namespace privlens {

/// Word-level attention from a subword map: columns of a word's subwords are
/// summed (attention drawn to the word), then rows are averaged (attention
/// stemming from the word). Rows of the result stay stochastic.
Eigen::MatrixXd word_align_attention(const ActivationDump& dump, std::size_t sentence, std::size_t layer,
                                     std::size_t head);

/// Same reassembly on a bare T x T map and its word spans.
Eigen::MatrixXd word_align_attention(const Eigen::MatrixXd& subword_map, std::span<const Span> word_spans);

/// Jensen-Shannon divergence, natural log, bounded by ln 2. Inputs are
/// renormalized; negative entries throw ContractError.
double js_divergence(std::span<const double> p, std::span<const double> q);

enum class HeadAggregation {
  Token,     // mean over every word position of the corpus
  Sentence,  // mean over sentences of the per-sentence mean
};

/// Pairwise head distances; head (layer, h) has flat index layer * H + h.
class HeadDistanceMatrix {
 public:
  /// Throws ContractError unless symmetric, zero-diagonal and within [0, ln 2].
  HeadDistanceMatrix(Eigen::MatrixXd values, std::size_t num_heads, std::size_t corpus_tokens);

  const Eigen::MatrixXd& values() const noexcept { return values_; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(values_.rows()); }
  std::size_t heads_per_layer() const noexcept { return num_heads_; }
  std::size_t corpus_tokens() const noexcept { return corpus_tokens_; }

 private:
  Eigen::MatrixXd values_;
  std::size_t num_heads_;
  std::size_t corpus_tokens_;
};

/// Sentences are processed independently (optionally in parallel) and reduced
/// in sentence order, so the result does not depend on `threads`.
HeadDistanceMatrix head_distance_matrix(const ActivationDump& dump,
                                        HeadAggregation aggregation = HeadAggregation::Token,
                                        unsigned threads = 1);

struct MdsConfig {
  std::size_t out_dim = 2;
  double tolerance = 1e-10;  // off-diagonal Frobenius norm
  std::size_t max_sweeps = 100;
};

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Eigenvalues are returned in descending order with matching eigenvector columns.
struct SymmetricEigen {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
  std::size_t sweeps = 0;
};
SymmetricEigen jacobi_eigen(const Eigen::MatrixXd& symmetric, double tolerance = 1e-10, std::size_t max_sweeps = 100);

/// Classical MDS: top eigenvectors of -1/2 J D^2 J scaled by sqrt(max(lambda, 0)).
/// Each coordinate column is signed so its largest-magnitude entry is positive.
/// `distances` must be square, symmetric, nonnegative with zero diagonal.
Eigen::MatrixXd classical_mds(const Eigen::MatrixXd& distances, const MdsConfig& config = {});
Eigen::MatrixXd classical_mds(const HeadDistanceMatrix& distances, const MdsConfig& config = {});

/// Scatter plot of 2-D head coordinates colored by layer.
std::string render_svg(const Eigen::MatrixXd& coords, std::size_t heads_per_layer);

}  // namespace privlens

#endif  // PRIVLENS_ATTENTION_HPP
