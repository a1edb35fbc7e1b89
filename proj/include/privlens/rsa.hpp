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

#ifndef PRIVLENS_RSA_HPP
#define PRIVLENS_RSA_HPP

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "privlens/activation_io.hpp"

namespace privlens {

/// Symmetric n x n cosine-distance matrix with zero diagonal, entries in [0, 2].
class DissimilarityMatrix {
 public:
  /// Throws ContractError if the invariants do not hold.
  explicit DissimilarityMatrix(Eigen::MatrixXd values);

  std::size_t size() const noexcept { return static_cast<std::size_t>(values_.rows()); }
  double operator()(std::size_t i, std::size_t j) const {
    return values_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
  const Eigen::MatrixXd& values() const noexcept { return values_; }

  /// Row-major strict upper triangle, n(n-1)/2 entries.
  std::vector<double> upper_triangle() const;

 private:
  Eigen::MatrixXd values_;
};

/// Entry (i, j) = 1 - cos(reps_i, reps_j). Requires N >= 2 and no zero rows.
DissimilarityMatrix dissimilarity_matrix(const Eigen::MatrixXd& reps, unsigned threads = 1);

/// Fractional (average) ranks, 1-based.
std::vector<double> fractional_ranks(std::span<const double> x);

/// Pearson correlation of fractional ranks. Throws DataError on a constant input.
double spearman(std::span<const double> x, std::span<const double> y);

/// N x d matrix of mean-pooled sentence representations at `layer`.
Eigen::MatrixXd sentence_matrix(const ActivationDump& dump, std::size_t layer);

/// Throws AlignmentError naming the first sentence whose words differ.
void check_aligned(const ActivationDump& a, const ActivationDump& b);

double rsa_score(const ActivationDump& a, const ActivationDump& b, std::size_t layer, unsigned threads = 1);

struct LayerScore {
  std::size_t layer = 0;
  double rho = 0.0;
};

/// rsa_score for each layer 0..L-1. Both dumps must have the same layer count.
std::vector<LayerScore> rsa_profile(const ActivationDump& a, const ActivationDump& b, unsigned threads = 1);

}  // namespace privlens

#endif  // PRIVLENS_RSA_HPP
