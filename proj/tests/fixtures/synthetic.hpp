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

// Synthetic dumps and trees for tests. Nothing here depends on a trained model.

#ifndef PRIVLENS_TESTS_SYNTHETIC_HPP
#define PRIVLENS_TESTS_SYNTHETIC_HPP

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "privlens/activation_io.hpp"
#include "privlens/random.hpp"

namespace privlens::testing {

/// Random partition of [0, t) into w contiguous spans (1 <= w <= t).
std::vector<Span> random_spans(std::size_t t, std::size_t w, Engine& rng);

/// Random row-stochastic t x t float map, rows normalized in float.
std::vector<float> random_stochastic_rows(std::size_t rows, std::size_t t, Engine& rng);

struct DumpShape {
  std::size_t max_layers = 3;
  std::size_t max_dim = 6;
  std::size_t max_heads = 2;
  std::size_t max_sentences = 4;
  std::size_t max_tokens = 8;
};

/// Dump with random shape, random finite float bit patterns, random spans and
/// (when H > 0) random row-stochastic attention.
ActivationDump random_dump(Engine& rng, const DumpShape& shape = {});

/// Uniform random recursive tree on n words.
ParseTree random_tree(std::size_t n, Engine& rng);

/// Ten-column CoNLL-U text for the given trees.
std::string to_conllu(const std::vector<ParseTree>& trees);

/// One subword per word, L layers of dimension d. Word i of a sentence gets
/// the root-path indicator vector (coordinate c is 1 iff word c's head edge
/// lies on the path from i to the root), rotated by `rotation` (d x d) and
/// perturbed by uniform noise of magnitude `noise`. Squared norms equal
/// depths and squared differences equal tree distances when noise = 0.
ActivationDump tree_coded_dump(const std::vector<ParseTree>& trees, std::size_t dim, std::size_t layers,
                               const Eigen::MatrixXd& rotation, double noise, Engine& rng);

/// Random orthogonal matrix (QR of a Gaussian matrix, sign-fixed).
Eigen::MatrixXd random_orthogonal(std::size_t n, Engine& rng);

/// Gaussian activations, one subword per word, word strings "s<i>w<j>".
ActivationDump gaussian_dump(std::size_t sentences, std::size_t layers, std::size_t dim, Engine& rng,
                             std::size_t min_words = 3, std::size_t max_words = 8, std::size_t heads = 0);

/// Sentences whose token counts cover every length bin; each token row holds
/// mixing * onehot(bin) + N(0, noise^2). Words are single subwords drawn from a
/// small vocabulary.
ActivationDump length_encoding_dump(std::size_t sentences, std::size_t dim, double noise, Engine& rng);

/// Writes `contents` to a fresh file under the test temp directory.
std::filesystem::path temp_path(const std::string& name);
void write_text(const std::filesystem::path& path, const std::string& contents);
std::string read_text(const std::filesystem::path& path);

}  // namespace privlens::testing

#endif  // PRIVLENS_TESTS_SYNTHETIC_HPP
