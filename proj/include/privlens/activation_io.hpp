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

#ifndef PRIVLENS_ACTIVATION_IO_HPP
#define PRIVLENS_ACTIVATION_IO_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace privlens {

using Matrix = Eigen::MatrixXd;
using FloatPlane = Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

/// End-exclusive index range [start, end).
struct Span {
  std::uint32_t start = 0;
  std::uint32_t end = 0;

  std::uint32_t size() const noexcept { return end - start; }
  friend bool operator==(const Span&, const Span&) = default;
};

/// One sentence of a dump.
///
/// activations is laid out [layer][token][dim]; attentions [layer][head][from][to].
/// word_spans partition the subword positions [0, T) in order.
struct SentenceRecord {
  std::vector<std::string> subword_tokens;
  std::vector<std::string> words;
  std::vector<Span> word_spans;
  std::vector<float> activations;
  std::vector<float> attentions;

  std::size_t num_tokens() const noexcept { return subword_tokens.size(); }
  std::size_t num_words() const noexcept { return words.size(); }

  friend bool operator==(const SentenceRecord&, const SentenceRecord&) = default;
};

/// Per-layer activations (and optionally attention maps) for a corpus.
/// Layer 0 is the lexical embedding layer.
struct ActivationDump {
  std::uint32_t num_layers = 0;
  std::uint32_t hidden_dim = 0;
  std::uint32_t num_heads = 0;
  std::vector<SentenceRecord> sentences;

  /// T x d view of one activation plane.
  FloatPlane activation_plane(std::size_t sentence, std::size_t layer) const;
  /// T x T view of one attention map.
  FloatPlane attention_map(std::size_t sentence, std::size_t layer, std::size_t head) const;

  friend bool operator==(const ActivationDump&, const ActivationDump&) = default;
};

/// Checks every dump invariant; throws DataError naming the offending sentence.
void validate_dump(const ActivationDump& dump);

/// Little-endian ACTV v1 container. write validates first (ContractError on violation).
void write_dump(const ActivationDump& dump, const std::filesystem::path& path);
/// Throws FormatError (with byte offset) on bad magic, version or truncation,
/// and DataError when the decoded dump violates an invariant.
ActivationDump read_dump(const std::filesystem::path& path);

/// A dependency tree. heads are 1-based with 0 marking the root.
struct ParseTree {
  std::vector<std::string> words;
  std::vector<std::uint32_t> heads;
  std::vector<std::string> upos;

  std::size_t size() const noexcept { return words.size(); }
  /// Index (0-based) of the root word.
  std::size_t root() const;
};

/// Empty string when heads form a single rooted tree, otherwise a reason.
std::string tree_problem(std::span<const std::uint32_t> heads);

/// Edge count from each word to the root.
std::vector<int> tree_depths(const ParseTree& tree);
/// All-pairs path lengths, n x n.
std::vector<std::vector<int>> tree_distances(const ParseTree& tree);
/// Undirected gold edges as (min, max) 0-based pairs, sorted.
std::vector<std::pair<std::size_t, std::size_t>> tree_edges(const ParseTree& tree);

struct ConlluResult {
  std::vector<ParseTree> trees;
  /// Sentence blocks dropped for malformed heads.
  std::size_t skipped = 0;
  std::vector<std::string> warnings;
};

/// Reads CoNLL-U. Comments, multiword ranges ("1-2") and empty nodes ("1.1")
/// are ignored; sentences whose heads do not form a tree are skipped.
ConlluResult read_conllu(const std::filesystem::path& path);
ConlluResult parse_conllu(const std::string& text);

/// Labeled span(s) over the words of one dump sentence.
struct SpanExample {
  std::size_t sentence_index = 0;
  Span span1;
  std::optional<Span> span2;
  std::string label;
};

/// JSON lines: {"sentence_index":..,"span1":[i,j],"span2":[u,v]?,"label":".."}.
/// When word counts are given, spans are range-checked against them.
/// Errors are FormatError carrying the 1-based line number.
std::vector<SpanExample> read_span_tasks(const std::filesystem::path& path,
                                         std::span<const std::size_t> sentence_word_counts = {});

/// Word counts per sentence, for range-checking span tasks against a dump.
std::vector<std::size_t> word_counts(const ActivationDump& dump);

/// W x d matrix: row w is the mean of the activation rows in word_spans[w].
Matrix pool_subwords(const ActivationDump& dump, std::size_t sentence, std::size_t layer);

/// Column-wise mean of a W x d matrix.
Eigen::VectorXd pool_sentence(const Matrix& word_reps);

/// pool_sentence(pool_subwords(...)).
Eigen::VectorXd sentence_representation(const ActivationDump& dump, std::size_t sentence,
                                        std::size_t layer);

}  // namespace privlens

#endif  // PRIVLENS_ACTIVATION_IO_HPP
