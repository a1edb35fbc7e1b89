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

#ifndef PRIVLENS_EMBEDDING_STORE_HPP
#define PRIVLENS_EMBEDDING_STORE_HPP

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace privlens {

using Vector = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// A static word-embedding space: ordered vocabulary plus one row per word.
/// Immutable after construction; safe for concurrent reads.
class EmbeddingSpace {
 public:
  /// Throws ContractError on duplicate words, row-count mismatch or non-finite values.
  EmbeddingSpace(std::vector<std::string> vocab, RowMatrix vectors,
                 std::size_t skipped_duplicates = 0);

  std::size_t size() const noexcept { return vocab_.size(); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(vectors_.cols()); }

  const std::vector<std::string>& vocab() const noexcept { return vocab_; }
  const std::string& word(std::size_t row) const { return vocab_.at(row); }
  const RowMatrix& vectors() const noexcept { return vectors_; }
  Eigen::Ref<const Eigen::RowVectorXd> vector(std::size_t row) const { return vectors_.row(row); }

  std::optional<std::size_t> lookup(std::string_view word) const;

  /// Entries dropped while loading because the (case-folded) word was already present.
  std::size_t skipped_duplicates() const noexcept { return skipped_duplicates_; }

 private:
  std::vector<std::string> vocab_;
  RowMatrix vectors_;
  std::unordered_map<std::string, std::size_t> index_;
  std::size_t skipped_duplicates_ = 0;
};

/// Reads GloVe-style text: `word x1 x2 ... xD` per line, optional `V D` header.
/// With `lowercase`, words are ASCII case-folded and the first occurrence wins.
EmbeddingSpace load_embeddings(const std::filesystem::path& path, bool lowercase);

/// ASCII case folding used by the loader and by lowercasing privatization.
std::string fold_case(std::string_view word);

/// Row index of the Euclidean nearest vocabulary vector; ties go to the lowest index.
std::size_t nearest_index(const Eigen::Ref<const Vector>& query, const EmbeddingSpace& space);

const std::string& nearest_neighbor(const Eigen::Ref<const Vector>& query,
                                    const EmbeddingSpace& space);

struct Neighbor {
  std::string word;
  double distance = 0.0;
};

/// The k closest words, ascending by distance then vocabulary index.
std::vector<Neighbor> k_nearest(const Eigen::Ref<const Vector>& query, std::size_t k,
                                const EmbeddingSpace& space);

}  // namespace privlens

#endif  // PRIVLENS_EMBEDDING_STORE_HPP
