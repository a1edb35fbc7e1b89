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

#include "privlens/embedding_store.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>

#include "privlens/errors.hpp"

namespace privlens {

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

bool parse_integer(std::string_view s, std::size_t& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

bool parse_double(std::string_view s, double& out) {
  // strtod accepts forms from_chars<double> rejects on older libstdc++ (leading '+').
  std::string buf(s);
  char* end = nullptr;
  out = std::strtod(buf.c_str(), &end);
  return end == buf.c_str() + buf.size() && !buf.empty();
}

}  // namespace

EmbeddingSpace::EmbeddingSpace(std::vector<std::string> vocab, RowMatrix vectors,
                               std::size_t skipped_duplicates)
    : vocab_(std::move(vocab)), vectors_(std::move(vectors)), skipped_duplicates_(skipped_duplicates) {
  if (static_cast<std::size_t>(vectors_.rows()) != vocab_.size()) {
    throw ContractError("embedding space: vocabulary size " + std::to_string(vocab_.size()) +
                        " does not match row count " + std::to_string(vectors_.rows()));
  }
  if (!vectors_.allFinite()) throw ContractError("embedding space: non-finite vector entry");
  index_.reserve(vocab_.size());
  for (std::size_t i = 0; i < vocab_.size(); ++i) {
    if (!index_.emplace(vocab_[i], i).second) {
      throw ContractError("embedding space: duplicate word '" + vocab_[i] + "'");
    }
  }
}

std::optional<std::size_t> EmbeddingSpace::lookup(std::string_view word) const {
  auto it = index_.find(std::string(word));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::string fold_case(std::string_view word) {
  std::string out(word);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

EmbeddingSpace load_embeddings(const std::filesystem::path& path, bool lowercase) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open embedding file '" + path.string() + "'");

  std::vector<std::string> vocab;
  std::vector<double> values;
  std::unordered_map<std::string, std::size_t> seen;
  std::size_t dim = 0;
  std::size_t skipped = 0;
  std::optional<std::size_t> header_dim;

  std::string line;
  std::int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto tokens = split_ws(line);
    if (tokens.empty()) continue;

    if (line_no == 1 && tokens.size() == 2) {
      std::size_t v = 0, d = 0;
      if (parse_integer(tokens[0], v) && parse_integer(tokens[1], d)) {
        header_dim = d;
        continue;
      }
    }
    if (tokens.size() < 2) {
      throw FormatError("embedding line " + std::to_string(line_no) + ": no vector values", line_no);
    }
    const std::size_t row_dim = tokens.size() - 1;
    if (dim == 0) {
      dim = row_dim;
      if (header_dim && *header_dim != dim) {
        throw FormatError("embedding line " + std::to_string(line_no) + ": header declares dim " +
                              std::to_string(*header_dim) + " but row has " + std::to_string(dim),
                          line_no);
      }
    } else if (row_dim != dim) {
      throw FormatError("embedding line " + std::to_string(line_no) + ": expected " +
                            std::to_string(dim) + " values, found " + std::to_string(row_dim),
                        line_no);
    }

    std::vector<double> row(dim);
    for (std::size_t j = 0; j < dim; ++j) {
      if (!parse_double(tokens[j + 1], row[j]) || !std::isfinite(row[j])) {
        throw FormatError("embedding line " + std::to_string(line_no) + ": bad value '" +
                              std::string(tokens[j + 1]) + "'",
                          line_no);
      }
    }

    std::string word = lowercase ? fold_case(tokens[0]) : std::string(tokens[0]);
    if (seen.count(word)) {
      ++skipped;
      continue;
    }
    seen.emplace(word, vocab.size());
    vocab.push_back(std::move(word));
    values.insert(values.end(), row.begin(), row.end());
  }
  if (vocab.empty()) throw FormatError("embedding file '" + path.string() + "' has no entries");

  RowMatrix vectors = Eigen::Map<const RowMatrix>(values.data(), static_cast<Eigen::Index>(vocab.size()),
                                                  static_cast<Eigen::Index>(dim));
  return EmbeddingSpace(std::move(vocab), std::move(vectors), skipped);
}

namespace {

void check_query(const Eigen::Ref<const Vector>& query, const EmbeddingSpace& space) {
  if (static_cast<std::size_t>(query.size()) != space.dim()) {
    throw ContractError("query has dimension " + std::to_string(query.size()) + ", space has " +
                        std::to_string(space.dim()));
  }
}

double squared_distance(const Eigen::Ref<const Vector>& query, const RowMatrix& vectors, Eigen::Index row) {
  double acc = 0.0;
  for (Eigen::Index j = 0; j < vectors.cols(); ++j) {
    const double diff = query[j] - vectors(row, j);
    acc += diff * diff;
  }
  return acc;
}

}  // namespace

std::size_t nearest_index(const Eigen::Ref<const Vector>& query, const EmbeddingSpace& space) {
  check_query(query, space);
  const RowMatrix& vectors = space.vectors();
  std::size_t best = 0;
  double best_dist = squared_distance(query, vectors, 0);
  for (Eigen::Index i = 1; i < vectors.rows(); ++i) {
    const double d = squared_distance(query, vectors, i);
    if (d < best_dist) {
      best_dist = d;
      best = static_cast<std::size_t>(i);
    }
  }
  return best;
}

const std::string& nearest_neighbor(const Eigen::Ref<const Vector>& query, const EmbeddingSpace& space) {
  return space.word(nearest_index(query, space));
}

std::vector<Neighbor> k_nearest(const Eigen::Ref<const Vector>& query, std::size_t k,
                                const EmbeddingSpace& space) {
  check_query(query, space);
  if (k < 1 || k > space.size()) {
    throw ContractError("k_nearest: k=" + std::to_string(k) + " outside [1, " +
                        std::to_string(space.size()) + "]");
  }
  std::vector<double> dist(space.size());
  for (std::size_t i = 0; i < space.size(); ++i) {
    dist[i] = squared_distance(query, space.vectors(), static_cast<Eigen::Index>(i));
  }
  std::vector<std::size_t> order(space.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      return dist[a] < dist[b] || (dist[a] == dist[b] && a < b);
                    });
  std::vector<Neighbor> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    out.push_back({space.word(order[i]), std::sqrt(dist[order[i]])});
  }
  return out;
}

}  // namespace privlens
