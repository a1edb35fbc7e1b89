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

#include "privlens/activation_io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <deque>
#include <fstream>
#include <iterator>
#include <sstream>

#include <nlohmann/json.hpp>

#include "privlens/errors.hpp"

namespace privlens {

namespace {

constexpr char kMagic[4] = {'A', 'C', 'T', 'V'};
constexpr std::uint32_t kVersion = 1;
constexpr double kRowSumTolerance = 1e-5;

std::string sentence_label(std::size_t s) { return "sentence " + std::to_string(s); }

}  // namespace

FloatPlane ActivationDump::activation_plane(std::size_t sentence, std::size_t layer) const {
  const auto& rec = sentences.at(sentence);
  if (layer >= num_layers) throw ContractError("layer " + std::to_string(layer) + " out of range");
  const auto t = static_cast<Eigen::Index>(rec.num_tokens());
  return FloatPlane(rec.activations.data() + layer * rec.num_tokens() * hidden_dim, t,
                    static_cast<Eigen::Index>(hidden_dim));
}

FloatPlane ActivationDump::attention_map(std::size_t sentence, std::size_t layer, std::size_t head) const {
  const auto& rec = sentences.at(sentence);
  if (num_heads == 0) throw ContractError("dump stores no attention");
  if (layer >= num_layers || head >= num_heads) {
    throw ContractError("attention (layer " + std::to_string(layer) + ", head " + std::to_string(head) +
                        ") out of range");
  }
  const std::size_t t = rec.num_tokens();
  const auto ti = static_cast<Eigen::Index>(t);
  return FloatPlane(rec.attentions.data() + (layer * num_heads + head) * t * t, ti, ti);
}

void validate_dump(const ActivationDump& dump) {
  for (std::size_t s = 0; s < dump.sentences.size(); ++s) {
    const auto& rec = dump.sentences[s];
    const std::size_t t = rec.num_tokens();
    if (t == 0) throw DataError(sentence_label(s) + ": no subword tokens");
    if (rec.words.size() != rec.word_spans.size()) {
      throw DataError(sentence_label(s) + ": " + std::to_string(rec.words.size()) + " words but " +
                      std::to_string(rec.word_spans.size()) + " word spans");
    }
    std::uint32_t cursor = 0;
    for (std::size_t w = 0; w < rec.word_spans.size(); ++w) {
      const Span sp = rec.word_spans[w];
      if (sp.start != cursor) {
        throw DataError(sentence_label(s) + ": word spans do not cover subword " + std::to_string(cursor) +
                        " (word " + std::to_string(w) + " starts at " + std::to_string(sp.start) + ")");
      }
      if (sp.end <= sp.start) {
        throw DataError(sentence_label(s) + ": empty or reversed span for word " + std::to_string(w));
      }
      cursor = sp.end;
    }
    if (cursor != t) {
      throw DataError(sentence_label(s) + ": word spans do not cover subword " + std::to_string(cursor) +
                      " (spans end at " + std::to_string(cursor) + ", T=" + std::to_string(t) + ")");
    }
    if (rec.activations.size() != std::size_t{dump.num_layers} * t * dump.hidden_dim) {
      throw DataError(sentence_label(s) + ": activation payload has wrong size");
    }
    if (!std::all_of(rec.activations.begin(), rec.activations.end(), [](float v) { return std::isfinite(v); })) {
      throw DataError(sentence_label(s) + ": non-finite activation");
    }
    const std::size_t att_size = std::size_t{dump.num_layers} * dump.num_heads * t * t;
    if (rec.attentions.size() != att_size) {
      throw DataError(sentence_label(s) + ": attention payload has wrong size");
    }
    for (std::size_t row = 0; row * t < att_size; ++row) {
      double sum = 0.0;
      for (std::size_t j = 0; j < t; ++j) {
        const float v = rec.attentions[row * t + j];
        if (!std::isfinite(v)) throw DataError(sentence_label(s) + ": non-finite attention");
        sum += v;
      }
      if (std::abs(sum - 1.0) > kRowSumTolerance) {
        throw DataError(sentence_label(s) + ": attention row " + std::to_string(row) + " sums to " +
                        std::to_string(sum));
      }
    }
  }
}

// ---------------------------------------------------------------------------
// ACTV binary container

namespace {

class Writer {
 public:
  explicit Writer(std::ofstream& out) : out_(out) {}

  void u16(std::uint16_t v) { raw_le(v); }
  void u32(std::uint32_t v) { raw_le(v); }
  void f32(float v) { raw_le(std::bit_cast<std::uint32_t>(v)); }
  void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }

  void str(const std::string& s) {
    if (s.size() > 0xFFFF) throw ContractError("token longer than 65535 bytes: '" + s.substr(0, 32) + "...'");
    u16(static_cast<std::uint16_t>(s.size()));
    bytes(s.data(), s.size());
  }

  void floats(const std::vector<float>& v) {
    if constexpr (std::endian::native == std::endian::little) {
      bytes(v.data(), v.size() * sizeof(float));
    } else {
      for (float f : v) f32(f);
    }
  }

 private:
  template <typename T>
  void raw_le(T v) {
    unsigned char buf[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
    bytes(buf, sizeof(T));
  }

  std::ofstream& out_;
};

class Reader {
 public:
  explicit Reader(std::vector<unsigned char> data) : data_(std::move(data)) {}

  std::size_t offset() const noexcept { return pos_; }
  bool at_end() const noexcept { return pos_ == data_.size(); }

  void need(std::size_t n, const char* what) const {
    if (data_.size() - pos_ < n) {
      throw FormatError("truncated dump: expected " + std::to_string(n) + " bytes for " + what +
                            " at byte offset " + std::to_string(pos_),
                        static_cast<std::int64_t>(pos_));
    }
  }

  std::uint16_t u16(const char* what) { return static_cast<std::uint16_t>(le(2, what)); }
  std::uint32_t u32(const char* what) { return static_cast<std::uint32_t>(le(4, what)); }

  std::string str(const char* what) {
    const std::uint16_t n = u16(what);
    need(n, what);
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  void floats(std::vector<float>& out, std::size_t count, const char* what) {
    if (count > (data_.size() - pos_) / sizeof(float)) need(count * sizeof(float), what);
    out.resize(count);
    const unsigned char* p = data_.data() + pos_;
    if constexpr (std::endian::native == std::endian::little) {
      std::memcpy(out.data(), p, count * sizeof(float));
    } else {
      for (std::size_t i = 0; i < count; ++i) {
        std::uint32_t bits = 0;
        for (std::size_t b = 0; b < 4; ++b) bits |= std::uint32_t{p[4 * i + b]} << (8 * b);
        out[i] = std::bit_cast<float>(bits);
      }
    }
    pos_ += count * sizeof(float);
  }

  void expect_magic() {
    need(4, "magic");
    if (std::memcmp(data_.data(), kMagic, 4) != 0) {
      throw FormatError("bad magic at byte offset 0: not an ACTV dump", 0);
    }
    pos_ = 4;
  }

 private:
  std::uint64_t le(std::size_t n, const char* what) {
    need(n, what);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < n; ++i) v |= std::uint64_t{data_[pos_ + i]} << (8 * i);
    pos_ += n;
    return v;
  }

  std::vector<unsigned char> data_;
  std::size_t pos_ = 0;
};

}  // namespace

void write_dump(const ActivationDump& dump, const std::filesystem::path& path) {
  try {
    validate_dump(dump);
  } catch (const DataError& e) {
    throw ContractError(std::string("refusing to write invalid dump: ") + e.what());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path.string() + "' for writing");
  Writer w(out);
  w.bytes(kMagic, 4);
  w.u32(kVersion);
  w.u32(dump.num_layers);
  w.u32(dump.hidden_dim);
  w.u32(dump.num_heads);
  w.u32(static_cast<std::uint32_t>(dump.sentences.size()));
  for (const auto& rec : dump.sentences) {
    w.u32(static_cast<std::uint32_t>(rec.num_tokens()));
    w.u32(static_cast<std::uint32_t>(rec.num_words()));
    for (const auto& s : rec.subword_tokens) w.str(s);
    for (const auto& s : rec.words) w.str(s);
    for (const auto& sp : rec.word_spans) {
      w.u32(sp.start);
      w.u32(sp.end);
    }
    w.floats(rec.activations);
    if (dump.num_heads > 0) w.floats(rec.attentions);
  }
  if (!out) throw FormatError("write to '" + path.string() + "' failed");
}

ActivationDump read_dump(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open dump '" + path.string() + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(std::move(bytes));

  r.expect_magic();
  const std::size_t version_at = r.offset();
  const std::uint32_t version = r.u32("version");
  if (version != kVersion) {
    throw FormatError("unsupported ACTV version " + std::to_string(version) + " at byte offset " +
                          std::to_string(version_at),
                      static_cast<std::int64_t>(version_at));
  }
  ActivationDump dump;
  dump.num_layers = r.u32("num_layers");
  dump.hidden_dim = r.u32("hidden_dim");
  dump.num_heads = r.u32("num_heads");
  const std::uint32_t n = r.u32("sentence count");
  for (std::uint32_t s = 0; s < n; ++s) {
    SentenceRecord rec;
    const std::uint32_t t = r.u32("token count");
    const std::uint32_t words = r.u32("word count");
    // Each string costs at least its 2-byte length prefix.
    r.need((std::size_t{t} + words) * 2, "string table");
    rec.subword_tokens.reserve(t);
    for (std::uint32_t i = 0; i < t; ++i) rec.subword_tokens.push_back(r.str("subword token"));
    rec.words.reserve(words);
    for (std::uint32_t i = 0; i < words; ++i) rec.words.push_back(r.str("word"));
    rec.word_spans.resize(words);
    for (auto& sp : rec.word_spans) {
      sp.start = r.u32("span start");
      sp.end = r.u32("span end");
    }
    r.floats(rec.activations, std::size_t{dump.num_layers} * t * dump.hidden_dim, "activations");
    if (dump.num_heads > 0) {
      r.floats(rec.attentions, std::size_t{dump.num_layers} * dump.num_heads * t * t, "attentions");
    }
    dump.sentences.push_back(std::move(rec));
  }
  if (!r.at_end()) {
    throw FormatError("trailing bytes after last sentence at byte offset " + std::to_string(r.offset()),
                      static_cast<std::int64_t>(r.offset()));
  }
  validate_dump(dump);
  return dump;
}

// ---------------------------------------------------------------------------
// Dependency trees

std::size_t ParseTree::root() const {
  for (std::size_t i = 0; i < heads.size(); ++i) {
    if (heads[i] == 0) return i;
  }
  throw DataError("parse tree has no root");
}

std::string tree_problem(std::span<const std::uint32_t> heads) {
  const std::size_t n = heads.size();
  if (n == 0) return "empty sentence";
  std::size_t roots = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (heads[i] > n) return "head " + std::to_string(heads[i]) + " of token " + std::to_string(i + 1) + " out of range";
    if (heads[i] == i + 1) return "token " + std::to_string(i + 1) + " is its own head";
    if (heads[i] == 0) ++roots;
  }
  if (roots != 1) return std::to_string(roots) + " root tokens (expected exactly 1)";
  // Every token must reach the root within n steps; otherwise it sits on a cycle.
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t node = i + 1;
    std::size_t steps = 0;
    while (node != 0 && steps <= n) {
      node = heads[node - 1];
      ++steps;
    }
    if (node != 0) return "cycle through token " + std::to_string(i + 1);
  }
  return {};
}

std::vector<int> tree_depths(const ParseTree& tree) {
  const std::size_t n = tree.size();
  std::vector<int> depth(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    int d = 0;
    std::size_t node = i + 1;
    while (tree.heads[node - 1] != 0) {
      node = tree.heads[node - 1];
      ++d;
    }
    depth[i] = d;
  }
  return depth;
}

std::vector<std::vector<int>> tree_distances(const ParseTree& tree) {
  const std::size_t n = tree.size();
  std::vector<std::vector<std::size_t>> adj(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (tree.heads[i] == 0) continue;
    adj[i].push_back(tree.heads[i] - 1);
    adj[tree.heads[i] - 1].push_back(i);
  }
  std::vector<std::vector<int>> dist(n, std::vector<int>(n, -1));
  for (std::size_t src = 0; src < n; ++src) {
    std::deque<std::size_t> queue{src};
    dist[src][src] = 0;
    while (!queue.empty()) {
      const std::size_t u = queue.front();
      queue.pop_front();
      for (std::size_t v : adj[u]) {
        if (dist[src][v] < 0) {
          dist[src][v] = dist[src][u] + 1;
          queue.push_back(v);
        }
      }
    }
  }
  return dist;
}

std::vector<std::pair<std::size_t, std::size_t>> tree_edges(const ParseTree& tree) {
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (std::size_t i = 0; i < tree.size(); ++i) {
    if (tree.heads[i] == 0) continue;
    const std::size_t h = tree.heads[i] - 1;
    edges.emplace_back(std::min(i, h), std::max(i, h));
  }
  std::sort(edges.begin(), edges.end());
  return edges;
}

// ---------------------------------------------------------------------------
// CoNLL-U

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> cols;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    cols.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return cols;
}

bool parse_u32(const std::string& s, std::uint32_t& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace

ConlluResult parse_conllu(const std::string& text) {
  ConlluResult result;
  ParseTree current;
  std::string problem;
  std::size_t block_start = 0;
  std::size_t line_no = 0;

  auto flush = [&]() {
    if (current.words.empty() && problem.empty()) return;
    if (problem.empty()) problem = tree_problem(current.heads);
    if (problem.empty()) {
      result.trees.push_back(std::move(current));
    } else {
      ++result.skipped;
      result.warnings.push_back("sentence starting at line " + std::to_string(block_start) + ": " + problem);
    }
    current = ParseTree{};
    problem.clear();
  };

  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      flush();
      continue;
    }
    if (line[0] == '#') continue;
    if (current.words.empty() && problem.empty()) block_start = line_no;
    if (!problem.empty()) continue;

    const auto cols = split_tabs(line);
    if (cols.size() < 7) {
      problem = "line " + std::to_string(line_no) + " has " + std::to_string(cols.size()) + " columns";
      continue;
    }
    const std::string& id = cols[0];
    if (id.find('-') != std::string::npos || id.find('.') != std::string::npos) continue;

    std::uint32_t index = 0;
    std::uint32_t head = 0;
    if (!parse_u32(id, index) || index != current.words.size() + 1) {
      problem = "line " + std::to_string(line_no) + ": unexpected token id '" + id + "'";
      continue;
    }
    if (!parse_u32(cols[6], head)) {
      problem = "line " + std::to_string(line_no) + ": bad head '" + cols[6] + "'";
      continue;
    }
    current.words.push_back(cols[1]);
    current.upos.push_back(cols[3]);
    current.heads.push_back(head);
  }
  flush();
  return result;
}

ConlluResult read_conllu(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open CoNLL-U file '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_conllu(buf.str());
}

// ---------------------------------------------------------------------------
// Span tasks

namespace {

Span parse_span(const nlohmann::json& j, const char* name, const char* order, std::int64_t line_no) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number_integer() || !j[1].is_number_integer()) {
    throw FormatError("line " + std::to_string(line_no) + ": " + name + " must be a pair of integers", line_no);
  }
  const auto a = j[0].get<std::int64_t>();
  const auto b = j[1].get<std::int64_t>();
  if (a < 0 || b < 0) throw FormatError("line " + std::to_string(line_no) + ": negative span index", line_no);
  if (a >= b) {
    throw FormatError("line " + std::to_string(line_no) + ": span must satisfy " + order, line_no);
  }
  return Span{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
}

}  // namespace

std::vector<SpanExample> read_span_tasks(const std::filesystem::path& path,
                                         std::span<const std::size_t> sentence_word_counts) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open span task file '" + path.string() + "'");
  std::vector<SpanExample> out;
  std::string line;
  std::int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError("line " + std::to_string(line_no) + ": invalid JSON (" + e.what() + ")", line_no);
    }
    if (!j.is_object() || !j.contains("sentence_index") || !j.contains("span1") || !j.contains("label")) {
      throw FormatError("line " + std::to_string(line_no) + ": need sentence_index, span1 and label", line_no);
    }
    if (!j["sentence_index"].is_number_integer() || j["sentence_index"].get<std::int64_t>() < 0) {
      throw FormatError("line " + std::to_string(line_no) + ": sentence_index must be a non-negative integer",
                        line_no);
    }
    if (!j["label"].is_string()) throw FormatError("line " + std::to_string(line_no) + ": label must be a string", line_no);

    SpanExample ex;
    ex.sentence_index = j["sentence_index"].get<std::size_t>();
    ex.span1 = parse_span(j["span1"], "span1", "i<j", line_no);
    if (j.contains("span2") && !j["span2"].is_null()) ex.span2 = parse_span(j["span2"], "span2", "u<v", line_no);
    ex.label = j["label"].get<std::string>();

    if (!sentence_word_counts.empty()) {
      if (ex.sentence_index >= sentence_word_counts.size()) {
        throw FormatError("line " + std::to_string(line_no) + ": sentence_index " +
                              std::to_string(ex.sentence_index) + " out of range",
                          line_no);
      }
      const std::size_t words = sentence_word_counts[ex.sentence_index];
      if (ex.span1.end > words || (ex.span2 && ex.span2->end > words)) {
        throw FormatError("line " + std::to_string(line_no) + ": span out of range for sentence with " +
                              std::to_string(words) + " words",
                          line_no);
      }
    }
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<std::size_t> word_counts(const ActivationDump& dump) {
  std::vector<std::size_t> counts;
  counts.reserve(dump.sentences.size());
  for (const auto& rec : dump.sentences) counts.push_back(rec.num_words());
  return counts;
}

// ---------------------------------------------------------------------------
// Pooling

Matrix pool_subwords(const ActivationDump& dump, std::size_t sentence, std::size_t layer) {
  const auto plane = dump.activation_plane(sentence, layer);
  const auto& spans = dump.sentences[sentence].word_spans;
  Matrix out(static_cast<Eigen::Index>(spans.size()), plane.cols());
  for (std::size_t w = 0; w < spans.size(); ++w) {
    const auto rows = plane.middleRows(spans[w].start, spans[w].size()).cast<double>();
    out.row(static_cast<Eigen::Index>(w)) = rows.colwise().sum() / static_cast<double>(spans[w].size());
  }
  return out;
}

Eigen::VectorXd pool_sentence(const Matrix& word_reps) {
  if (word_reps.rows() == 0) throw ContractError("pool_sentence: no word representations");
  return word_reps.colwise().mean().transpose();
}

Eigen::VectorXd sentence_representation(const ActivationDump& dump, std::size_t sentence, std::size_t layer) {
  return pool_sentence(pool_subwords(dump, sentence, layer));
}

}  // namespace privlens
