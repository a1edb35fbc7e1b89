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

#include <doctest.h>

#include <bit>
#include <cstring>

#include <boost/random/uniform_int_distribution.hpp>

#include "privlens/activation_io.hpp"
#include "privlens/errors.hpp"
#include "synthetic.hpp"

using namespace privlens;
using privlens::testing::read_text;
using privlens::testing::temp_path;
using privlens::testing::write_text;

namespace {

// Little-endian byte builder, independent of the library writer.
struct Bytes {
  std::string data;
  Bytes& u16(std::uint16_t v) {
    data.push_back(static_cast<char>(v & 0xFF));
    data.push_back(static_cast<char>(v >> 8));
    return *this;
  }
  Bytes& u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) data.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    return *this;
  }
  Bytes& f32(float f) { return u32(std::bit_cast<std::uint32_t>(f)); }
  Bytes& str(const std::string& s) {
    u16(static_cast<std::uint16_t>(s.size()));
    data += s;
    return *this;
  }
  Bytes& raw(const std::string& s) {
    data += s;
    return *this;
  }
};

ActivationDump small_dump() {
  ActivationDump dump;
  dump.num_layers = 2;
  dump.hidden_dim = 4;
  SentenceRecord rec;
  rec.subword_tokens = {"un", "##believ", "##able"};
  rec.words = {"unbelievable"};
  rec.word_spans = {{0, 3}};
  for (int i = 0; i < 24; ++i) rec.activations.push_back(0.25f * static_cast<float>(i) - 3.0f);
  dump.sentences.push_back(rec);
  return dump;
}

template <class F>
std::string expect_data_error(F&& f) {
  try {
    f();
  } catch (const DataError& e) {
    return e.what();
  }
  FAIL("expected DataError");
  return {};
}

}  // namespace

TEST_CASE("writer emits the documented little-endian layout") {
  const auto path = temp_path("layout.actv");
  write_dump(small_dump(), path);

  Bytes expected;
  expected.raw("ACTV").u32(1).u32(2).u32(4).u32(0).u32(1);
  expected.u32(3).u32(1).str("un").str("##believ").str("##able").str("unbelievable").u32(0).u32(3);
  for (int i = 0; i < 24; ++i) expected.f32(0.25f * static_cast<float>(i) - 3.0f);
  CHECK(read_text(path) == expected.data);
}

TEST_CASE("hand-built bytes decode to the expected dump") {
  Bytes b;
  b.raw("ACTV").u32(1).u32(1).u32(2).u32(1).u32(1);
  b.u32(2).u32(2).str("a").str("b").str("a").str("b").u32(0).u32(1).u32(1).u32(2);
  b.f32(1).f32(2).f32(3).f32(4);
  b.f32(0.25f).f32(0.75f).f32(1.0f).f32(0.0f);
  const auto path = temp_path("hand.actv");
  write_text(path, b.data);

  const auto dump = read_dump(path);
  CHECK(dump.num_layers == 1);
  CHECK(dump.hidden_dim == 2);
  CHECK(dump.num_heads == 1);
  REQUIRE(dump.sentences.size() == 1);
  const auto plane = dump.activation_plane(0, 0);
  CHECK(plane(1, 0) == 3.0f);
  const auto att = dump.attention_map(0, 0, 0);
  CHECK(att(0, 1) == 0.75f);
  CHECK(att(1, 0) == 1.0f);
}

TEST_CASE("round-trip of a small dump is bit-identical") {
  const auto path = temp_path("small.actv");
  const auto dump = small_dump();
  write_dump(dump, path);
  CHECK(read_dump(path) == dump);
}

TEST_CASE("randomized dumps round-trip bit-exactly") {
  Engine rng = privlens::StreamKey(77).engine();
  const auto a = temp_path("rt-a.actv");
  const auto b = temp_path("rt-b.actv");
  for (int i = 0; i < 150; ++i) {
    const auto dump = privlens::testing::random_dump(rng);
    write_dump(dump, a);
    const auto back = read_dump(a);
    REQUIRE(back == dump);
    for (std::size_t s = 0; s < dump.sentences.size(); ++s) {
      const auto& x = dump.sentences[s].activations;
      const auto& y = back.sentences[s].activations;
      CHECK(std::memcmp(x.data(), y.data(), x.size() * sizeof(float)) == 0);
    }
    write_dump(back, b);
    CHECK(read_text(a) == read_text(b));
  }
}

TEST_CASE("bad magic and version are format errors with offsets") {
  const auto path = temp_path("magic.actv");
  write_text(path, Bytes().raw("XXXX").u32(1).u32(1).u32(1).u32(0).u32(0).data);
  try {
    (void)read_dump(path);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.location() == 0);
  }

  write_text(path, Bytes().raw("ACTV").u32(2).u32(1).u32(1).u32(0).u32(0).data);
  try {
    (void)read_dump(path);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.location() == 4);
  }

  CHECK_THROWS_AS((void)read_dump(temp_path("does-not-exist.actv")), FormatError);
}

TEST_CASE("every truncation and trailing garbage are detected") {
  const auto path = temp_path("trunc.actv");
  const auto bad = temp_path("trunc-bad.actv");
  auto dump = small_dump();
  dump.num_heads = 1;
  dump.sentences[0].attentions.assign(2 * 9, 0.25f);
  for (std::size_t row = 0; row < 6; ++row) dump.sentences[0].attentions[row * 3] = 0.5f;
  dump.sentences.push_back(dump.sentences[0]);
  write_dump(dump, path);
  const std::string bytes = read_text(path);
  for (std::size_t n = 0; n < bytes.size(); ++n) {
    write_text(bad, bytes.substr(0, n));
    CHECK_THROWS_AS((void)read_dump(bad), FormatError);
  }
  write_text(bad, bytes + "x");
  CHECK_THROWS_AS((void)read_dump(bad), FormatError);
}

TEST_CASE("spans that skip a subword are rejected naming the sentence") {
  Bytes b;
  b.raw("ACTV").u32(1).u32(1).u32(1).u32(0).u32(2);
  b.u32(1).u32(1).str("x").str("x").u32(0).u32(1).f32(0.5f);
  b.u32(3).u32(2).str("a").str("b").str("c").str("ab").str("c").u32(0).u32(1).u32(1).u32(2);
  b.f32(1).f32(2).f32(3);
  const auto path = temp_path("gap.actv");
  write_text(path, b.data);
  const auto what = expect_data_error([&] { (void)read_dump(path); });
  CHECK(what.find("sentence 1") != std::string::npos);
  CHECK(what.find("subword 2") != std::string::npos);
}

TEST_CASE("validate_dump invariants") {
  auto base = small_dump();
  validate_dump(base);

  auto d = base;
  d.sentences[0].activations.pop_back();
  CHECK(expect_data_error([&] { validate_dump(d); }).find("sentence 0") != std::string::npos);

  d = base;
  d.sentences[0].activations[3] = std::numeric_limits<float>::infinity();
  CHECK_THROWS_AS(validate_dump(d), DataError);

  d = base;
  d.sentences[0].word_spans = {{0, 2}};
  CHECK_THROWS_AS(validate_dump(d), DataError);

  d = base;
  d.sentences[0].words = {"un", "believable"};
  d.sentences[0].word_spans = {{0, 1}, {1, 1}};
  CHECK_THROWS_AS(validate_dump(d), DataError);

  d = base;
  d.sentences[0].words.push_back("extra");
  CHECK_THROWS_AS(validate_dump(d), DataError);

  d = base;
  d.num_heads = 1;
  d.sentences[0].attentions.assign(2 * 9, 1.0f / 3.0f);
  validate_dump(d);
  d.sentences[0].attentions[0] = 0.5f;
  CHECK(expect_data_error([&] { validate_dump(d); }).find("sums to") != std::string::npos);

  CHECK_THROWS_AS(write_dump(d, temp_path("invalid.actv")), ContractError);
}

TEST_CASE("activation and attention views are bounds-checked") {
  const auto dump = small_dump();
  CHECK_THROWS_AS((void)dump.activation_plane(0, 2), ContractError);
  CHECK_THROWS_AS((void)dump.attention_map(0, 0, 0), ContractError);
}

TEST_CASE("pool_subwords examples") {
  ActivationDump dump;
  dump.num_layers = 1;
  dump.hidden_dim = 2;
  SentenceRecord rec;
  rec.subword_tokens = {"a", "b", "c"};
  rec.words = {"ab", "c"};
  rec.word_spans = {{0, 2}, {2, 3}};
  rec.activations = {1, 2, 3, 4, 5, 7};
  dump.sentences.push_back(rec);
  const Matrix pooled = pool_subwords(dump, 0, 0);
  Matrix expected(2, 2);
  expected << 2, 3, 5, 7;
  CHECK(pooled == expected);

  dump.hidden_dim = 4;
  dump.sentences[0].subword_tokens = {"a", "b"};
  dump.sentences[0].words = {"ab"};
  dump.sentences[0].word_spans = {{0, 2}};
  dump.sentences[0].activations = {1, 0, 0, 0, 0, 1, 0, 0};
  CHECK(pool_subwords(dump, 0, 0).row(0) == Eigen::RowVector4d(0.5, 0.5, 0, 0));

  Engine rng(3);
  const auto g = privlens::testing::gaussian_dump(3, 2, 5, rng);
  for (std::size_t s = 0; s < 3; ++s) {
    const Matrix plane = g.activation_plane(s, 1).cast<double>();
    CHECK(pool_subwords(g, s, 1) == plane);
  }
}

TEST_CASE("pool_sentence examples") {
  Matrix one(1, 3);
  one << 1, -2, 3;
  CHECK(pool_sentence(one) == one.row(0).transpose());

  Matrix opposite(2, 3);
  opposite << 1, -2, 3, -1, 2, -3;
  CHECK(pool_sentence(opposite).isZero(0.0));

  Matrix three(3, 3);
  three << 1, 2, 3, 4, 5, 6, 7, 8, 12;
  CHECK(pool_sentence(three).isApprox(Eigen::Vector3d(4, 5, 7), 1e-15));

  CHECK_THROWS_AS((void)pool_sentence(Matrix(0, 3)), ContractError);
}

TEST_CASE("tree_problem catches malformed heads") {
  CHECK(tree_problem(std::vector<std::uint32_t>{2, 0, 2}).empty());
  CHECK_FALSE(tree_problem(std::vector<std::uint32_t>{2, 3, 1}).empty());
  CHECK_FALSE(tree_problem(std::vector<std::uint32_t>{0, 0}).empty());
  CHECK_FALSE(tree_problem(std::vector<std::uint32_t>{1, 0}).empty());
  CHECK_FALSE(tree_problem(std::vector<std::uint32_t>{0, 5}).empty());
  CHECK_FALSE(tree_problem(std::vector<std::uint32_t>{0, 3, 2}).empty());
}

TEST_CASE("tree_problem agrees with a head-chasing oracle on random head vectors") {
  Engine rng(8);
  boost::random::uniform_int_distribution<std::uint32_t> len(1, 7);
  for (int round = 0; round < 3000; ++round) {
    const std::uint32_t n = len(rng);
    boost::random::uniform_int_distribution<std::uint32_t> head(0, n);
    std::vector<std::uint32_t> heads(n);
    for (auto& h : heads) h = head(rng);

    // Oracle: every word reaches a root within n steps, exactly one root.
    bool ok = std::count(heads.begin(), heads.end(), 0u) == 1;
    for (std::uint32_t i = 0; ok && i < n; ++i) {
      std::uint32_t node = i + 1;
      std::uint32_t steps = 0;
      while (node != 0 && steps <= n) {
        node = heads[node - 1];
        ++steps;
      }
      ok = node == 0;
    }
    CHECK(tree_problem(heads).empty() == ok);
  }
}

TEST_CASE("tree helpers") {
  ParseTree t;
  t.words = {"a", "b", "c", "d"};
  t.heads = {2, 0, 2, 3};
  t.upos = {"X", "X", "X", "X"};
  CHECK(t.root() == 1);
  CHECK(tree_depths(t) == std::vector<int>{1, 0, 1, 2});
  const auto d = tree_distances(t);
  CHECK(d[0][3] == 3);
  CHECK(d[3][0] == 3);
  CHECK(d[2][2] == 0);
  CHECK(d[0][2] == 2);
  using E = std::pair<std::size_t, std::size_t>;
  CHECK(tree_edges(t) == std::vector<E>{{0, 1}, {1, 2}, {2, 3}});
}

TEST_CASE("CoNLL-U basics") {
  const std::string text =
      "# sent_id = 1\n"
      "1\tthe\tthe\tDET\t_\t_\t2\tdet\t_\t_\n"
      "2\tdog\tdog\tNOUN\t_\t_\t0\troot\t_\t_\n"
      "3\tran\trun\tVERB\t_\t_\t2\tdep\t_\t_\n"
      "\n"
      "1-2\tdon't\t_\t_\t_\t_\t_\t_\t_\t_\n"
      "1\tdo\tdo\tAUX\t_\t_\t0\troot\t_\t_\n"
      "2\tn't\tnot\tPART\t_\t_\t1\tadvmod\t_\t_\n"
      "\n"
      "1\tx\tx\tX\t_\t_\t2\t_\t_\t_\n"
      "2\ty\ty\tX\t_\t_\t3\t_\t_\t_\n"
      "3\tz\tz\tX\t_\t_\t1\t_\t_\t_\n";
  const auto result = parse_conllu(text);
  REQUIRE(result.trees.size() == 2);
  CHECK(result.trees[0].root() == 1);
  CHECK(result.trees[0].heads == std::vector<std::uint32_t>{2, 0, 2});
  CHECK(result.trees[0].upos[1] == "NOUN");
  CHECK(result.trees[1].words == std::vector<std::string>{"do", "n't"});
  CHECK(result.skipped == 1);
  REQUIRE(result.warnings.size() == 1);
  CHECK(result.warnings[0].find("line 10") != std::string::npos);
}

TEST_CASE("CoNLL-U official examples give hand-computed depths") {
  const std::string text =
      "# text = They buy and sell books.\n"
      "1\tThey\tthey\tPRON\tPRP\tCase=Nom|Number=Plur\t2\tnsubj\t2:nsubj|4:nsubj\t_\n"
      "2\tbuy\tbuy\tVERB\tVBP\tNumber=Plur|Person=3|Tense=Pres\t0\troot\t0:root\t_\n"
      "3\tand\tand\tCCONJ\tCC\t_\t4\tcc\t4:cc\t_\n"
      "4\tsell\tsell\tVERB\tVBP\tNumber=Plur|Person=3|Tense=Pres\t2\tconj\t0:root|2:conj\t_\n"
      "5\tbooks\tbook\tNOUN\tNNS\tNumber=Plur\t2\tobj\t2:obj|4:obj\tSpaceAfter=No\n"
      "6\t.\t.\tPUNCT\t.\t_\t2\tpunct\t2:punct\t_\n"
      "\n"
      "1-2\tvámonos\t_\t_\t_\t_\t_\t_\t_\t_\n"
      "1\tvamos\tir\tVERB\t_\t_\t0\troot\t_\t_\n"
      "2\tnos\tnosotros\tPRON\t_\t_\t1\tobj\t_\t_\n"
      "3-4\tal\t_\t_\t_\t_\t_\t_\t_\t_\n"
      "3\ta\ta\tADP\t_\t_\t5\tcase\t_\t_\n"
      "4\tel\tel\tDET\t_\t_\t5\tdet\t_\t_\n"
      "5\tmar\tmar\tNOUN\t_\t_\t1\tobl\t_\t_\n"
      "\n"
      "1\tSue\tSue\tPROPN\t_\t_\t2\tnsubj\t_\t_\n"
      "2\tlikes\tlike\tVERB\t_\t_\t0\troot\t_\t_\n"
      "3\tcoffee\tcoffee\tNOUN\t_\t_\t2\tobj\t_\t_\n"
      "4\tand\tand\tCCONJ\t_\t_\t5\tcc\t_\t_\n"
      "5\tBill\tBill\tPROPN\t_\t_\t2\tconj\t_\t_\n"
      "5.1\tlikes\tlike\tVERB\t_\t_\t_\t_\t5:conj\t_\n"
      "6\ttea\ttea\tNOUN\t_\t_\t5\torphan\t_\t_\n"
      "\n";
  const auto path = temp_path("official.conllu");
  write_text(path, text);
  const auto result = read_conllu(path);
  REQUIRE(result.trees.size() == 3);
  CHECK(result.skipped == 0);
  CHECK(tree_depths(result.trees[0]) == std::vector<int>{1, 0, 2, 1, 1, 1});
  CHECK(result.trees[0].upos[5] == "PUNCT");
  CHECK(tree_depths(result.trees[1]) == std::vector<int>{0, 1, 2, 2, 1});
  CHECK(tree_depths(result.trees[2]) == std::vector<int>{1, 0, 1, 2, 1, 2});
  CHECK_THROWS_AS((void)read_conllu(temp_path("no-such.conllu")), FormatError);
}

TEST_CASE("CoNLL-U malformed lines skip only their sentence") {
  const std::string text =
      "1\ta\ta\tX\t_\t_\t0\n"
      "3\tb\tb\tX\t_\t_\t1\n"
      "\n"
      "1\tonly\tonly\tX\n"
      "\n"
      "1\tgood\tgood\tX\t_\t_\t0\t_\t_\t_\r\n";
  const auto result = parse_conllu(text);
  CHECK(result.skipped == 2);
  REQUIRE(result.trees.size() == 1);
  CHECK(result.trees[0].words[0] == "good");
}

TEST_CASE("span task parsing") {
  const auto path = temp_path("spans.jsonl");
  write_text(path,
             "{\"sentence_index\":0,\"span1\":[0,1],\"label\":\"NOUN\"}\n"
             "\n"
             "{\"sentence_index\":1,\"span1\":[0,1],\"span2\":[2,4],\"label\":\"nsubj\"}\n");
  const auto examples = read_span_tasks(path);
  REQUIRE(examples.size() == 2);
  CHECK(examples[0].label == "NOUN");
  CHECK_FALSE(examples[0].span2.has_value());
  CHECK(examples[1].sentence_index == 1);
  CHECK(examples[1].span2 == Span{2, 4});

  const std::vector<std::size_t> counts = {3, 4};
  CHECK(read_span_tasks(path, counts).size() == 2);
  const std::vector<std::size_t> short_counts = {3, 3};
  CHECK_THROWS_AS((void)read_span_tasks(path, short_counts), FormatError);

  auto expect_line_error = [](const std::string& body, const std::string& needle, std::int64_t line) {
    const auto p = temp_path("bad-spans.jsonl");
    write_text(p, body);
    try {
      (void)read_span_tasks(p);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find(needle) != std::string::npos);
      CHECK(e.location() == line);
    }
  };
  expect_line_error("{\"sentence_index\":0,\"span1\":[0,1],\"label\":\"a\"}\n"
                    "{\"sentence_index\":0,\"span1\":[0,1],\"span2\":[4,2],\"label\":\"b\"}\n",
                    "span must satisfy u<v", 2);
  expect_line_error("{\"sentence_index\":0,\"span1\":[2,2],\"label\":\"a\"}\n", "span must satisfy i<j", 1);
  expect_line_error("not json\n", "invalid JSON", 1);
  expect_line_error("{\"sentence_index\":0,\"label\":\"a\"}\n", "span1", 1);
}
