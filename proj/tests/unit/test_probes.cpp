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

#include <algorithm>
#include <numeric>
#include <set>

#include <boost/random/normal_distribution.hpp>

#include "privlens/errors.hpp"
#include "privlens/probes.hpp"
#include "synthetic.hpp"

using namespace privlens;
using privlens::testing::temp_path;

namespace {

Dataset blobs(std::size_t n, double separation, Engine& rng) {
  boost::random::normal_distribution<double> g;
  Dataset d;
  d.task = "blobs";
  d.num_classes = 2;
  d.features.resize(static_cast<Eigen::Index>(n), 2);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    const double center = label ? separation : -separation;
    d.features(static_cast<Eigen::Index>(i), 0) = center + g(rng);
    d.features(static_cast<Eigen::Index>(i), 1) = center + g(rng);
    d.labels.push_back(label);
  }
  return d;
}

// Index of the row of `m` equal to `v`, or -1.
Eigen::Index find_row(const Eigen::MatrixXd& m, const Eigen::RowVectorXd& v) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    if (m.row(r) == v) return r;
  }
  return -1;
}

ActivationDump sentences_of_lengths(const std::vector<std::size_t>& lengths) {
  ActivationDump dump;
  dump.num_layers = 1;
  dump.hidden_dim = 2;
  for (std::size_t s = 0; s < lengths.size(); ++s) {
    SentenceRecord rec;
    for (std::uint32_t i = 0; i < lengths[s]; ++i) {
      rec.subword_tokens.push_back("t");
      rec.words.push_back("t" + std::to_string(i));
      rec.word_spans.push_back({i, i + 1});
      rec.activations.push_back(static_cast<float>(s));
      rec.activations.push_back(1.0f);
    }
    dump.sentences.push_back(rec);
  }
  return dump;
}

}  // namespace

TEST_CASE("length bins are half-open") {
  CHECK(length_bin(10) == 0);
  CHECK(length_bin(34) == 0);
  CHECK(length_bin(35) == 1);
  CHECK(length_bin(41) == 2);
  CHECK(length_bin(46) == 3);
  CHECK(length_bin(51) == 3);
  CHECK(length_bin(52) == 4);
  CHECK(length_bin(500) == 4);
}

TEST_CASE("length task downsamples to the smallest bin") {
  std::vector<std::size_t> lengths;
  const std::size_t per_bin[] = {3, 5, 4, 6, 7};
  const std::size_t rep[] = {10, 37, 43, 48, 60};
  for (std::size_t b = 0; b < 5; ++b) {
    for (std::size_t k = 0; k < per_bin[b]; ++k) lengths.push_back(rep[b]);
  }
  const auto dump = sentences_of_lengths(lengths);
  Engine rng(1);
  const auto data = build_length_task(dump, 0, rng);
  CHECK(data.size() == 15);
  CHECK(data.num_classes == 5);
  for (int c = 0; c < 5; ++c) CHECK(std::count(data.labels.begin(), data.labels.end(), c) == 3);

  std::set<double> used;
  for (Eigen::Index i = 0; i < data.features.rows(); ++i) {
    const auto s = static_cast<std::size_t>(data.features(i, 0));
    CHECK(length_bin(lengths[s]) == data.labels[static_cast<std::size_t>(i)]);
    used.insert(data.features(i, 0));
  }
  CHECK(used.size() == 15);

  Engine again(1);
  CHECK(build_length_task(dump, 0, again).features == data.features);
}

TEST_CASE("length task reports empty bins") {
  const auto dump = sentences_of_lengths({10, 37, 37, 60});
  Engine rng(1);
  try {
    (void)build_length_task(dump, 0, rng);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("bin0:1, bin1:2, bin2:0, bin3:0, bin4:1") != std::string::npos);
  }
}

TEST_CASE("content task labels follow word membership") {
  Engine rng(2);
  const auto dump = privlens::testing::gaussian_dump(12, 2, 4, rng);
  Engine task_rng(3);
  const auto data = build_content_task(dump, 1, 2, task_rng);
  REQUIRE(data.size() == 36);
  CHECK(data.features.cols() == 8);

  for (std::size_t s = 0; s < dump.sentences.size(); ++s) {
    const Eigen::RowVectorXd sent = sentence_representation(dump, s, 1).transpose();
    for (std::size_t k = 0; k < 3; ++k) {
      const auto row = static_cast<Eigen::Index>(3 * s + k);
      CHECK(data.features.row(row).head(4) == sent);
      const Eigen::RowVectorXd word = data.features.row(row).tail(4);
      const bool in_sentence = find_row(pool_subwords(dump, s, 0), word) >= 0;
      CHECK(data.labels[static_cast<std::size_t>(row)] == (in_sentence ? 1 : 0));
      CHECK(data.labels[static_cast<std::size_t>(row)] == (k == 0 ? 1 : 0));
    }
  }

  Engine again(3);
  const auto twin = build_content_task(dump, 1, 2, again);
  CHECK(twin.features == data.features);
  CHECK(twin.labels == data.labels);

  ActivationDump single = dump;
  single.sentences.resize(1);
  CHECK_THROWS_AS((void)build_content_task(single, 1, 1, task_rng), DataError);
}

TEST_CASE("content negatives never reuse a word string from the sentence") {
  // Every sentence holds the same single word: no negative exists.
  ActivationDump dump = sentences_of_lengths({3, 3});
  for (auto& rec : dump.sentences) rec.words = {"same", "same", "same"};
  Engine rng(4);
  CHECK_THROWS_AS((void)build_content_task(dump, 0, 1, rng), DataError);
}

TEST_CASE("order task presentation and labels") {
  Engine rng(5);
  auto dump = privlens::testing::gaussian_dump(60, 2, 3, rng, 1, 9);
  dump.sentences[0].words.resize(1);
  dump.sentences[0].subword_tokens.resize(1);
  dump.sentences[0].word_spans.resize(1);
  dump.sentences[0].activations.resize(2 * 3);
  validate_dump(dump);

  Engine task_rng(6);
  const auto data = build_order_task(dump, 1, 20, task_rng);
  std::size_t usable = 0;
  for (const auto& rec : dump.sentences) usable += rec.num_words() >= 2;
  CHECK(usable < dump.sentences.size());
  CHECK(data.size() == usable * 20);
  CHECK(data.features.cols() == 9);

  std::size_t row = 0;
  for (std::size_t s = 0; s < dump.sentences.size(); ++s) {
    if (dump.sentences[s].num_words() < 2) continue;
    const Eigen::MatrixXd lexical = pool_subwords(dump, s, 0);
    for (int p = 0; p < 20; ++p, ++row) {
      const auto r = static_cast<Eigen::Index>(row);
      const Eigen::Index first = find_row(lexical, data.features.row(r).segment(3, 3));
      const Eigen::Index second = find_row(lexical, data.features.row(r).segment(6, 3));
      REQUIRE(first >= 0);
      REQUIRE(second >= 0);
      CHECK(first != second);
      CHECK(data.labels[row] == (first < second ? 0 : 1));
    }
  }
  const double swapped = std::accumulate(data.labels.begin(), data.labels.end(), 0.0) / data.size();
  CHECK(std::abs(swapped - 0.5) < 0.05);
}

TEST_CASE("edge features pool spans") {
  ActivationDump dump;
  dump.num_layers = 1;
  dump.hidden_dim = 2;
  SentenceRecord rec;
  rec.subword_tokens = {"a", "b", "c", "d"};
  rec.words = {"a", "b", "cd"};
  rec.word_spans = {{0, 1}, {1, 2}, {2, 4}};
  rec.activations = {1, 2, 3, 6, 5, 0, 7, 2};
  dump.sentences.push_back(rec);

  const std::vector<SpanExample> single = {{0, {2, 3}, std::nullopt, "X"}, {0, {0, 2}, std::nullopt, "A"}};
  const auto d1 = build_edge_features(dump, 0, single);
  CHECK(d1.class_names == std::vector<std::string>{"A", "X"});
  CHECK(d1.labels == std::vector<int>{1, 0});
  CHECK(d1.features.row(0) == Eigen::RowVector2d(6, 1));
  CHECK(d1.features.row(1) == Eigen::RowVector2d(2, 4));

  const std::vector<SpanExample> pair = {{0, {0, 1}, Span{1, 3}, "nsubj"}};
  const auto d2 = build_edge_features(dump, 0, pair);
  CHECK(d2.features.cols() == 4);
  CHECK(d2.features.row(0) == Eigen::RowVector4d(1, 2, 4.5, 3.5));

  const std::vector<SpanExample> mixed = {single[0], pair[0]};
  CHECK_THROWS_AS((void)build_edge_features(dump, 0, mixed), DataError);
  const std::vector<SpanExample> outside = {{0, {2, 4}, std::nullopt, "X"}};
  CHECK_THROWS_AS((void)build_edge_features(dump, 0, outside), DataError);
  const std::vector<SpanExample> missing = {{3, {0, 1}, std::nullopt, "X"}};
  CHECK_THROWS_AS((void)build_edge_features(dump, 0, missing), DataError);
}

TEST_CASE("split and control helpers") {
  Engine rng(7);
  const auto data = blobs(50, 1.0, rng);
  const auto [train, test] = split_dataset(data, 0.8, rng);
  CHECK(train.size() == 40);
  CHECK(test.size() == 10);
  CHECK_THROWS_AS(split_dataset(data, 1.0, rng), ContractError);

  const auto control = shuffle_labels(data, rng);
  CHECK(control.task == "blobs-control");
  CHECK(control.features == data.features);
  auto a = control.labels;
  auto b = data.labels;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  CHECK(a == b);
  CHECK(control.labels != data.labels);
}

TEST_CASE("classifier fits separable blobs and is deterministic") {
  Engine data_rng(8);
  const auto data = blobs(400, 4.0, data_rng);
  for (std::size_t hidden : {std::size_t{0}, std::size_t{256}}) {
    ClassifierConfig config;
    config.hidden_dim = hidden;
    Engine a(9);
    Engine b(9);
    const auto p1 = train_classifier(data, config, a);
    const auto p2 = train_classifier(data, config, b);
    CHECK(p1 == p2);
    CHECK(eval_classifier(p1, data).accuracy >= 0.99);
    CHECK(p1.weights.size() == (hidden ? 2u : 1u));
  }
}

TEST_CASE("shuffled labels give chance accuracy on held-out data") {
  Engine rng(10);
  const auto dump = privlens::testing::length_encoding_dump(500, 16, 0.3, rng);
  const auto data = build_length_task(dump, 1, rng);
  const auto [train, test] = split_dataset(data, 0.8, rng);

  ClassifierConfig config;
  const auto real = train_classifier(train, config, rng);
  CHECK(eval_classifier(real, test).accuracy >= 0.9);

  const auto control = shuffle_labels(data, rng);
  const auto [ctrain, ctest] = split_dataset(control, 0.8, rng);
  const auto probe = train_classifier(ctrain, config, rng);
  CHECK(std::abs(eval_classifier(probe, ctest).accuracy - 0.2) <= 0.1);
}

TEST_CASE("classifier contract checks") {
  Engine rng(11);
  Dataset one_class;
  one_class.num_classes = 2;
  one_class.features = Eigen::MatrixXd::Ones(3, 2);
  one_class.labels = {1, 1, 1};
  CHECK_THROWS_AS(train_classifier(one_class, {}, rng), ContractError);

  const auto data = blobs(20, 1.0, rng);
  ClassifierConfig zero;
  zero.epochs = 0;
  CHECK_THROWS_AS(train_classifier(data, zero, rng), ContractError);

  ClassifierConfig wild;
  wild.learning_rate = 1e300;
  auto exploding = data;
  exploding.features *= 1e300;
  CHECK_THROWS_AS(train_classifier(exploding, wild, rng), DivergenceError);

  const ClassifierProbe probe(3, 0, 2);
  CHECK_THROWS_AS((void)probe.predict(Eigen::MatrixXd::Zero(1, 2)), ContractError);
}

TEST_CASE("metrics") {
  const std::vector<int> gold = {1, 1, 1, 0, 0, 0, 0, 0, 0, 0};
  const std::vector<int> pred = {1, 1, 0, 1, 0, 0, 0, 0, 0, 0};
  const auto m = score_predictions(pred, gold, 2);
  CHECK(m.accuracy == doctest::Approx(0.8));
  CHECK(m.micro_f1 == doctest::Approx(0.8));
  CHECK(m.examples == 10);

  const auto perfect = score_predictions(gold, gold, 2);
  CHECK(perfect.accuracy == 1.0);
  CHECK(perfect.micro_f1 == 1.0);

  std::vector<int> five;
  for (int i = 0; i < 50; ++i) five.push_back(i % 5);
  const std::vector<int> constant(50, 3);
  CHECK(score_predictions(constant, five, 5).accuracy == doctest::Approx(0.2));
  CHECK_THROWS_AS((void)micro_f1(constant, gold, 2), ContractError);
}

TEST_CASE("classifier files round-trip") {
  Engine rng(12);
  const auto data = blobs(60, 2.0, rng);
  ClassifierConfig config;
  config.hidden_dim = 8;
  config.epochs = 3;
  const auto probe = train_classifier(data, config, rng);
  const auto path = temp_path("probe.prbe");
  save_classifier(probe, path);
  const auto loaded = load_classifier(path);
  CHECK(loaded.input_dim() == 2);
  CHECK(loaded.hidden_dim() == 8);
  CHECK(loaded.num_classes() == 2);
  for (std::size_t l = 0; l < probe.weights.size(); ++l) {
    CHECK(loaded.weights[l] == probe.weights[l].cast<float>().cast<double>());
    CHECK(loaded.biases[l] == probe.biases[l].cast<float>().cast<double>());
  }
  const auto again = temp_path("probe2.prbe");
  save_classifier(loaded, again);
  CHECK(privlens::testing::read_text(path) == privlens::testing::read_text(again));

  privlens::testing::write_text(again, "PRBE");
  CHECK_THROWS_AS((void)load_classifier(again), FormatError);
}
