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

#include "privlens/probes.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include <boost/random/bernoulli_distribution.hpp>
#include <boost/random/uniform_int_distribution.hpp>
#include <boost/random/uniform_real_distribution.hpp>

#include "privlens/errors.hpp"
#include "probe_format.hpp"

namespace privlens {

// ---------------------------------------------------------------------------
// Dataset helpers

Dataset subset(const Dataset& data, std::span<const std::size_t> rows) {
  Dataset out;
  out.task = data.task;
  out.num_classes = data.num_classes;
  out.class_names = data.class_names;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), data.features.cols());
  out.labels.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.features.row(static_cast<Eigen::Index>(i)) = data.features.row(static_cast<Eigen::Index>(rows[i]));
    out.labels.push_back(data.labels[rows[i]]);
  }
  return out;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& data, double train_fraction, Engine& rng) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ContractError("train fraction must be in (0, 1)");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  shuffle(order, rng);
  const auto cut = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(order.size())));
  std::span<const std::size_t> all(order);
  return {subset(data, all.first(cut)), subset(data, all.subspan(cut))};
}

Dataset shuffle_labels(const Dataset& data, Engine& rng) {
  Dataset out = data;
  out.task = data.task + "-control";
  shuffle(out.labels, rng);
  return out;
}

// ---------------------------------------------------------------------------
// Surface tasks

int length_bin(std::size_t subword_count) {
  static constexpr std::array<std::size_t, 4> kUpper = {35, 41, 46, 52};
  int bin = 0;
  while (bin < 4 && subword_count >= kUpper[static_cast<std::size_t>(bin)]) ++bin;
  return bin;
}

Dataset build_length_task(const ActivationDump& dump, std::size_t layer, Engine& rng) {
  if (dump.sentences.empty()) throw ContractError("length task needs a nonempty dump");
  std::array<std::vector<std::size_t>, kLengthBins> members;
  for (std::size_t s = 0; s < dump.sentences.size(); ++s) {
    members[static_cast<std::size_t>(length_bin(dump.sentences[s].num_tokens()))].push_back(s);
  }
  std::size_t smallest = dump.sentences.size();
  for (const auto& m : members) smallest = std::min(smallest, m.size());
  if (smallest == 0) {
    std::string occupancy;
    for (std::size_t b = 0; b < kLengthBins; ++b) {
      occupancy += (b ? ", " : "") + std::string("bin") + std::to_string(b) + ":" + std::to_string(members[b].size());
    }
    throw DataError("length task: empty length bin (" + occupancy + ")");
  }

  std::vector<std::pair<std::size_t, int>> chosen;
  for (std::size_t b = 0; b < kLengthBins; ++b) {
    shuffle(members[b], rng);
    members[b].resize(smallest);
    std::sort(members[b].begin(), members[b].end());
    for (std::size_t s : members[b]) chosen.emplace_back(s, static_cast<int>(b));
  }
  std::sort(chosen.begin(), chosen.end());

  Dataset out;
  out.task = "length";
  out.num_classes = kLengthBins;
  out.class_names = {"[0,35)", "[35,41)", "[41,46)", "[46,52)", "[52,inf)"};
  out.features.resize(static_cast<Eigen::Index>(chosen.size()), dump.hidden_dim);
  for (std::size_t i = 0; i < chosen.size(); ++i) {
    out.features.row(static_cast<Eigen::Index>(i)) = sentence_representation(dump, chosen[i].first, layer).transpose();
    out.labels.push_back(chosen[i].second);
  }
  return out;
}

namespace {

Eigen::RowVectorXd concat(std::initializer_list<Eigen::RowVectorXd> parts) {
  Eigen::Index total = 0;
  for (const auto& p : parts) total += p.size();
  Eigen::RowVectorXd out(total);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.segment(at, p.size()) = p;
    at += p.size();
  }
  return out;
}

Eigen::MatrixXd stack(const std::vector<Eigen::RowVectorXd>& rows, Eigen::Index cols) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), cols);
  for (std::size_t i = 0; i < rows.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = rows[i];
  return m;
}

std::size_t uniform_index(std::size_t n, Engine& rng) {
  return boost::random::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

}  // namespace

Dataset build_content_task(const ActivationDump& dump, std::size_t layer, std::size_t negatives_per_positive,
                           Engine& rng) {
  if (dump.sentences.size() < 2) throw DataError("content task needs at least 2 sentences to draw negatives");
  constexpr std::size_t kMaxAttempts = 1000;

  std::vector<Eigen::RowVectorXd> rows;
  Dataset out;
  out.task = "content";
  out.num_classes = 2;
  out.class_names = {"absent", "present"};

  for (std::size_t s = 0; s < dump.sentences.size(); ++s) {
    const auto& rec = dump.sentences[s];
    const Eigen::RowVectorXd sent = sentence_representation(dump, s, layer).transpose();
    const Eigen::MatrixXd lexical = pool_subwords(dump, s, 0);
    const std::set<std::string> present(rec.words.begin(), rec.words.end());

    const std::size_t w = uniform_index(rec.num_words(), rng);
    rows.push_back(concat({sent, lexical.row(static_cast<Eigen::Index>(w))}));
    out.labels.push_back(1);

    for (std::size_t k = 0; k < negatives_per_positive; ++k) {
      bool found = false;
      for (std::size_t attempt = 0; attempt < kMaxAttempts && !found; ++attempt) {
        std::size_t other = uniform_index(dump.sentences.size() - 1, rng);
        if (other >= s) ++other;
        const auto& orec = dump.sentences[other];
        const std::size_t ow = uniform_index(orec.num_words(), rng);
        if (present.count(orec.words[ow])) continue;
        const Eigen::MatrixXd other_lexical = pool_subwords(dump, other, 0);
        rows.push_back(concat({sent, other_lexical.row(static_cast<Eigen::Index>(ow))}));
        out.labels.push_back(0);
        found = true;
      }
      if (!found) {
        throw DataError("content task: no negative word found for sentence " + std::to_string(s) + " after " +
                        std::to_string(kMaxAttempts) + " draws");
      }
    }
  }
  out.features = stack(rows, 2 * static_cast<Eigen::Index>(dump.hidden_dim));
  return out;
}

Dataset build_order_task(const ActivationDump& dump, std::size_t layer, std::size_t pairs_per_sentence,
                         Engine& rng) {
  std::vector<Eigen::RowVectorXd> rows;
  Dataset out;
  out.task = "order";
  out.num_classes = 2;
  out.class_names = {"in-order", "swapped"};
  boost::random::bernoulli_distribution<> coin(0.5);

  for (std::size_t s = 0; s < dump.sentences.size(); ++s) {
    const std::size_t n = dump.sentences[s].num_words();
    if (n < 2) continue;
    const Eigen::RowVectorXd sent = sentence_representation(dump, s, layer).transpose();
    const Eigen::MatrixXd lexical = pool_subwords(dump, s, 0);
    for (std::size_t p = 0; p < pairs_per_sentence; ++p) {
      std::size_t i = uniform_index(n, rng);
      std::size_t j = uniform_index(n - 1, rng);
      if (j >= i) ++j;
      if (i > j) std::swap(i, j);
      const bool swapped = coin(rng);
      const auto first = static_cast<Eigen::Index>(swapped ? j : i);
      const auto second = static_cast<Eigen::Index>(swapped ? i : j);
      rows.push_back(concat({sent, lexical.row(first), lexical.row(second)}));
      out.labels.push_back(swapped ? 1 : 0);
    }
  }
  out.features = stack(rows, 3 * static_cast<Eigen::Index>(dump.hidden_dim));
  return out;
}

Dataset build_edge_features(const ActivationDump& dump, std::size_t layer, std::span<const SpanExample> examples) {
  std::set<std::string> labels;
  bool two_span = false;
  for (const auto& ex : examples) {
    labels.insert(ex.label);
    two_span = two_span || ex.span2.has_value();
  }
  for (const auto& ex : examples) {
    if (ex.span2.has_value() != two_span) {
      throw DataError("edge task mixes single-span and two-span examples");
    }
  }

  Dataset out;
  out.task = "edge";
  out.class_names.assign(labels.begin(), labels.end());
  out.num_classes = out.class_names.size();
  std::map<std::string, int> label_index;
  for (std::size_t i = 0; i < out.class_names.size(); ++i) label_index[out.class_names[i]] = static_cast<int>(i);

  const auto d = static_cast<Eigen::Index>(dump.hidden_dim);
  out.features.resize(static_cast<Eigen::Index>(examples.size()), two_span ? 2 * d : d);

  // Examples usually cluster by sentence; reuse the pooled words.
  std::size_t cached_sentence = static_cast<std::size_t>(-1);
  Eigen::MatrixXd words;
  auto pool_span = [&](const Span& sp) -> Eigen::RowVectorXd {
    if (sp.end > static_cast<std::uint32_t>(words.rows()) || sp.start >= sp.end) {
      throw DataError("edge span [" + std::to_string(sp.start) + "," + std::to_string(sp.end) +
                      ") out of range for sentence with " + std::to_string(words.rows()) + " words");
    }
    return words.middleRows(sp.start, sp.size()).colwise().mean();
  };

  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& ex = examples[i];
    if (ex.sentence_index >= dump.sentences.size()) {
      throw DataError("edge example " + std::to_string(i) + " refers to missing sentence " +
                      std::to_string(ex.sentence_index));
    }
    if (ex.sentence_index != cached_sentence) {
      words = pool_subwords(dump, ex.sentence_index, layer);
      cached_sentence = ex.sentence_index;
    }
    const auto row = static_cast<Eigen::Index>(i);
    out.features.row(row).head(d) = pool_span(ex.span1);
    if (two_span) out.features.row(row).tail(d) = pool_span(*ex.span2);
    out.labels.push_back(label_index.at(ex.label));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Classifier

ClassifierProbe::ClassifierProbe(std::size_t input_dim, std::size_t hidden_dim, std::size_t num_classes)
    : input_dim_(input_dim), hidden_dim_(hidden_dim), num_classes_(num_classes) {
  const auto in = static_cast<Eigen::Index>(input_dim);
  const auto hid = static_cast<Eigen::Index>(hidden_dim);
  const auto out = static_cast<Eigen::Index>(num_classes);
  if (hidden_dim == 0) {
    weights = {Eigen::MatrixXd::Zero(out, in)};
    biases = {Eigen::VectorXd::Zero(out)};
  } else {
    weights = {Eigen::MatrixXd::Zero(hid, in), Eigen::MatrixXd::Zero(out, hid)};
    biases = {Eigen::VectorXd::Zero(hid), Eigen::VectorXd::Zero(out)};
  }
}

Eigen::MatrixXd ClassifierProbe::logits(const Eigen::MatrixXd& features) const {
  if (static_cast<std::size_t>(features.cols()) != input_dim_) {
    throw ContractError("classifier expects " + std::to_string(input_dim_) + " features, got " +
                        std::to_string(features.cols()));
  }
  Eigen::MatrixXd act = features;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    act = (act * weights[l].transpose()).rowwise() + biases[l].transpose();
    if (l + 1 < weights.size()) act = act.cwiseMax(0.0);
  }
  return act;
}

std::vector<int> ClassifierProbe::predict(const Eigen::MatrixXd& features) const {
  const Eigen::MatrixXd z = logits(features);
  std::vector<int> out(static_cast<std::size_t>(z.rows()));
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    Eigen::Index best = 0;
    z.row(i).maxCoeff(&best);  // first maximum on ties
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

bool operator==(const ClassifierProbe& a, const ClassifierProbe& b) {
  return a.input_dim_ == b.input_dim_ && a.hidden_dim_ == b.hidden_dim_ && a.num_classes_ == b.num_classes_ &&
         a.weights == b.weights && a.biases == b.biases;
}

namespace {

struct Adam {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::vector<Eigen::MatrixXd> m, v;

  template <typename Param>
  void update(std::size_t slot, Param& param, const Param& grad) {
    if (m.size() <= slot) {
      m.resize(slot + 1);
      v.resize(slot + 1);
    }
    if (m[slot].size() == 0) {
      m[slot] = Eigen::MatrixXd::Zero(param.rows(), param.cols());
      v[slot] = Eigen::MatrixXd::Zero(param.rows(), param.cols());
    }
    Eigen::Map<const Eigen::MatrixXd> g(grad.data(), param.rows(), param.cols());
    m[slot] = beta1 * m[slot] + (1 - beta1) * g;
    v[slot] = beta2 * v[slot] + (1 - beta2) * g.cwiseProduct(g);
    const double c1 = 1 - std::pow(beta1, static_cast<double>(step));
    const double c2 = 1 - std::pow(beta2, static_cast<double>(step));
    Eigen::Map<Eigen::MatrixXd> p(param.data(), param.rows(), param.cols());
    p.array() -= lr * (m[slot].array() / c1) / ((v[slot].array() / c2).sqrt() + eps);
  }
};

}  // namespace

ClassifierProbe train_classifier(const Dataset& data, const ClassifierConfig& config, Engine& rng) {
  if (data.size() == 0) throw ContractError("train_classifier: empty dataset");
  if (std::set<int>(data.labels.begin(), data.labels.end()).size() < 2) {
    throw ContractError("train_classifier: need at least 2 classes present");
  }
  if (config.batch_size == 0 || config.epochs == 0) throw ContractError("train_classifier: zero batch size or epochs");

  ClassifierProbe probe(static_cast<std::size_t>(data.features.cols()), config.hidden_dim, data.num_classes);
  for (auto& w : probe.weights) {
    const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    boost::random::uniform_real_distribution<double> init(-limit, limit);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = init(rng);
  }

  Adam adam;
  adam.lr = config.learning_rate;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t layers = probe.weights.size();

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle(order, rng);
    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      const auto b = static_cast<Eigen::Index>(end - begin);
      Eigen::MatrixXd x(b, data.features.cols());
      for (Eigen::Index i = 0; i < b; ++i) x.row(i) = data.features.row(static_cast<Eigen::Index>(order[begin + i]));

      // Forward, keeping each layer's input.
      std::vector<Eigen::MatrixXd> inputs{x};
      Eigen::MatrixXd z;
      for (std::size_t l = 0; l < layers; ++l) {
        z = (inputs.back() * probe.weights[l].transpose()).rowwise() + probe.biases[l].transpose();
        if (l + 1 < layers) inputs.push_back(z.cwiseMax(0.0));
      }
      // Softmax cross-entropy; delta = (softmax - onehot) / b.
      Eigen::MatrixXd delta(z.rows(), z.cols());
      for (Eigen::Index i = 0; i < b; ++i) {
        const double mx = z.row(i).maxCoeff();
        const Eigen::RowVectorXd e = (z.row(i).array() - mx).exp();
        const double sum = e.sum();
        const int y = data.labels[order[begin + static_cast<std::size_t>(i)]];
        loss_sum += -(z(i, y) - mx - std::log(sum));
        delta.row(i) = e / sum;
        delta(i, y) -= 1.0;
      }
      if (!std::isfinite(loss_sum)) {
        throw DivergenceError("classifier loss became non-finite in epoch " + std::to_string(epoch) +
                              "; try a smaller learning rate");
      }
      delta /= static_cast<double>(b);

      ++adam.step;
      for (std::size_t l = layers; l-- > 0;) {
        const Eigen::MatrixXd grad_w = delta.transpose() * inputs[l];
        const Eigen::VectorXd grad_b = delta.colwise().sum().transpose();
        if (l > 0) {
          delta = (delta * probe.weights[l]).cwiseProduct((inputs[l].array() > 0.0).cast<double>().matrix());
        }
        adam.update(2 * l, probe.weights[l], grad_w);
        adam.update(2 * l + 1, probe.biases[l], grad_b);
      }
    }
    probe.final_loss = loss_sum / static_cast<double>(order.size());
  }
  return probe;
}

double micro_f1(std::span<const int> predicted, std::span<const int> gold, std::size_t num_classes) {
  if (predicted.size() != gold.size()) throw ContractError("micro_f1: length mismatch");
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    const int cls = static_cast<int>(c);
    for (std::size_t i = 0; i < gold.size(); ++i) {
      const bool p = predicted[i] == cls;
      const bool g = gold[i] == cls;
      tp += p && g;
      fp += p && !g;
      fn += !p && g;
    }
  }
  if (tp == 0) return 0.0;
  const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  const double recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  return 2.0 * precision * recall / (precision + recall);
}

ClassifierMetrics score_predictions(std::span<const int> predicted, std::span<const int> gold,
                                    std::size_t num_classes) {
  if (predicted.size() != gold.size()) throw ContractError("score_predictions: length mismatch");
  ClassifierMetrics m;
  m.examples = gold.size();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) correct += predicted[i] == gold[i];
  m.accuracy = gold.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(gold.size());
  m.micro_f1 = micro_f1(predicted, gold, num_classes);
  return m;
}

ClassifierMetrics eval_classifier(const ClassifierProbe& probe, const Dataset& data) {
  return score_predictions(probe.predict(data.features), data.labels, probe.num_classes());
}

void save_classifier(const ClassifierProbe& probe, const std::filesystem::path& path) {
  detail::ProbeWriter w(path, detail::ProbeKind::Classifier);
  w.u32(static_cast<std::uint32_t>(probe.input_dim()));
  w.u32(static_cast<std::uint32_t>(probe.hidden_dim()));
  w.u32(static_cast<std::uint32_t>(probe.num_classes()));
  for (std::size_t l = 0; l < probe.weights.size(); ++l) {
    w.matrix(probe.weights[l]);
    w.matrix(probe.biases[l].transpose());
  }
  w.finish();
}

ClassifierProbe load_classifier(const std::filesystem::path& path) {
  detail::ProbeReader r(path);
  if (r.kind() != detail::ProbeKind::Classifier) throw FormatError("probe file does not hold a classifier", 8);
  const std::uint32_t in = r.u32();
  const std::uint32_t hidden = r.u32();
  const std::uint32_t classes = r.u32();
  ClassifierProbe probe(in, hidden, classes);
  for (std::size_t l = 0; l < probe.weights.size(); ++l) {
    probe.weights[l] = r.matrix(static_cast<std::size_t>(probe.weights[l].rows()),
                                static_cast<std::size_t>(probe.weights[l].cols()));
    probe.biases[l] = r.matrix(1, static_cast<std::size_t>(probe.biases[l].size())).row(0).transpose();
  }
  r.expect_end();
  return probe;
}

}  // namespace privlens
