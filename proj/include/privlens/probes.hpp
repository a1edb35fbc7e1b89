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

#ifndef PRIVLENS_PROBES_HPP
#define PRIVLENS_PROBES_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "privlens/activation_io.hpp"
#include "privlens/random.hpp"

namespace privlens {

/// Labeled feature matrix for a classifier probe.
struct Dataset {
  std::string task;
  Eigen::MatrixXd features;  // n x f
  std::vector<int> labels;   // n entries in [0, num_classes)
  std::size_t num_classes = 0;
  std::vector<std::string> class_names;

  std::size_t size() const noexcept { return labels.size(); }
};

/// Returns the rows listed in `rows`, in that order.
Dataset subset(const Dataset& data, std::span<const std::size_t> rows);

/// Shuffles then cuts at floor(train_fraction * n).
std::pair<Dataset, Dataset> split_dataset(const Dataset& data, double train_fraction, Engine& rng);

/// Control task: same features, labels permuted.
Dataset shuffle_labels(const Dataset& data, Engine& rng);

// Surface tasks -------------------------------------------------------------

/// Bin of a subword count over [0,35) [35,41) [41,46) [46,52) [52,inf).
int length_bin(std::size_t subword_count);
inline constexpr std::size_t kLengthBins = 5;

/// Sentence representations labeled by length bin, downsampled to the
/// smallest bin. Throws DataError listing occupancy if any bin is empty.
Dataset build_length_task(const ActivationDump& dump, std::size_t layer, Engine& rng);

/// concat(sentence rep at `layer`, lexical word rep). Label 1 when the word
/// occurs in the sentence; negatives are words of other sentences.
Dataset build_content_task(const ActivationDump& dump, std::size_t layer, std::size_t negatives_per_positive,
                           Engine& rng);

/// concat(sentence rep, lexical rep of first presented word, of second).
/// Label 0 when the first presented word precedes the second in the sentence.
Dataset build_order_task(const ActivationDump& dump, std::size_t layer, std::size_t pairs_per_sentence,
                         Engine& rng);

/// Mean-pooled span reps (concatenated for two-span examples). Classes are the
/// sorted distinct labels.
Dataset build_edge_features(const ActivationDump& dump, std::size_t layer, std::span<const SpanExample> examples);

// Classifier ----------------------------------------------------------------

struct ClassifierConfig {
  std::size_t hidden_dim = 256;  // 0 = linear (logistic) probe
  double learning_rate = 1e-3;
  std::size_t epochs = 40;
  std::size_t batch_size = 32;
};

/// Softmax classifier with an optional rectified hidden layer.
class ClassifierProbe {
 public:
  ClassifierProbe() = default;
  ClassifierProbe(std::size_t input_dim, std::size_t hidden_dim, std::size_t num_classes);

  std::size_t input_dim() const noexcept { return input_dim_; }
  std::size_t hidden_dim() const noexcept { return hidden_dim_; }
  std::size_t num_classes() const noexcept { return num_classes_; }

  /// n x num_classes logits.
  Eigen::MatrixXd logits(const Eigen::MatrixXd& features) const;
  std::vector<int> predict(const Eigen::MatrixXd& features) const;

  /// Layer weights: {W1, W2} for a hidden probe, {W} for a linear one.
  /// Each W is out x in; biases are separate.
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
  double final_loss = 0.0;

  friend bool operator==(const ClassifierProbe& a, const ClassifierProbe& b);

 private:
  std::size_t input_dim_ = 0;
  std::size_t hidden_dim_ = 0;
  std::size_t num_classes_ = 0;
};

/// Mini-batch Adam on mean softmax cross-entropy. Throws DivergenceError on a
/// non-finite loss.
ClassifierProbe train_classifier(const Dataset& data, const ClassifierConfig& config, Engine& rng);

struct ClassifierMetrics {
  double accuracy = 0.0;
  double micro_f1 = 0.0;
  std::size_t examples = 0;
};

/// Micro-averaged F1 from counts pooled over all classes.
double micro_f1(std::span<const int> predicted, std::span<const int> gold, std::size_t num_classes);

ClassifierMetrics score_predictions(std::span<const int> predicted, std::span<const int> gold,
                                    std::size_t num_classes);

ClassifierMetrics eval_classifier(const ClassifierProbe& probe, const Dataset& data);

void save_classifier(const ClassifierProbe& probe, const std::filesystem::path& path);
ClassifierProbe load_classifier(const std::filesystem::path& path);

}  // namespace privlens

#endif  // PRIVLENS_PROBES_HPP
