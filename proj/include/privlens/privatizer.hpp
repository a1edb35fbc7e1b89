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

#ifndef PRIVLENS_PRIVATIZER_HPP
#define PRIVLENS_PRIVATIZER_HPP

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "privlens/embedding_store.hpp"
#include "privlens/random.hpp"

namespace privlens {

/// Privacy budget: a finite epsilon > 0, or the identity mode (no noise at all).
class PrivacyBudget {
 public:
  static PrivacyBudget finite(double epsilon);
  static PrivacyBudget identity() { return PrivacyBudget(); }

  bool is_identity() const noexcept { return identity_; }
  /// Throws ContractError in identity mode.
  double epsilon() const;

 private:
  PrivacyBudget() = default;
  bool identity_ = true;
  double epsilon_ = 0.0;
};

struct PrivatizationConfig {
  PrivacyBudget budget = PrivacyBudget::identity();
  std::uint64_t seed = 0;
  bool lowercase = false;
  bool passthrough_oov = true;
};

/// How the noise magnitude is drawn. Only MetricLaplace gives the metric-DP
/// guarantee; GaussianMagnitude exists as a negative control for the bound check.
enum class NoiseKind { MetricLaplace, GaussianMagnitude };

/// z = r * u with u uniform on the unit sphere and r ~ Gamma(dim, 1/epsilon),
/// i.e. density proportional to exp(-epsilon * |z|).
/// GaussianMagnitude replaces r by |N(0, 1/epsilon^2)|.
Vector sample_noise(std::size_t dim, double epsilon, Engine& rng,
                    NoiseKind kind = NoiseKind::MetricLaplace);

/// Nearest vocabulary row to phi(row) + noise. Identity mode returns `row`.
std::size_t privatize_index(std::size_t row, const EmbeddingSpace& space, const PrivacyBudget& budget,
                            Engine& rng, NoiseKind kind = NoiseKind::MetricLaplace);

/// Privatizes one token. OOV tokens are returned verbatim under passthrough_oov,
/// otherwise a DataError is thrown.
std::string privatize_word(std::string_view word, const EmbeddingSpace& space,
                           const PrivatizationConfig& config, Engine& rng);

struct PrivatizedText {
  std::vector<std::string> tokens;
  std::size_t changed = 0;
  std::size_t oov = 0;
};

/// Token i draws its noise from `stream.child(i)`, so the output does not
/// depend on `threads`.
PrivatizedText privatize_text(const std::vector<std::string>& tokens, const EmbeddingSpace& space,
                              const PrivatizationConfig& config, const StreamKey& stream,
                              unsigned threads = 1);

/// Uses StreamKey(config.seed).child("privatize").
PrivatizedText privatize_text(const std::vector<std::string>& tokens, const EmbeddingSpace& space,
                              const PrivatizationConfig& config, unsigned threads = 1);

struct SubstitutionStats {
  std::string word;
  double self_probability = 0.0;
  std::size_t support_size = 0;
  std::map<std::string, std::size_t> histogram;
  std::size_t trials = 0;
};

/// Trials run in fixed-size batches, batch b drawing from stream.child(b);
/// histograms are merged by addition.
SubstitutionStats substitution_stats(std::string_view word, const EmbeddingSpace& space,
                                     const PrivatizationConfig& config, std::size_t trials,
                                     const StreamKey& stream, unsigned threads = 1);

struct DpBoundReport {
  double epsilon = 0.0;
  std::size_t trials = 0;
  std::size_t hit_floor = 0;
  double slack = 0.0;
  double max_violation = 0.0;
  bool pass = false;
  /// Indices (w, w', output) of the worst triple.
  std::size_t worst_input = 0;
  std::size_t worst_other = 0;
  std::size_t worst_output = 0;
  /// Triples skipped because an estimate had fewer than hit_floor hits.
  std::size_t excluded = 0;
  /// counts[w][o] = number of trials in which M(w) = o.
  std::vector<std::vector<std::size_t>> counts;
};

/// Monte-Carlo check of ln(P[M(w)=o] / P[M(w')=o]) <= epsilon * |phi(w) - phi(w')|
/// over all triples whose two estimates both reach `hit_floor` hits.
DpBoundReport verify_dp_bound(const EmbeddingSpace& space, double epsilon, std::size_t trials,
                              double slack, const StreamKey& stream, unsigned threads = 1,
                              NoiseKind kind = NoiseKind::MetricLaplace, std::size_t hit_floor = 100);

/// The 2-D unit-square corners plus center used for bound demonstrations.
EmbeddingSpace demo_space();

}  // namespace privlens

#endif  // PRIVLENS_PRIVATIZER_HPP
