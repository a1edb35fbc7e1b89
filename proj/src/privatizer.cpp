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

#include "privlens/privatizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include <boost/random/gamma_distribution.hpp>
#include <boost/random/normal_distribution.hpp>

#include "privlens/errors.hpp"
#include "privlens/parallel.hpp"

namespace privlens {

namespace {

constexpr std::size_t kTrialBatch = 4096;

std::optional<std::size_t> resolve(std::string_view word, const EmbeddingSpace& space, bool lowercase) {
  return lowercase ? space.lookup(fold_case(word)) : space.lookup(word);
}

}  // namespace

PrivacyBudget PrivacyBudget::finite(double epsilon) {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    throw ContractError("epsilon must be a finite positive number (use identity mode for no noise)");
  }
  PrivacyBudget b;
  b.identity_ = false;
  b.epsilon_ = epsilon;
  return b;
}

double PrivacyBudget::epsilon() const {
  if (identity_) throw ContractError("identity budget has no epsilon");
  return epsilon_;
}

Vector sample_noise(std::size_t dim, double epsilon, Engine& rng, NoiseKind kind) {
  if (dim < 1) throw ContractError("sample_noise: dim must be >= 1");
  if (!(epsilon > 0.0)) throw ContractError("sample_noise: epsilon must be > 0");

  boost::random::normal_distribution<double> gauss(0.0, 1.0);
  Vector direction(static_cast<Eigen::Index>(dim));
  double norm = 0.0;
  do {
    for (Eigen::Index i = 0; i < direction.size(); ++i) direction[i] = gauss(rng);
    norm = direction.norm();
  } while (norm == 0.0);
  direction /= norm;

  double radius = 0.0;
  if (kind == NoiseKind::MetricLaplace) {
    boost::random::gamma_distribution<double> gamma(static_cast<double>(dim), 1.0 / epsilon);
    radius = gamma(rng);
  } else {
    radius = std::abs(gauss(rng)) / epsilon;
  }
  return radius * direction;
}

std::size_t privatize_index(std::size_t row, const EmbeddingSpace& space, const PrivacyBudget& budget,
                            Engine& rng, NoiseKind kind) {
  if (budget.is_identity()) return row;
  Vector noisy = space.vector(row).transpose() + sample_noise(space.dim(), budget.epsilon(), rng, kind);
  return nearest_index(noisy, space);
}

std::string privatize_word(std::string_view word, const EmbeddingSpace& space,
                           const PrivatizationConfig& config, Engine& rng) {
  auto row = resolve(word, space, config.lowercase);
  if (!row) {
    if (config.passthrough_oov) return std::string(word);
    throw DataError("out-of-vocabulary token '" + std::string(word) + "'");
  }
  return space.word(privatize_index(*row, space, config.budget, rng));
}

PrivatizedText privatize_text(const std::vector<std::string>& tokens, const EmbeddingSpace& space,
                              const PrivatizationConfig& config, const StreamKey& stream,
                              unsigned threads) {
  PrivatizedText out;
  out.tokens.resize(tokens.size());
  std::vector<char> oov(tokens.size(), 0);
  std::vector<char> changed(tokens.size(), 0);

  parallel_for(tokens.size(), threads, [&](std::size_t i) {
    auto row = resolve(tokens[i], space, config.lowercase);
    if (!row) {
      if (!config.passthrough_oov) {
        throw DataError("out-of-vocabulary token '" + tokens[i] + "' at position " + std::to_string(i));
      }
      out.tokens[i] = tokens[i];
      oov[i] = 1;
      return;
    }
    Engine rng = stream.child(i).engine();
    const std::size_t result = privatize_index(*row, space, config.budget, rng);
    out.tokens[i] = space.word(result);
    changed[i] = result != *row;
  });

  for (std::size_t i = 0; i < tokens.size(); ++i) {
    out.oov += static_cast<std::size_t>(oov[i]);
    out.changed += static_cast<std::size_t>(changed[i]);
  }
  return out;
}

PrivatizedText privatize_text(const std::vector<std::string>& tokens, const EmbeddingSpace& space,
                              const PrivatizationConfig& config, unsigned threads) {
  return privatize_text(tokens, space, config, StreamKey(config.seed).child("privatize"), threads);
}

namespace {

// counts[o] of M(row) = o over `trials` draws, batched on fixed substreams.
std::vector<std::size_t> sample_outputs(std::size_t row, const EmbeddingSpace& space,
                                        const PrivacyBudget& budget, std::size_t trials,
                                        const StreamKey& stream, unsigned threads, NoiseKind kind) {
  const std::size_t batches = (trials + kTrialBatch - 1) / kTrialBatch;
  std::vector<std::vector<std::size_t>> partial(batches, std::vector<std::size_t>(space.size(), 0));
  parallel_for(batches, threads, [&](std::size_t b) {
    Engine rng = stream.child(b).engine();
    const std::size_t begin = b * kTrialBatch;
    const std::size_t end = std::min(trials, begin + kTrialBatch);
    for (std::size_t t = begin; t < end; ++t) {
      ++partial[b][privatize_index(row, space, budget, rng, kind)];
    }
  });
  std::vector<std::size_t> counts(space.size(), 0);
  for (const auto& p : partial) {
    for (std::size_t o = 0; o < counts.size(); ++o) counts[o] += p[o];
  }
  return counts;
}

}  // namespace

SubstitutionStats substitution_stats(std::string_view word, const EmbeddingSpace& space,
                                     const PrivatizationConfig& config, std::size_t trials,
                                     const StreamKey& stream, unsigned threads) {
  if (trials < 1) throw ContractError("substitution_stats: trials must be >= 1");
  auto row = resolve(word, space, config.lowercase);
  if (!row) throw DataError("out-of-vocabulary word '" + std::string(word) + "'");

  auto counts = sample_outputs(*row, space, config.budget, trials, stream, threads,
                               NoiseKind::MetricLaplace);
  SubstitutionStats stats;
  stats.word = space.word(*row);
  stats.trials = trials;
  for (std::size_t o = 0; o < counts.size(); ++o) {
    if (counts[o] == 0) continue;
    stats.histogram.emplace(space.word(o), counts[o]);
  }
  stats.support_size = stats.histogram.size();
  stats.self_probability = static_cast<double>(counts[*row]) / static_cast<double>(trials);
  return stats;
}

DpBoundReport verify_dp_bound(const EmbeddingSpace& space, double epsilon, std::size_t trials,
                              double slack, const StreamKey& stream, unsigned threads, NoiseKind kind,
                              std::size_t hit_floor) {
  if (trials < 1) throw ContractError("verify_dp_bound: trials must be >= 1");
  const auto budget = PrivacyBudget::finite(epsilon);
  const std::size_t n = space.size();

  DpBoundReport report;
  report.epsilon = epsilon;
  report.trials = trials;
  report.hit_floor = hit_floor;
  report.slack = slack;
  report.counts.reserve(n);
  for (std::size_t w = 0; w < n; ++w) {
    report.counts.push_back(sample_outputs(w, space, budget, trials, stream.child(w), threads, kind));
  }

  report.max_violation = -std::numeric_limits<double>::infinity();
  for (std::size_t w = 0; w < n; ++w) {
    for (std::size_t other = 0; other < n; ++other) {
      const double bound = epsilon * (space.vector(w) - space.vector(other)).norm();
      for (std::size_t o = 0; o < n; ++o) {
        const std::size_t a = report.counts[w][o];
        const std::size_t b = report.counts[other][o];
        if (a < hit_floor || b < hit_floor) {
          ++report.excluded;
          continue;
        }
        const double violation = std::log(static_cast<double>(a) / static_cast<double>(b)) - bound;
        if (violation > report.max_violation) {
          report.max_violation = violation;
          report.worst_input = w;
          report.worst_other = other;
          report.worst_output = o;
        }
      }
    }
  }
  // Nothing reached the floor: no evidence of a violation.
  if (!std::isfinite(report.max_violation)) report.max_violation = 0.0;
  report.pass = report.max_violation <= slack;
  return report;
}

EmbeddingSpace demo_space() {
  RowMatrix v(5, 2);
  v << 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.5, 0.5;
  return EmbeddingSpace({"sw", "se", "nw", "ne", "center"}, v);
}

}  // namespace privlens
