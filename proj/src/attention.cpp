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

#include "privlens/attention.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <sstream>

#include "privlens/errors.hpp"
#include "privlens/parallel.hpp"

namespace privlens {

namespace {

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr double kLn2 = std::numbers::ln2;
constexpr std::size_t kSentenceBlock = 32;

}  // namespace

Eigen::MatrixXd word_align_attention(const Eigen::MatrixXd& subword_map, std::span<const Span> word_spans) {
  const Eigen::Index t = subword_map.rows();
  const auto w = static_cast<Eigen::Index>(word_spans.size());
  Eigen::MatrixXd to_words(t, w);
  for (Eigen::Index v = 0; v < w; ++v) {
    const Span sp = word_spans[static_cast<std::size_t>(v)];
    to_words.col(v) = subword_map.middleCols(sp.start, sp.size()).rowwise().sum();
  }
  Eigen::MatrixXd out(w, w);
  for (Eigen::Index u = 0; u < w; ++u) {
    const Span sp = word_spans[static_cast<std::size_t>(u)];
    out.row(u) = to_words.middleRows(sp.start, sp.size()).colwise().mean();
  }
  return out;
}

Eigen::MatrixXd word_align_attention(const ActivationDump& dump, std::size_t sentence, std::size_t layer,
                                     std::size_t head) {
  const Eigen::MatrixXd map = dump.attention_map(sentence, layer, head).cast<double>();
  return word_align_attention(map, dump.sentences[sentence].word_spans);
}

double js_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw ContractError("js_divergence: length mismatch");
  double sp = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] < 0.0 || q[i] < 0.0) throw ContractError("js_divergence: negative probability");
    sp += p[i];
    sq += q[i];
  }
  if (sp <= 0.0 || sq <= 0.0) throw ContractError("js_divergence: distribution has zero mass");
  double js = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double a = p[i] / sp;
    const double b = q[i] / sq;
    const double m = 0.5 * (a + b);
    const double ta = a > 0.0 ? a * std::log(a / m) : 0.0;
    const double tb = b > 0.0 ? b * std::log(b / m) : 0.0;
    js += 0.5 * (ta + tb);  // commutative form keeps JS(p,q) == JS(q,p) bitwise
  }
  return std::clamp(js, 0.0, kLn2);
}

HeadDistanceMatrix::HeadDistanceMatrix(Eigen::MatrixXd values, std::size_t num_heads, std::size_t corpus_tokens)
    : values_(std::move(values)), num_heads_(num_heads), corpus_tokens_(corpus_tokens) {
  const Eigen::Index n = values_.rows();
  if (values_.cols() != n) throw ContractError("head distance matrix must be square");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (values_(i, i) != 0.0) throw ContractError("head distance matrix has nonzero diagonal");
    for (Eigen::Index j = i + 1; j < n; ++j) {
      if (values_(i, j) != values_(j, i)) throw ContractError("head distance matrix is not symmetric");
      if (!(values_(i, j) >= 0.0 && values_(i, j) <= kLn2)) throw ContractError("head distance outside [0, ln 2]");
    }
  }
}

HeadDistanceMatrix head_distance_matrix(const ActivationDump& dump, HeadAggregation aggregation, unsigned threads) {
  if (dump.num_heads == 0) throw DataError("no attention stored in dump");
  if (dump.sentences.empty()) throw ContractError("head_distance_matrix: empty dump");
  const std::size_t heads = std::size_t{dump.num_layers} * dump.num_heads;
  const std::size_t pairs = heads * (heads - 1) / 2;
  std::vector<std::pair<std::size_t, std::size_t>> pair_index;
  pair_index.reserve(pairs);
  for (std::size_t a = 0; a < heads; ++a) {
    for (std::size_t b = a + 1; b < heads; ++b) pair_index.emplace_back(a, b);
  }

  std::vector<double> totals(pairs, 0.0);
  std::size_t corpus_tokens = 0;
  const std::size_t n = dump.sentences.size();

  // Blocks of sentences bound memory; within a block each pair sums over
  // sentences and rows in a fixed order.
  for (std::size_t block = 0; block < n; block += kSentenceBlock) {
    const std::size_t end = std::min(n, block + kSentenceBlock);
    std::vector<std::vector<RowMajorMatrix>> aligned(end - block);
    parallel_for(end - block, threads, [&](std::size_t i) {
      const std::size_t s = block + i;
      aligned[i].reserve(heads);
      for (std::size_t l = 0; l < dump.num_layers; ++l) {
        for (std::size_t h = 0; h < dump.num_heads; ++h) aligned[i].emplace_back(word_align_attention(dump, s, l, h));
      }
    });
    for (std::size_t s = block; s < end; ++s) corpus_tokens += dump.sentences[s].num_words();

    parallel_for(pairs, threads, [&](std::size_t k) {
      const auto [a, b] = pair_index[k];
      for (const auto& maps : aligned) {
        const RowMajorMatrix& pa = maps[a];
        const RowMajorMatrix& pb = maps[b];
        const auto w = static_cast<std::size_t>(pa.cols());
        double sentence_sum = 0.0;
        for (Eigen::Index r = 0; r < pa.rows(); ++r) {
          sentence_sum += js_divergence(std::span<const double>(pa.data() + r * pa.cols(), w),
                                        std::span<const double>(pb.data() + r * pb.cols(), w));
        }
        totals[k] += aggregation == HeadAggregation::Token ? sentence_sum
                                                            : sentence_sum / static_cast<double>(pa.rows());
      }
    });
  }

  const double denom = aggregation == HeadAggregation::Token ? static_cast<double>(corpus_tokens)
                                                             : static_cast<double>(n);
  Eigen::MatrixXd values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(heads), static_cast<Eigen::Index>(heads));
  for (std::size_t k = 0; k < pairs; ++k) {
    const auto a = static_cast<Eigen::Index>(pair_index[k].first);
    const auto b = static_cast<Eigen::Index>(pair_index[k].second);
    values(a, b) = values(b, a) = std::clamp(totals[k] / denom, 0.0, kLn2);
  }
  return HeadDistanceMatrix(std::move(values), dump.num_heads, corpus_tokens);
}

// ---------------------------------------------------------------------------
// Classical MDS

SymmetricEigen jacobi_eigen(const Eigen::MatrixXd& symmetric, double tolerance, std::size_t max_sweeps) {
  const Eigen::Index n = symmetric.rows();
  if (symmetric.cols() != n) throw ContractError("jacobi_eigen: matrix must be square");
  Eigen::MatrixXd a = symmetric;
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);

  auto off_norm = [&]() {
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        if (i != j) s += a(i, j) * a(i, j);
      }
    }
    return std::sqrt(s);
  };
  const double threshold = tolerance * std::max(1.0, symmetric.norm());

  SymmetricEigen result;
  double off = off_norm();
  while (off >= threshold) {
    if (result.sweeps == max_sweeps) {
      throw Error("Jacobi eigensolver did not converge after " + std::to_string(max_sweeps) +
                  " sweeps; off-diagonal residual " + std::to_string(off));
    }
    for (Eigen::Index p = 0; p < n - 1; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        // Rotation angle zeroing a(p, q).
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
    ++result.sweeps;
    off = off_norm();
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index x, Eigen::Index y) { return a(x, x) > a(y, y); });
  result.values.resize(n);
  result.vectors.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    result.values[i] = a(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(i)]);
    result.vectors.col(i) = v.col(order[static_cast<std::size_t>(i)]);
  }
  return result;
}

Eigen::MatrixXd classical_mds(const Eigen::MatrixXd& distances, const MdsConfig& config) {
  const Eigen::Index n = distances.rows();
  if (distances.cols() != n) throw ContractError("classical_mds: distance matrix must be square");
  if (config.out_dim < 1) throw ContractError("classical_mds: out_dim must be >= 1");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (distances(i, i) != 0.0) throw ContractError("classical_mds: nonzero diagonal at " + std::to_string(i));
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double d = distances(i, j);
      if (!(d >= 0.0) || !std::isfinite(d)) throw ContractError("classical_mds: negative or non-finite distance");
      if (std::abs(d - distances(j, i)) > 1e-9 * std::max(1.0, d)) {
        throw ContractError("classical_mds: distance matrix is not symmetric");
      }
    }
  }
  const auto k = static_cast<Eigen::Index>(config.out_dim);
  if (n == 0) return Eigen::MatrixXd(0, k);

  const Eigen::MatrixXd sq = (0.5 * (distances + distances.transpose())).array().square().matrix();
  const Eigen::MatrixXd centering =
      Eigen::MatrixXd::Identity(n, n) - Eigen::MatrixXd::Constant(n, n, 1.0 / static_cast<double>(n));
  Eigen::MatrixXd gram = -0.5 * centering * sq * centering;
  gram = 0.5 * (gram + gram.transpose());

  const auto eig = jacobi_eigen(gram, config.tolerance, config.max_sweeps);
  Eigen::MatrixXd coords = Eigen::MatrixXd::Zero(n, k);
  for (Eigen::Index c = 0; c < std::min(k, n); ++c) {
    const double lambda = std::max(eig.values[c], 0.0);
    coords.col(c) = eig.vectors.col(c) * std::sqrt(lambda);
    Eigen::Index arg = 0;
    coords.col(c).cwiseAbs().maxCoeff(&arg);
    if (coords(arg, c) < 0.0) coords.col(c) = -coords.col(c);
  }
  return coords;
}

Eigen::MatrixXd classical_mds(const HeadDistanceMatrix& distances, const MdsConfig& config) {
  return classical_mds(distances.values(), config);
}

std::string render_svg(const Eigen::MatrixXd& coords, std::size_t heads_per_layer) {
  constexpr double kSize = 600.0;
  constexpr double kMargin = 40.0;
  const std::size_t per_layer = std::max<std::size_t>(1, heads_per_layer);
  const auto n = static_cast<std::size_t>(coords.rows());
  const std::size_t layers = n == 0 ? 1 : (n + per_layer - 1) / per_layer;

  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  if (n > 0 && coords.cols() >= 2) {
    xmin = coords.col(0).minCoeff();
    xmax = coords.col(0).maxCoeff();
    ymin = coords.col(1).minCoeff();
    ymax = coords.col(1).maxCoeff();
  }
  const double span = std::max({xmax - xmin, ymax - ymin, 1e-12});
  auto px = [&](double x) { return kMargin + (x - xmin) / span * (kSize - 2 * kMargin); };
  auto py = [&](double y) { return kSize - kMargin - (y - ymin) / span * (kSize - 2 * kMargin); };

  std::ostringstream svg;
  char buf[256];
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"600\" height=\"600\" viewBox=\"0 0 600 600\">\n";
  svg << "<rect width=\"600\" height=\"600\" fill=\"white\"/>\n";
  for (std::size_t i = 0; i < n && coords.cols() >= 2; ++i) {
    const std::size_t layer = i / per_layer;
    const double hue = layers > 1 ? 270.0 * static_cast<double>(layer) / static_cast<double>(layers - 1) : 0.0;
    std::snprintf(buf, sizeof buf,
                  "<circle cx=\"%.3f\" cy=\"%.3f\" r=\"5\" fill=\"hsl(%.1f,70%%,45%%)\" fill-opacity=\"0.8\">"
                  "<title>layer %zu head %zu</title></circle>\n",
                  px(coords(static_cast<Eigen::Index>(i), 0)), py(coords(static_cast<Eigen::Index>(i), 1)), hue, layer,
                  i % per_layer);
    svg << buf;
  }
  for (std::size_t l = 0; l < layers && n > 0; ++l) {
    const double hue = layers > 1 ? 270.0 * static_cast<double>(l) / static_cast<double>(layers - 1) : 0.0;
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%.1f\" y=\"%.1f\" font-size=\"11\" font-family=\"sans-serif\" "
                  "fill=\"hsl(%.1f,70%%,45%%)\">layer %zu</text>\n",
                  kSize - 70.0, 16.0 + 13.0 * static_cast<double>(l), hue, l);
    svg << buf;
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace privlens
