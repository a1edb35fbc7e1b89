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

#include <cmath>

#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_int_distribution.hpp>

#include "privlens/errors.hpp"
#include "privlens/rsa.hpp"
#include "synthetic.hpp"

using namespace privlens;

namespace {

// O(n^2) average-rank oracle followed by a two-pass long double Pearson.
double rank_pearson_oracle(const std::vector<double>& x, const std::vector<double>& y) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<long double> r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      long double less = 0;
      long double equal = 0;
      for (double u : v) {
        less += u < v[i];
        equal += u == v[i];
      }
      r[i] = less + (equal + 1) / 2;
    }
    return r;
  };
  const auto rx = ranks(x);
  const auto ry = ranks(y);
  const long double n = static_cast<long double>(x.size());
  long double mx = 0;
  long double my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  long double sxy = 0;
  long double sxx = 0;
  long double syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return static_cast<double>(sxy / std::sqrt(sxx * syy));
}

ActivationDump rotate_dump(const ActivationDump& dump, const Eigen::MatrixXd& q, double scale) {
  ActivationDump out = dump;
  const auto d = static_cast<Eigen::Index>(dump.hidden_dim);
  for (auto& rec : out.sentences) {
    for (std::size_t row = 0; row * dump.hidden_dim < rec.activations.size(); ++row) {
      Eigen::Map<Eigen::VectorXf> v(rec.activations.data() + row * dump.hidden_dim, d);
      v = (scale * q * v.cast<double>()).cast<float>();
    }
  }
  return out;
}

}  // namespace

TEST_CASE("dissimilarity examples") {
  Eigen::MatrixXd reps(4, 2);
  reps << 1, 0, 1, 0, 0, 3, -2, 0;
  const auto d = dissimilarity_matrix(reps);
  CHECK(d(0, 1) == 0.0);
  CHECK(d(0, 2) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(d(0, 3) == 2.0);
  CHECK(d(3, 0) == d(0, 3));
  for (std::size_t i = 0; i < 4; ++i) CHECK(d(i, i) == 0.0);
  CHECK(d.upper_triangle().size() == 6);
  CHECK(d.upper_triangle()[2] == 2.0);
}

TEST_CASE("dissimilarity errors") {
  Eigen::MatrixXd reps(3, 2);
  reps << 1, 0, 0, 0, 0, 1;
  try {
    (void)dissimilarity_matrix(reps);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("row 1") != std::string::npos);
  }
  CHECK_THROWS_AS((void)dissimilarity_matrix(Eigen::MatrixXd::Ones(1, 3)), ContractError);

  Eigen::MatrixXd bad = Eigen::MatrixXd::Zero(2, 2);
  bad(0, 1) = 0.5;
  CHECK_THROWS_AS(DissimilarityMatrix{bad}, ContractError);
  bad(1, 0) = 0.5;
  DissimilarityMatrix ok(bad);
  CHECK(ok.size() == 2);
  bad(0, 1) = bad(1, 0) = 2.5;
  CHECK_THROWS_AS(DissimilarityMatrix{bad}, ContractError);
}

TEST_CASE("dissimilarity matrix is thread-count independent") {
  Engine rng(2);
  boost::random::normal_distribution<double> g;
  Eigen::MatrixXd reps(57, 9);
  for (Eigen::Index i = 0; i < reps.size(); ++i) reps.data()[i] = g(rng);
  const auto one = dissimilarity_matrix(reps, 1);
  for (unsigned t : {2u, 5u, 16u}) CHECK(dissimilarity_matrix(reps, t).values() == one.values());
}

TEST_CASE("spearman examples") {
  const std::vector<double> x = {1, 2, 3, 4, 5};
  const std::vector<double> rev = {5, 4, 3, 2, 1};
  CHECK(spearman(x, x) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(spearman(x, rev) == doctest::Approx(-1.0).epsilon(1e-15));
  const std::vector<double> a = {1, 2, 3, 4};
  const std::vector<double> b = {1, 3, 2, 4};
  CHECK(std::abs(spearman(a, b) - 0.8) < 1e-12);

  const std::vector<double> c = {2, 2, 2};
  const std::vector<double> three = {1, 2, 3};
  CHECK_THROWS_AS((void)spearman(c, three), DataError);
  CHECK_THROWS_AS((void)spearman(a, three), ContractError);
  CHECK_THROWS_AS((void)spearman(std::vector<double>{1}, std::vector<double>{2}), ContractError);
}

TEST_CASE("fractional ranks average ties") {
  const std::vector<double> x = {10, 20, 10, 30, 20, 20};
  CHECK(fractional_ranks(x) == std::vector<double>{1.5, 4, 1.5, 6, 4, 4});
}

TEST_CASE("spearman matches the rank-Pearson oracle, ties included") {
  Engine rng = StreamKey(31).engine();
  boost::random::uniform_int_distribution<int> len(2, 200);
  boost::random::uniform_int_distribution<int> small(0, 6);
  boost::random::normal_distribution<double> g;
  double worst = 0.0;
  int checked = 0;
  for (int round = 0; round < 500; ++round) {
    const int n = len(rng);
    std::vector<double> x(n);
    std::vector<double> y(n);
    for (int i = 0; i < n; ++i) {
      x[i] = round % 3 == 0 ? g(rng) : small(rng);
      y[i] = round % 2 == 0 ? small(rng) + 0.5 * x[i] : g(rng);
    }
    double got = 0.0;
    try {
      got = spearman(x, y);
    } catch (const DataError&) {
      continue;
    }
    worst = std::max(worst, std::abs(got - rank_pearson_oracle(x, y)));
    ++checked;
  }
  CHECK(checked > 400);
  CHECK(worst < 1e-12);
}

TEST_CASE("rsa self-similarity, symmetry and invariance") {
  Engine rng = StreamKey(40).engine();
  const auto a = privlens::testing::gaussian_dump(40, 3, 8, rng);
  for (std::size_t l = 0; l < 3; ++l) CHECK(std::abs(rsa_score(a, a, l) - 1.0) < 1e-9);

  const auto q = privlens::testing::random_orthogonal(8, rng);
  const auto b = rotate_dump(a, q, 3.7);
  for (std::size_t l = 0; l < 3; ++l) CHECK(std::abs(rsa_score(a, b, l) - 1.0) < 1e-6);

  // Exact-arithmetic variant on the pooled matrix itself.
  const Eigen::MatrixXd reps = sentence_matrix(a, 1);
  const Eigen::MatrixXd moved = 0.25 * reps * q.transpose();
  const double rho = spearman(dissimilarity_matrix(reps).upper_triangle(),
                              dissimilarity_matrix(moved).upper_triangle());
  CHECK(std::abs(rho - 1.0) < 1e-9);

  // Same sentences as a, fresh activations.
  auto c = a;
  boost::random::normal_distribution<float> g;
  for (auto& rec : c.sentences) {
    for (float& f : rec.activations) f = g(rng);
  }
  const auto ab = rsa_profile(a, c);
  const auto ba = rsa_profile(c, a);
  REQUIRE(ab.size() == 3);
  for (std::size_t l = 0; l < 3; ++l) {
    CHECK(ab[l].layer == l);
    CHECK(ab[l].rho == ba[l].rho);
  }
  for (const auto& s : rsa_profile(a, a)) CHECK(std::abs(s.rho - 1.0) < 1e-9);
}

TEST_CASE("identical layer correlates fully, independent layer does not") {
  Engine rng = StreamKey(41).engine();
  const auto a = privlens::testing::gaussian_dump(100, 2, 16, rng);
  auto b = a;
  boost::random::normal_distribution<float> g;
  for (auto& rec : b.sentences) {
    const std::size_t plane = rec.activations.size() / 2;
    for (std::size_t i = plane; i < rec.activations.size(); ++i) rec.activations[i] = g(rng);
  }
  const auto profile = rsa_profile(a, b, 4);
  CHECK(std::abs(profile[0].rho - 1.0) < 1e-12);
  CHECK(std::abs(profile[1].rho) < 0.2);
}

TEST_CASE("alignment is checked before scoring") {
  Engine rng(42);
  const auto a = privlens::testing::gaussian_dump(5, 1, 4, rng);
  auto b = a;
  b.sentences[3].words[0] = "other";
  try {
    (void)rsa_score(a, b, 0);
    FAIL("expected AlignmentError");
  } catch (const AlignmentError& e) {
    CHECK(std::string(e.what()).find("sentence 3") != std::string::npos);
  }
  b = a;
  b.sentences.pop_back();
  CHECK_THROWS_AS((void)rsa_profile(a, b), AlignmentError);
  CHECK_THROWS_AS((void)rsa_score(a, a, 1), ContractError);
}
