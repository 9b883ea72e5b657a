// Copyright 2026 The wavthruvec Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>
#include <random>

#include "alignment_oracle.hpp"
#include "doctest.h"
#include "gradcheck.hpp"
#include "wtv/alignment.hpp"

using namespace wtv;
using namespace wtv::align;
using wtv::testing::brute_force_forward_sum;
using wtv::testing::brute_force_viterbi;
using wtv::testing::random_soft;

namespace {

SoftAlignment<double> as_soft(const Eigen::MatrixXd& m) { return SoftAlignment<double>{m}; }

}  // namespace

TEST_CASE("log_affinity is negative squared distance") {
  Eigen::MatrixXd a(1, 1), b(1, 1);
  a << 0.0;
  b << 3.0;
  CHECK(log_affinity(a, b).values(0, 0) == -9.0);

  const Eigen::MatrixXd same = Eigen::MatrixXd::Constant(3, 4, 0.7);
  const auto zero = log_affinity(same, Eigen::MatrixXd::Constant(5, 4, 0.7)).values;
  CHECK(zero.rows() == 3);
  CHECK(zero.cols() == 5);
  CHECK(zero.cwiseAbs().maxCoeff() == 0.0);

  std::mt19937_64 rng(11);
  const Eigen::MatrixXd text = wtv::testing::random_matrix(2, 2, rng);
  const Eigen::MatrixXd feats = wtv::testing::random_matrix(3, 2, rng);
  const auto aff = log_affinity(text, feats).values;
  for (int n = 0; n < 2; ++n)
    for (int t = 0; t < 3; ++t) {
      const double d0 = text(n, 0) - feats(t, 0), d1 = text(n, 1) - feats(t, 1);
      CHECK(aff(n, t) == doctest::Approx(-(d0 * d0 + d1 * d1)).epsilon(1e-14));
    }
  CHECK_THROWS_AS(log_affinity(text, Eigen::MatrixXd::Zero(3, 3)), ShapeError);
}

TEST_CASE("differentiable log_affinity agrees with the direct form") {
  std::mt19937_64 rng(12);
  const Eigen::MatrixXd keys = wtv::testing::random_matrix(4, 3, rng);     // A x N
  const Eigen::MatrixXd queries = wtv::testing::random_matrix(4, 6, rng);  // A x T
  ad::Tape<double> tape;
  const auto v = log_affinity(tape.constant(keys), tape.constant(queries));
  const auto ref = log_affinity(keys.transpose(), queries.transpose()).values;
  CHECK((v.value() - ref).cwiseAbs().maxCoeff() < 1e-12);
  const auto check = wtv::testing::grad_check(
      [](ad::Tape<double>& t, std::vector<ad::Var<double>>& in) {
        return ad::sum(ad::mul(log_affinity(in[0], in[1]), ad::tanh(t.constant(Eigen::MatrixXd::Ones(3, 6)))));
      },
      {keys, queries});
  CHECK(check.max_relative_error < 1e-6);
}

TEST_CASE("diagonal prior is a Beta-Binomial log pmf per token") {
  CHECK(diagonal_prior<double>(1, 1, 1.0).log_prior(0, 0) == doctest::Approx(0.0));

  const auto uniform = diagonal_prior<double>(1, 4, 1.0).log_prior;
  for (int t = 0; t < 4; ++t) CHECK(uniform(0, t) == doctest::Approx(std::log(0.25)).epsilon(1e-12));

  // Hand-computed: BetaBin(2; 1, 2) = (1/2, 1/3, 1/6), BetaBin(2; 2, 1) reversed.
  const auto p = diagonal_prior<double>(2, 3, 1.0).log_prior.array().exp().matrix();
  const double expected[2][3] = {{0.5, 1.0 / 3.0, 1.0 / 6.0}, {1.0 / 6.0, 1.0 / 3.0, 0.5}};
  for (int n = 0; n < 2; ++n)
    for (int t = 0; t < 3; ++t) {
      CHECK(std::abs(p(n, t) - expected[n][t]) < 1e-9);
      CHECK(std::abs(p(n, t) - wtv::testing::beta_binomial_pmf(t, 2, n + 1.0, 2.0 - n)) < 1e-9);
    }

  // Each row is a pmf over frames for any strength.
  const auto q = diagonal_prior<double>(4, 9, 0.3).log_prior.array().exp().matrix();
  for (int n = 0; n < 4; ++n) {
    CHECK(q.row(n).sum() == doctest::Approx(1.0).epsilon(1e-12));
    for (int t = 0; t < 9; ++t)
      CHECK(std::abs(q(n, t) - wtv::testing::beta_binomial_pmf(t, 8, 0.3 * (n + 1), 0.3 * (4 - n))) <
            1e-9);
  }
  CHECK_THROWS_AS(diagonal_prior<double>(5, 4, 1.0), InfeasibleError);
  CHECK_THROWS_AS(diagonal_prior<double>(2, 4, 0.0), PreconditionError);
}

TEST_CASE("soft alignment is a column softmax of affinity plus prior") {
  const LogAffinity<double> flat{Eigen::MatrixXd::Zero(3, 5)};
  const DiagonalPrior<double> flat_prior{Eigen::MatrixXd::Zero(3, 5), 1.0};
  const auto uniform = soft_alignment(flat, flat_prior).values;
  CHECK((uniform.array() - 1.0 / 3.0).abs().maxCoeff() < 1e-15);

  LogAffinity<double> dominant{Eigen::MatrixXd::Zero(3, 4)};
  for (int t = 0; t < 4; ++t) dominant.values(t % 3, t) = 1e6;
  const auto onehot = soft_alignment(dominant, DiagonalPrior<double>{Eigen::MatrixXd::Zero(3, 4), 1.0}).values;
  for (int t = 0; t < 4; ++t) CHECK(std::abs(onehot(t % 3, t) - 1.0) < 1e-9);

  std::mt19937_64 rng(13);
  const LogAffinity<double> aff{wtv::testing::random_matrix(3, 5, rng, -5, 5)};
  const auto prior = diagonal_prior<double>(3, 5, 1.0);
  const auto soft = soft_alignment(aff, prior).values;
  for (int t = 0; t < 5; ++t) {
    CHECK(std::abs(soft.col(t).sum() - 1.0) < 1e-6);
    long double z = 0;
    for (int n = 0; n < 3; ++n) z += std::exp(static_cast<long double>(aff.values(n, t) + prior.log_prior(n, t)));
    for (int n = 0; n < 3; ++n) {
      const long double ref = std::exp(static_cast<long double>(aff.values(n, t) + prior.log_prior(n, t))) / z;
      CHECK(std::abs(soft(n, t) - static_cast<double>(ref)) < 1e-12);
    }
  }
}

TEST_CASE("forward-sum loss anchors") {
  // Single token: the only path multiplies the row.
  Eigen::MatrixXd row(1, 4);
  row << 0.9, 0.5, 0.25, 1.0;
  CHECK(forward_sum_loss(as_soft(row)) == doctest::Approx(-row.array().log().sum()).epsilon(1e-12));

  // Two monotonic paths over uniform 1/2 entries: -log(2 / 8) = log 4.
  CHECK(forward_sum_loss(as_soft(Eigen::MatrixXd::Constant(2, 3, 0.5))) ==
        doctest::Approx(std::log(4.0)).epsilon(1e-12));

  // N == T: only the diagonal path exists.
  std::mt19937_64 rng(14);
  const Eigen::MatrixXd square = random_soft(4, 4, rng);
  CHECK(forward_sum_loss(as_soft(square)) ==
        doctest::Approx(-square.diagonal().array().log().sum()).epsilon(1e-12));

  CHECK_THROWS_AS(forward_sum_loss(as_soft(Eigen::MatrixXd::Constant(3, 2, 0.5))), InfeasibleError);
}

TEST_CASE("forward-sum and Viterbi match path enumeration for all small shapes") {
  std::mt19937_64 rng(15);
  for (int N = 1; N <= 4; ++N)
    for (int T = N; T <= 8; ++T)
      for (int rep = 0; rep < 5; ++rep) {
        const Eigen::MatrixXd soft = random_soft(N, T, rng);
        CHECK(std::abs(forward_sum_loss(as_soft(soft)) - brute_force_forward_sum(soft)) < 1e-6);
        const auto [hard, durations] = viterbi_hard(as_soft(soft));
        CHECK(hard.path() == brute_force_viterbi(soft));
        CHECK(durations.total() == T);
        // The total over paths dominates the single best path.
        double best = 0;
        const auto path = hard.path();
        for (int t = 0; t < T; ++t) best += std::log(soft(path[t], t));
        CHECK(std::exp(-forward_sum_loss(as_soft(soft))) >= std::exp(best));
      }
}

TEST_CASE("Viterbi tie-break stays on the lower token") {
  const auto [hard, durations] = viterbi_hard(as_soft(Eigen::MatrixXd::Constant(3, 6, 1.0 / 3.0)));
  CHECK(hard.path() == std::vector<int>{0, 0, 0, 0, 1, 2});
  CHECK(durations.durations == std::vector<int>{4, 1, 1});
  CHECK(brute_force_viterbi(Eigen::MatrixXd::Constant(3, 6, 1.0 / 3.0)) == hard.path());
}

TEST_CASE("Viterbi anchors") {
  Eigen::MatrixXd one(1, 5);
  one.setOnes();
  const auto [h1, d1] = viterbi_hard(as_soft(one));
  CHECK(h1.values.sum() == 5);
  CHECK(d1.durations == std::vector<int>{5});

  Eigen::MatrixXd diag = Eigen::MatrixXd::Constant(4, 4, 0.01);
  diag.diagonal().setConstant(0.97);
  const auto [h2, d2] = viterbi_hard(as_soft(diag));
  CHECK(h2.values == Eigen::MatrixXi::Identity(4, 4));
  CHECK(d2.durations == std::vector<int>{1, 1, 1, 1});

  // Exhaustive check over the 10 paths of a 3 x 6 problem.
  std::mt19937_64 rng(16);
  CHECK(wtv::testing::enumerate_monotonic_paths(3, 6).size() == 10);
  for (int rep = 0; rep < 20; ++rep) {
    const Eigen::MatrixXd soft = random_soft(3, 6, rng);
    CHECK(viterbi_hard(as_soft(soft)).first.path() == brute_force_viterbi(soft));
  }
}

TEST_CASE("binarization loss anchors") {
  const HardAlignment hard = HardAlignment::from_path({0, 0, 1, 1, 2}, 3);
  const Eigen::MatrixXd onehot = hard.values.cast<double>();
  CHECK(binarization_loss(as_soft(onehot), hard) == 0.0);

  const Eigen::MatrixXd uniform = Eigen::MatrixXd::Constant(3, 5, 1.0 / 3.0);
  CHECK(std::abs(binarization_loss(as_soft(uniform), hard) - 5.0 * std::log(3.0)) < 1e-9);

  std::mt19937_64 rng(17);
  const Eigen::MatrixXd soft = random_soft(2, 4, rng);
  const HardAlignment h2 = HardAlignment::from_path({0, 1, 1, 1}, 2);
  const double ref = -(std::log(soft(0, 0)) + std::log(soft(1, 1)) + std::log(soft(1, 2)) + std::log(soft(1, 3)));
  CHECK(binarization_loss(as_soft(soft), h2) == doctest::Approx(ref).epsilon(1e-14));
  CHECK(binarization_loss(as_soft(soft), h2) >= 0.0);

  // A zero at a selected cell is clamped, not an exception.
  Eigen::MatrixXd with_zero = onehot;
  with_zero(0, 0) = 0.0;
  with_zero(1, 0) = 1.0;
  CHECK(binarization_loss(as_soft(with_zero), hard) == doctest::Approx(1e9));
}

TEST_CASE("durations from hard alignments") {
  CHECK(durations_from_hard(HardAlignment{Eigen::MatrixXi::Ones(1, 5)}).durations == std::vector<int>{5});
  CHECK(durations_from_hard(HardAlignment{Eigen::MatrixXi::Identity(3, 3)}).durations ==
        std::vector<int>{1, 1, 1});

  std::mt19937_64 rng(18);
  for (int rep = 0; rep < 10; ++rep) {
    const Eigen::MatrixXd soft = random_soft(4, 9, rng);
    const auto [hard, durations] = viterbi_hard(as_soft(soft));
    CHECK(durations.total() == 9);
    const auto path = hard.path();
    for (int n = 0; n < 4; ++n) {
      CHECK(durations.durations[n] >= 1);
      CHECK(durations.durations[n] == std::count(path.begin(), path.end(), n));
    }
  }

  Eigen::MatrixXi bad = Eigen::MatrixXi::Identity(3, 3);
  bad(0, 2) = 1;  // two tokens in the last frame
  CHECK_THROWS_AS(durations_from_hard(HardAlignment{bad}), InvariantError);
  Eigen::MatrixXi backwards(2, 3);
  backwards << 1, 0, 1, 0, 1, 0;
  CHECK_THROWS_AS(durations_from_hard(HardAlignment{backwards}), InvariantError);
  Eigen::MatrixXi skip(3, 3);
  skip << 1, 0, 0, 0, 0, 0, 0, 1, 1;
  CHECK_THROWS_AS(durations_from_hard(HardAlignment{skip}), InvariantError);
}

TEST_CASE("alignment losses differentiate correctly through the softmax") {
  std::mt19937_64 rng(19);
  for (int rep = 0; rep < 3; ++rep) {
    const Eigen::MatrixXd scores = wtv::testing::random_matrix(3, 6, rng, -2.0, 2.0);
    const auto fs = wtv::testing::grad_check(
        [](ad::Tape<double>&, std::vector<ad::Var<double>>& v) {
          return forward_sum_loss(ad::log_softmax_cols(v[0]));
        },
        {scores});
    CHECK(fs.max_relative_error < 1e-4);

    const HardAlignment hard = viterbi_path_log(ad::Matrix<double>(scores));
    const auto bin = wtv::testing::grad_check(
        [hard](ad::Tape<double>&, std::vector<ad::Var<double>>& v) {
          return binarization_loss(ad::log_softmax_cols(v[0]), hard);
        },
        {scores});
    CHECK(bin.max_relative_error < 1e-4);
  }
}

TEST_CASE("path occupancy columns sum to one") {
  std::mt19937_64 rng(20);
  const Eigen::MatrixXd soft = random_soft(3, 7, rng);
  const auto gamma = path_occupancy(Eigen::MatrixXd(soft.array().log()));
  for (int t = 0; t < 7; ++t) CHECK(gamma.col(t).sum() == doctest::Approx(1.0).epsilon(1e-12));
}
