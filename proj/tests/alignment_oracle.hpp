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

// Brute-force references for the alignment dynamic programs. These enumerate
// every monotonic path explicitly and share no code with the library.

#ifndef WTV_TESTS_ALIGNMENT_ORACLE_HPP_
#define WTV_TESTS_ALIGNMENT_ORACLE_HPP_

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <vector>

namespace wtv::testing {

// All token sequences s_0..s_{T-1} with s_0 = 0, s_{T-1} = N-1 and steps in {0, 1}.
inline std::vector<std::vector<int>> enumerate_monotonic_paths(int N, int T) {
  std::vector<std::vector<int>> out;
  std::vector<int> path(static_cast<std::size_t>(T));
  std::function<void(int, int)> rec = [&](int t, int token) {
    path[static_cast<std::size_t>(t)] = token;
    if (t == T - 1) {
      if (token == N - 1) out.push_back(path);
      return;
    }
    rec(t + 1, token);
    if (token + 1 < N) rec(t + 1, token + 1);
  };
  if (N >= 1 && N <= T) rec(0, 0);
  return out;
}

inline long double path_log_score(const Eigen::MatrixXd& soft, const std::vector<int>& path) {
  long double s = 0;
  for (std::size_t t = 0; t < path.size(); ++t)
    s += std::log(static_cast<long double>(soft(path[t], static_cast<Eigen::Index>(t))));
  return s;
}

// -log sum over paths of prod_t soft(s_t, t), accumulated in long double.
inline double brute_force_forward_sum(const Eigen::MatrixXd& soft) {
  const auto paths =
      enumerate_monotonic_paths(static_cast<int>(soft.rows()), static_cast<int>(soft.cols()));
  long double total = 0;
  for (const auto& p : paths) total += std::exp(path_log_score(soft, p));
  return static_cast<double>(-std::log(total));
}

// Highest-scoring path; among exact ties the one whose tokens, compared from
// the last frame backwards, are smallest (the path that advances latest).
inline std::vector<int> brute_force_viterbi(const Eigen::MatrixXd& soft) {
  const auto paths =
      enumerate_monotonic_paths(static_cast<int>(soft.rows()), static_cast<int>(soft.cols()));
  std::vector<int> best;
  double best_score = -std::numeric_limits<double>::infinity();
  for (const auto& p : paths) {
    double s = 0;
    for (std::size_t t = 0; t < p.size(); ++t) s += std::log(soft(p[t], static_cast<Eigen::Index>(t)));
    bool better = s > best_score;
    if (!better && s == best_score) {
      for (std::size_t t = p.size(); t-- > 0;) {
        if (p[t] != best[t]) {
          better = p[t] < best[t];
          break;
        }
      }
    }
    if (better) {
      best = p;
      best_score = s;
    }
  }
  return best;
}

// Random column-stochastic N x T matrix with entries bounded away from 0.
inline Eigen::MatrixXd random_soft(int N, int T, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  Eigen::MatrixXd m(N, T);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  for (Eigen::Index t = 0; t < T; ++t) m.col(t) /= m.col(t).sum();
  return m;
}

// Beta-Binomial pmf from the Beta-function definition.
inline double beta_binomial_pmf(int k, int trials, double a, double b) {
  double choose = 1.0;
  for (int i = 1; i <= k; ++i) choose *= static_cast<double>(trials - k + i) / i;
  return choose * std::beta(k + a, trials - k + b) / std::beta(a, b);
}

}  // namespace wtv::testing

#endif  // WTV_TESTS_ALIGNMENT_ORACLE_HPP_
