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

// Unsupervised monotonic alignment between N text tokens and T feature
// frames.
//
// All matrices are token-major: entry (n, t) relates token n to frame t, and
// a soft alignment is column-stochastic (each frame distributes unit mass over
// the tokens). A monotonic full path assigns frame 0 to token 0, frame T-1 to
// token N-1 and advances by at most one token per frame, so a path exists iff
// N <= T. The dynamic programs below only visit the band of cells such a path
// can reach and work in log space; log(0) is clamped to kLogFloor.

#ifndef WTV_ALIGNMENT_HPP_
#define WTV_ALIGNMENT_HPP_

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "wtv/autodiff.hpp"
#include "wtv/core.hpp"

namespace wtv::align {

using Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

inline constexpr double kLogFloor = -1e9;

template <typename Scalar>
struct LogAffinity {
  Matrix<Scalar> values;  // N x T
};

template <typename Scalar>
struct DiagonalPrior {
  Matrix<Scalar> log_prior;  // N x T, each row a log pmf over frames
  Scalar strength = Scalar(1);
};

template <typename Scalar>
struct SoftAlignment {
  Matrix<Scalar> values;  // N x T, columns sum to one

  Index num_tokens() const { return values.rows(); }
  Index num_frames() const { return values.cols(); }
};

struct HardAlignment {
  Eigen::MatrixXi values;  // N x T binary

  Index num_tokens() const { return values.rows(); }
  Index num_frames() const { return values.cols(); }
  // Token index selected at each frame.
  std::vector<int> path() const;
  static HardAlignment from_path(const std::vector<int>& path, Index num_tokens);
};

struct DurationVector {
  std::vector<int> durations;

  Index size() const { return static_cast<Index>(durations.size()); }
  int total() const;
};

// Throws InvariantError unless `hard` has one selected token per frame on a
// monotonic full path.
void validate(const HardAlignment& hard);
void validate(const DurationVector& durations);

DurationVector durations_from_hard(const HardAlignment& hard);

namespace detail {

inline void require_feasible(Index n, Index t) {
  if (n < 1 || t < 1) throw PreconditionError("alignment needs at least one token and one frame");
  if (n > t)
    throw InfeasibleError("no monotonic alignment of " + std::to_string(n) + " tokens onto " +
                          std::to_string(t) + " frames");
}

// Cell (n, t) lies on some monotonic full path.
inline bool in_band(Index n, Index t, Index N, Index T) { return n <= t && N - n <= T - t; }

template <typename Scalar>
Scalar log_add(Scalar a, Scalar b) {
  const Scalar m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

template <typename Derived>
Matrix<typename Derived::Scalar> clamped_log(const Eigen::MatrixBase<Derived>& p) {
  using Scalar = typename Derived::Scalar;
  Matrix<Scalar> out(p.rows(), p.cols());
  for (Index j = 0; j < p.cols(); ++j)
    for (Index i = 0; i < p.rows(); ++i) {
      const Scalar v = p(i, j);
      out(i, j) = v > Scalar(0) ? std::max(Scalar(std::log(v)), Scalar(kLogFloor))
                                : Scalar(kLogFloor);
    }
  return out;
}

}  // namespace detail

// values(n, t) = -||text_hidden.row(n) - features.row(t)||^2.
template <typename DerivedA, typename DerivedB>
LogAffinity<typename DerivedA::Scalar> log_affinity(const Eigen::MatrixBase<DerivedA>& text_hidden,
                                                    const Eigen::MatrixBase<DerivedB>& features) {
  using Scalar = typename DerivedA::Scalar;
  if (text_hidden.cols() != features.cols())
    throw ShapeError("log_affinity: inner dimensions " + std::to_string(text_hidden.cols()) +
                     " vs " + std::to_string(features.cols()));
  LogAffinity<Scalar> out;
  out.values.resize(text_hidden.rows(), features.rows());
  for (Index t = 0; t < features.rows(); ++t)
    for (Index n = 0; n < text_hidden.rows(); ++n)
      out.values(n, t) = -(text_hidden.row(n) - features.row(t)).squaredNorm();
  return out;
}

// log BetaBinomial(t; T-1, alpha = w (n+1), beta = w (N-n)) for 0-indexed n, t.
template <typename Scalar = double>
DiagonalPrior<Scalar> diagonal_prior(Index N, Index T, Scalar strength = Scalar(1)) {
  if (N < 1 || T < 1) throw PreconditionError("diagonal_prior: empty shape");
  if (N > T) throw InfeasibleError("diagonal_prior: more tokens than frames");
  if (!(strength > Scalar(0))) throw PreconditionError("diagonal_prior: strength must be positive");
  const double K = static_cast<double>(T - 1);
  DiagonalPrior<Scalar> prior;
  prior.strength = strength;
  prior.log_prior.resize(N, T);
  const double w = static_cast<double>(strength);
  for (Index n = 0; n < N; ++n) {
    const double a = w * static_cast<double>(n + 1);
    const double b = w * static_cast<double>(N - n);
    const double log_beta_ab = std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
    for (Index t = 0; t < T; ++t) {
      const double k = static_cast<double>(t);
      const double log_choose = std::lgamma(K + 1) - std::lgamma(k + 1) - std::lgamma(K - k + 1);
      const double log_beta =
          std::lgamma(k + a) + std::lgamma(K - k + b) - std::lgamma(K + a + b);
      prior.log_prior(n, t) = static_cast<Scalar>(log_choose + log_beta - log_beta_ab);
    }
  }
  return prior;
}

// Column softmax of affinity + prior.
template <typename Scalar>
SoftAlignment<Scalar> soft_alignment(const LogAffinity<Scalar>& aff,
                                     const DiagonalPrior<Scalar>& prior) {
  if (aff.values.rows() != prior.log_prior.rows() || aff.values.cols() != prior.log_prior.cols())
    throw ShapeError("soft_alignment: affinity and prior shapes differ");
  SoftAlignment<Scalar> soft;
  soft.values = aff.values + prior.log_prior;
  for (Index t = 0; t < soft.values.cols(); ++t) {
    auto col = soft.values.col(t);
    col.array() -= col.maxCoeff();
    col = col.array().exp().matrix();
    col /= col.sum();
  }
  return soft;
}

// Forward (alpha) log-probabilities of monotonic partial paths; cells outside
// the reachable band hold kLogFloor.
template <typename Derived>
Matrix<typename Derived::Scalar> forward_log_alpha(const Eigen::MatrixBase<Derived>& log_soft) {
  using Scalar = typename Derived::Scalar;
  const Index N = log_soft.rows(), T = log_soft.cols();
  detail::require_feasible(N, T);
  Matrix<Scalar> alpha = Matrix<Scalar>::Constant(N, T, Scalar(kLogFloor));
  alpha(0, 0) = log_soft(0, 0);
  for (Index t = 1; t < T; ++t)
    for (Index n = 0; n < N; ++n) {
      if (!detail::in_band(n, t, N, T)) continue;
      const bool stay = detail::in_band(n, t - 1, N, T);
      const bool advance = n > 0 && detail::in_band(n - 1, t - 1, N, T);
      Scalar prev;
      if (stay && advance)
        prev = detail::log_add(alpha(n, t - 1), alpha(n - 1, t - 1));
      else
        prev = stay ? alpha(n, t - 1) : alpha(n - 1, t - 1);
      alpha(n, t) = prev + log_soft(n, t);
    }
  return alpha;
}

template <typename Derived>
Matrix<typename Derived::Scalar> backward_log_beta(const Eigen::MatrixBase<Derived>& log_soft) {
  using Scalar = typename Derived::Scalar;
  const Index N = log_soft.rows(), T = log_soft.cols();
  detail::require_feasible(N, T);
  Matrix<Scalar> beta = Matrix<Scalar>::Constant(N, T, Scalar(kLogFloor));
  beta(N - 1, T - 1) = Scalar(0);
  for (Index t = T - 2; t >= 0; --t)
    for (Index n = 0; n < N; ++n) {
      if (!detail::in_band(n, t, N, T)) continue;
      const bool stay = detail::in_band(n, t + 1, N, T);
      const bool advance = n + 1 < N && detail::in_band(n + 1, t + 1, N, T);
      const Scalar s = stay ? beta(n, t + 1) + log_soft(n, t + 1) : Scalar(0);
      const Scalar a = advance ? beta(n + 1, t + 1) + log_soft(n + 1, t + 1) : Scalar(0);
      beta(n, t) = (stay && advance) ? detail::log_add(s, a) : (stay ? s : a);
    }
  return beta;
}

// -log of the total probability of all monotonic full paths, given log soft
// alignment probabilities.
template <typename Derived>
typename Derived::Scalar forward_sum_loss_log(const Eigen::MatrixBase<Derived>& log_soft) {
  const auto alpha = forward_log_alpha(log_soft);
  return -alpha(alpha.rows() - 1, alpha.cols() - 1);
}

template <typename Scalar>
Scalar forward_sum_loss(const SoftAlignment<Scalar>& soft) {
  return forward_sum_loss_log(detail::clamped_log(soft.values));
}

// Posterior probability that the path visits (n, t); each column sums to one.
// This is minus the gradient of the forward-sum loss w.r.t. log_soft.
template <typename Derived>
Matrix<typename Derived::Scalar> path_occupancy(const Eigen::MatrixBase<Derived>& log_soft) {
  using Scalar = typename Derived::Scalar;
  const Index N = log_soft.rows(), T = log_soft.cols();
  const Matrix<Scalar> alpha = forward_log_alpha(log_soft);
  const Matrix<Scalar> beta = backward_log_beta(log_soft);
  const Scalar log_z = alpha(N - 1, T - 1);
  Matrix<Scalar> gamma = Matrix<Scalar>::Zero(N, T);
  for (Index t = 0; t < T; ++t)
    for (Index n = 0; n < N; ++n)
      if (detail::in_band(n, t, N, T)) gamma(n, t) = std::exp(alpha(n, t) + beta(n, t) - log_z);
  return gamma;
}

// Highest-scoring monotonic full path of sum_t log_soft(s_t, t). On equal
// scores the predecessor with the lower token index wins, so the path stays on
// each token as long as the scores allow.
template <typename Derived>
HardAlignment viterbi_path_log(const Eigen::MatrixBase<Derived>& log_soft) {
  using Scalar = typename Derived::Scalar;
  const Index N = log_soft.rows(), T = log_soft.cols();
  detail::require_feasible(N, T);
  Matrix<Scalar> delta = Matrix<Scalar>::Constant(N, T, Scalar(kLogFloor));
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> advanced =
      Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(N, T, false);
  delta(0, 0) = log_soft(0, 0);
  for (Index t = 1; t < T; ++t)
    for (Index n = 0; n < N; ++n) {
      if (!detail::in_band(n, t, N, T)) continue;
      const bool stay = detail::in_band(n, t - 1, N, T);
      const bool advance = n > 0 && detail::in_band(n - 1, t - 1, N, T);
      bool take_advance;
      if (stay && advance)
        take_advance = delta(n - 1, t - 1) >= delta(n, t - 1);
      else
        take_advance = advance;
      advanced(n, t) = take_advance;
      delta(n, t) = (take_advance ? delta(n - 1, t - 1) : delta(n, t - 1)) + log_soft(n, t);
    }
  std::vector<int> path(static_cast<std::size_t>(T));
  Index n = N - 1;
  for (Index t = T - 1; t >= 0; --t) {
    path[static_cast<std::size_t>(t)] = static_cast<int>(n);
    if (t > 0 && advanced(n, t)) --n;
  }
  return HardAlignment::from_path(path, N);
}

template <typename Scalar>
std::pair<HardAlignment, DurationVector> viterbi_hard(const SoftAlignment<Scalar>& soft) {
  HardAlignment hard = viterbi_path_log(detail::clamped_log(soft.values));
  DurationVector durations = durations_from_hard(hard);
  return {std::move(hard), std::move(durations)};
}

// -sum_{n,t} hard(n,t) log soft(n,t), with log 0 clamped to kLogFloor.
template <typename Derived>
typename Derived::Scalar binarization_loss_log(const Eigen::MatrixBase<Derived>& log_soft,
                                               const HardAlignment& hard) {
  using Scalar = typename Derived::Scalar;
  if (log_soft.rows() != hard.num_tokens() || log_soft.cols() != hard.num_frames())
    throw ShapeError("binarization_loss: soft and hard shapes differ");
  validate(hard);
  const std::vector<int> path = hard.path();
  Scalar loss = 0;
  for (Index t = 0; t < log_soft.cols(); ++t)
    loss -= std::max(log_soft(path[static_cast<std::size_t>(t)], t), Scalar(kLogFloor));
  return loss;
}

template <typename Scalar>
Scalar binarization_loss(const SoftAlignment<Scalar>& soft, const HardAlignment& hard) {
  return binarization_loss_log(detail::clamped_log(soft.values), hard);
}

// ---------------------------------------------------------------------------
// Differentiable forms used by the text encoder's training objective.

// N x T affinity between keys (A x N) and queries (A x T) in a shared space.
template <typename Scalar>
ad::Var<Scalar> log_affinity(const ad::Var<Scalar>& keys, const ad::Var<Scalar>& queries) {
  if (keys.rows() != queries.rows()) throw ShapeError("log_affinity: projection sizes differ");
  const Matrix<Scalar>& K = keys.value();
  const Matrix<Scalar>& Q = queries.value();
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> kk = K.colwise().squaredNorm().transpose();
  const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> qq = Q.colwise().squaredNorm();
  Matrix<Scalar> value = Scalar(2) * (K.transpose() * Q);
  value.colwise() -= kk;
  value.rowwise() -= qq;
  ad::Node<Scalar>* pk = &keys.node();
  ad::Node<Scalar>* pq = &queries.node();
  const bool rg = keys.requires_grad() || queries.requires_grad();
  return keys.tape().make(std::move(value), 1, rg, [pk, pq](ad::Node<Scalar>& n) {
    const Matrix<Scalar>& g = n.grad;  // N x T
    if (pk->requires_grad) {
      Matrix<Scalar> gk = Scalar(2) * (pq->value * g.transpose());
      gk -= Scalar(2) * (pk->value.array().rowwise() * g.rowwise().sum().transpose().array()).matrix();
      pk->accumulate(gk);
    }
    if (pq->requires_grad) {
      Matrix<Scalar> gq = Scalar(2) * (pk->value * g);
      gq -= Scalar(2) * (pq->value.array().rowwise() * g.colwise().sum().array()).matrix();
      pq->accumulate(gq);
    }
  });
}

// Forward-sum loss on a log soft alignment; the gradient is minus the path
// occupancy.
template <typename Scalar>
ad::Var<Scalar> forward_sum_loss(const ad::Var<Scalar>& log_soft) {
  const Matrix<Scalar> clamped = log_soft.value().cwiseMax(Scalar(kLogFloor));
  Matrix<Scalar> value(1, 1);
  value(0, 0) = forward_sum_loss_log(clamped);
  ad::Node<Scalar>* px = &log_soft.node();
  return log_soft.tape().make(std::move(value), 1, log_soft.requires_grad(),
                              [px, clamped](ad::Node<Scalar>& n) {
                                px->accumulate(-n.grad(0, 0) * path_occupancy(clamped));
                              });
}

template <typename Scalar>
ad::Var<Scalar> binarization_loss(const ad::Var<Scalar>& log_soft, const HardAlignment& hard) {
  Matrix<Scalar> value(1, 1);
  value(0, 0) = binarization_loss_log(log_soft.value(), hard);
  ad::Node<Scalar>* px = &log_soft.node();
  Matrix<Scalar> mask = hard.values.cast<Scalar>();
  for (Index j = 0; j < mask.size(); ++j)
    if (log_soft.value().data()[j] < Scalar(kLogFloor)) mask.data()[j] = Scalar(0);
  return log_soft.tape().make(std::move(value), 1, log_soft.requires_grad(),
                              [px, mask = std::move(mask)](ad::Node<Scalar>& n) {
                                px->accumulate(-n.grad(0, 0) * mask);
                              });
}

}  // namespace wtv::align

#endif  // WTV_ALIGNMENT_HPP_
