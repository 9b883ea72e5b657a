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

// Named parameter storage and the small set of layers both models are built
// from. Activations are channels x time; batches are stacked along columns.

#ifndef WTV_NN_HPP_
#define WTV_NN_HPP_

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "wtv/autodiff.hpp"
#include "wtv/core.hpp"

namespace wtv::nn {

using Eigen::Index;
using Rng = std::mt19937_64;

template <typename Scalar>
using Matrix = ad::Matrix<Scalar>;

// Trainable parameters plus non-trainable buffers (running statistics and
// the like), both keyed by dotted names. Map nodes are stable, so references
// returned here stay valid while the set is alive.
template <typename Scalar>
class ParameterSet {
 public:
  ad::Parameter<Scalar>& add(const std::string& name, Matrix<Scalar> value) {
    if (params_.count(name) || buffers_.count(name)) throw ConfigError("duplicate parameter " + name);
    auto& p = params_[name];
    p.value = std::move(value);
    p.zero_grad();
    return p;
  }
  Matrix<Scalar>& add_buffer(const std::string& name, Matrix<Scalar> value) {
    if (params_.count(name) || buffers_.count(name)) throw ConfigError("duplicate buffer " + name);
    return buffers_[name] = std::move(value);
  }

  ad::Parameter<Scalar>& at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw ConfigError("unknown parameter " + name);
    return it->second;
  }
  const ad::Parameter<Scalar>& at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ConfigError("unknown parameter " + name);
    return it->second;
  }
  Matrix<Scalar>& buffer(const std::string& name) {
    auto it = buffers_.find(name);
    if (it == buffers_.end()) throw ConfigError("unknown buffer " + name);
    return it->second;
  }
  const Matrix<Scalar>& buffer(const std::string& name) const {
    auto it = buffers_.find(name);
    if (it == buffers_.end()) throw ConfigError("unknown buffer " + name);
    return it->second;
  }
  bool contains(const std::string& name) const { return params_.count(name) > 0; }

  std::map<std::string, ad::Parameter<Scalar>>& params() { return params_; }
  const std::map<std::string, ad::Parameter<Scalar>>& params() const { return params_; }
  std::map<std::string, Matrix<Scalar>>& buffers() { return buffers_; }
  const std::map<std::string, Matrix<Scalar>>& buffers() const { return buffers_; }

  void zero_grad() {
    for (auto& [k, p] : params_) p.zero_grad();
  }
  Index num_scalars() const {
    Index n = 0;
    for (const auto& [k, p] : params_) n += p.value.size();
    return n;
  }
  bool all_finite() const {
    for (const auto& [k, p] : params_)
      if (!p.value.allFinite()) return false;
    for (const auto& [k, b] : buffers_)
      if (!b.allFinite()) return false;
    return true;
  }

 private:
  std::map<std::string, ad::Parameter<Scalar>> params_;
  std::map<std::string, Matrix<Scalar>> buffers_;
};

// Binds a parameter set to a tape for one forward pass. Each parameter enters
// the tape once. With `trainable == false` parameters are read as constants.
template <typename Scalar>
class Scope {
 public:
  Scope(ad::Tape<Scalar>& tape, ParameterSet<Scalar>& params, bool trainable = true,
        bool training = true)
      : tape_(tape), params_(params), trainable_(trainable), training_(training) {}

  ad::Var<Scalar> operator[](const std::string& name) {
    auto it = cache_.find(name);
    if (it != cache_.end()) return it->second;
    ad::Var<Scalar> v = tape_.parameter(params_.at(name), trainable_);
    cache_.emplace(name, v);
    return v;
  }

  ad::Tape<Scalar>& tape() const { return tape_; }
  ParameterSet<Scalar>& params() const { return params_; }
  // Training mode: batch statistics in normalization layers, running
  // averages updated. Otherwise running averages are read.
  bool training() const { return training_; }

 private:
  ad::Tape<Scalar>& tape_;
  ParameterSet<Scalar>& params_;
  bool trainable_;
  bool training_;
  std::unordered_map<std::string, ad::Var<Scalar>> cache_;
};

enum class Init {
  kFanInUniform,  // U(-1/sqrt(fan_in), 1/sqrt(fan_in))
  kNormal,        // N(0, std) with the given std
  kZero,
  kOne,
};

// Draws in double precision so float and double models built from the same
// seed hold the same values up to rounding.
template <typename Scalar>
Matrix<Scalar> init_matrix(Index rows, Index cols, Init kind, Index fan_in, Rng& rng,
                           double stddev = 0.01) {
  Eigen::MatrixXd m(rows, cols);
  switch (kind) {
    case Init::kFanInUniform: {
      const double b = 1.0 / std::sqrt(static_cast<double>(std::max<Index>(fan_in, 1)));
      std::uniform_real_distribution<double> u(-b, b);
      for (Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
      break;
    }
    case Init::kNormal: {
      std::normal_distribution<double> n(0.0, stddev);
      for (Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
      break;
    }
    case Init::kZero: m.setZero(); break;
    case Init::kOne: m.setOnes(); break;
  }
  return m.cast<Scalar>();
}

// y = W x + b; x is in x T, y is out x T.
struct Linear {
  std::string name;
  Index in = 0;
  Index out = 0;
  bool bias = true;

  template <typename Scalar>
  void init(ParameterSet<Scalar>& ps, Rng& rng, Init weight_init = Init::kFanInUniform,
            double stddev = 0.01) const {
    ps.add(name + ".weight", init_matrix<Scalar>(out, in, weight_init, in, rng, stddev));
    if (bias) ps.add(name + ".bias", init_matrix<Scalar>(out, 1, Init::kZero, in, rng));
  }

  template <typename Scalar>
  ad::Var<Scalar> operator()(Scope<Scalar>& s, const ad::Var<Scalar>& x) const {
    if (x.rows() != in) throw ShapeError(name + ": expected " + std::to_string(in) + " input rows");
    ad::Var<Scalar> y = ad::matmul(s[name + ".weight"], x);
    return bias ? ad::add_bias(y, s[name + ".bias"]) : y;
  }
};

struct Conv1d {
  std::string name;
  Index in = 0;
  Index out = 0;
  Index kernel = 1;
  Index dilation = 1;
  Index stride = 1;
  // Negative means "same" padding for stride 1.
  Index padding = -1;
  bool bias = true;

  ad::Conv1dSpec spec() const {
    if (padding < 0) return ad::Conv1dSpec::same(kernel, dilation);
    return ad::Conv1dSpec{kernel, stride, dilation, padding, padding};
  }

  template <typename Scalar>
  void init(ParameterSet<Scalar>& ps, Rng& rng, Init weight_init = Init::kFanInUniform,
            double stddev = 0.01) const {
    ps.add(name + ".weight", init_matrix<Scalar>(out, kernel * in, weight_init, kernel * in, rng, stddev));
    if (bias) ps.add(name + ".bias", init_matrix<Scalar>(out, 1, Init::kZero, kernel * in, rng));
  }

  template <typename Scalar>
  ad::Var<Scalar> operator()(Scope<Scalar>& s, const ad::Var<Scalar>& x) const {
    if (x.rows() != in) throw ShapeError(name + ": expected " + std::to_string(in) + " input channels");
    if (!bias) return ad::conv1d<Scalar>(x, s[name + ".weight"], nullptr, spec());
    const ad::Var<Scalar> b = s[name + ".bias"];
    return ad::conv1d<Scalar>(x, s[name + ".weight"], &b, spec());
  }
};

// Upsamples time by exactly `stride`.
struct ConvTranspose1d {
  std::string name;
  Index in = 0;
  Index out = 0;
  Index kernel = 1;
  Index stride = 1;

  ad::ConvTranspose1dSpec spec() const {
    return ad::ConvTranspose1dSpec{kernel, stride, (kernel - stride) / 2, stride};
  }

  template <typename Scalar>
  void init(ParameterSet<Scalar>& ps, Rng& rng, Init weight_init = Init::kFanInUniform,
            double stddev = 0.01) const {
    ps.add(name + ".weight", init_matrix<Scalar>(kernel * out, in, weight_init, in * kernel / stride, rng, stddev));
    ps.add(name + ".bias", init_matrix<Scalar>(out, 1, Init::kZero, in, rng));
  }

  template <typename Scalar>
  ad::Var<Scalar> operator()(Scope<Scalar>& s, const ad::Var<Scalar>& x) const {
    if (x.rows() != in) throw ShapeError(name + ": expected " + std::to_string(in) + " input channels");
    const ad::Var<Scalar> b = s[name + ".bias"];
    return ad::conv_transpose1d<Scalar>(x, s[name + ".weight"], &b, spec());
  }
};

struct LayerNorm {
  std::string name;
  Index dim = 0;

  template <typename Scalar>
  void init(ParameterSet<Scalar>& ps, Rng& rng) const {
    ps.add(name + ".gain", init_matrix<Scalar>(dim, 1, Init::kOne, dim, rng));
    ps.add(name + ".bias", init_matrix<Scalar>(dim, 1, Init::kZero, dim, rng));
  }

  template <typename Scalar>
  ad::Var<Scalar> operator()(Scope<Scalar>& s, const ad::Var<Scalar>& x) const {
    return ad::layer_norm_cols(x, s[name + ".gain"], s[name + ".bias"]);
  }
};

// Lookup table: dim x vocab; output dim x N.
struct Embedding {
  std::string name;
  Index vocab = 0;
  Index dim = 0;

  template <typename Scalar>
  void init(ParameterSet<Scalar>& ps, Rng& rng) const {
    ps.add(name + ".table", init_matrix<Scalar>(dim, vocab, Init::kNormal, dim, rng,
                                                1.0 / std::sqrt(static_cast<double>(dim))));
  }

  template <typename Scalar>
  ad::Var<Scalar> operator()(Scope<Scalar>& s, const std::vector<int>& ids, Index segments = 1) const {
    std::vector<Index> idx;
    idx.reserve(ids.size() * static_cast<std::size_t>(dim));
    for (int id : ids) {
      if (id < 0 || id >= vocab)
        throw VocabularyError("token id " + std::to_string(id) + " outside vocabulary of size " +
                              std::to_string(vocab));
      for (Index h = 0; h < dim; ++h) idx.push_back(static_cast<Index>(id) * dim + h);
    }
    return ad::gather(s[name + ".table"], std::span<const Index>(idx), dim,
                      static_cast<Index>(ids.size()), segments);
  }
};

// Sinusoidal position table, dim x length.
template <typename Scalar>
Matrix<Scalar> sinusoidal_positions(Index dim, Index length) {
  Matrix<Scalar> pe(dim, length);
  for (Index t = 0; t < length; ++t)
    for (Index i = 0; i < dim; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(dim));
      const double a = static_cast<double>(t) * rate;
      pe(i, t) = static_cast<Scalar>(i % 2 == 0 ? std::sin(a) : std::cos(a));
    }
  return pe;
}

// Multi-head self-attention over each segment; keys past `lengths[b]` are
// masked out. x: dim x (B * L).
struct MultiHeadAttention {
  std::string name;
  Index dim = 0;
  Index heads = 1;

  template <typename Scalar>
  void init(ParameterSet<Scalar>& ps, Rng& rng) const {
    for (const char* p : {".q", ".k", ".v", ".o"}) Linear{name + p, dim, dim}.init(ps, rng);
  }

  template <typename Scalar>
  ad::Var<Scalar> operator()(Scope<Scalar>& s, const ad::Var<Scalar>& x,
                             std::span<const Index> lengths) const {
    if (dim % heads != 0) throw ConfigError(name + ": dim not divisible by heads");
    const Index B = x.segments(), L = x.segment_length(), d = dim / heads;
    const ad::Var<Scalar> q = Linear{name + ".q", dim, dim}(s, x);
    const ad::Var<Scalar> k = Linear{name + ".k", dim, dim}(s, x);
    const ad::Var<Scalar> v = Linear{name + ".v", dim, dim}(s, x);
    const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(d));
    std::vector<ad::Var<Scalar>> per_segment;
    for (Index b = 0; b < B; ++b) {
      const Index len = lengths.empty() ? L : lengths[static_cast<std::size_t>(b)];
      Matrix<Scalar> mask = Matrix<Scalar>::Zero(L, L);
      if (len < L) mask.bottomRows(L - len).setConstant(Scalar(-1e9));
      const ad::Var<Scalar> mask_v = s.tape().constant(mask);
      const ad::Var<Scalar> qb = ad::slice_cols(q, b * L, L), kb = ad::slice_cols(k, b * L, L),
                            vb = ad::slice_cols(v, b * L, L);
      std::vector<ad::Var<Scalar>> head_out;
      for (Index h = 0; h < heads; ++h) {
        const auto qh = ad::slice_rows(qb, h * d, d), kh = ad::slice_rows(kb, h * d, d),
                   vh = ad::slice_rows(vb, h * d, d);
        // scores(key, query)
        const auto scores = ad::add(ad::scale(ad::matmul(ad::transpose(kh), qh), scale), mask_v);
        head_out.push_back(ad::matmul(vh, ad::softmax_cols(scores)));
      }
      per_segment.push_back(ad::concat_rows<Scalar>(head_out));
    }
    const ad::Var<Scalar> merged = ad::resegment(ad::concat_cols<Scalar>(per_segment), B);
    return Linear{name + ".o", dim, dim}(s, merged);
  }
};

}  // namespace wtv::nn

#endif  // WTV_NN_HPP_
