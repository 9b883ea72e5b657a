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

// Reverse-mode automatic differentiation over dense Eigen matrices.
//
// Every activation is a 2-D matrix laid out channels x time. A batch of
// equal-length sequences is stored side by side along the columns; the
// number of such sequences is the variable's `segments` count, and ops that
// look across time (convolutions, pooling, per-sequence reductions) respect
// segment boundaries. Ops record a closure on the owning Tape; Tape::backward
// replays them in reverse creation order.
//
// Everything is templated on the scalar type. float is used for training and
// inference, double for finite-difference gradient checks.

#ifndef WTV_AUTODIFF_HPP_
#define WTV_AUTODIFF_HPP_

#include <Eigen/Dense>

#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "wtv/core.hpp"

namespace wtv::ad {

using Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
struct Parameter {
  Matrix<Scalar> value;
  Matrix<Scalar> grad;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

template <typename Scalar>
struct Node {
  Matrix<Scalar> value;
  Matrix<Scalar> grad;
  Index segments = 1;
  bool requires_grad = false;
  std::function<void(Node&)> backward;

  // Adds `g` into this node's gradient, allocating it on first use.
  template <typename Derived>
  void accumulate(const Eigen::MatrixBase<Derived>& g) {
    if (!requires_grad) return;
    if (grad.size() == 0)
      grad = g;
    else
      grad += g;
  }
};

template <typename Scalar>
class Tape;

template <typename Scalar>
class Var {
 public:
  Var() = default;
  Var(Tape<Scalar>* tape, Node<Scalar>* node) : tape_(tape), node_(node) {}

  const Matrix<Scalar>& value() const { return node_->value; }
  // Gradient after Tape::backward; empty when nothing flowed into this node.
  const Matrix<Scalar>& grad() const { return node_->grad; }
  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  Index segments() const { return node_->segments; }
  Index segment_length() const { return node_->value.cols() / node_->segments; }
  bool requires_grad() const { return node_->requires_grad; }
  bool valid() const { return node_ != nullptr; }

  Tape<Scalar>& tape() const { return *tape_; }
  Node<Scalar>& node() const { return *node_; }

 private:
  Tape<Scalar>* tape_ = nullptr;
  Node<Scalar>* node_ = nullptr;
};

template <typename Scalar>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<Scalar> constant(Matrix<Scalar> value, Index segments = 1) {
    return make(std::move(value), segments, false, {});
  }

  // Leaf that feeds its gradient into `p.grad`. With `trainable == false`
  // the parameter is read as a constant and no weight gradient is computed.
  Var<Scalar> parameter(Parameter<Scalar>& p, bool trainable = true) {
    const bool rg = trainable && grad_enabled_;
    Parameter<Scalar>* target = &p;
    return make(p.value, 1, rg, [target](Node<Scalar>& n) {
      if (target->grad.size() == 0) target->zero_grad();
      target->grad += n.grad;
    });
  }

  Var<Scalar> make(Matrix<Scalar> value, Index segments, bool requires_grad,
                   std::function<void(Node<Scalar>&)> backward) {
    if (segments < 1 || (value.cols() % segments) != 0)
      throw ShapeError("column count is not a multiple of the segment count");
    Node<Scalar>& n = nodes_.emplace_back();
    n.value = std::move(value);
    n.segments = segments;
    n.requires_grad = requires_grad && grad_enabled_;
    if (n.requires_grad) n.backward = std::move(backward);
    return Var<Scalar>(this, &n);
  }

  // Seeds d(loss)/d(loss) = 1 and propagates to every recorded node.
  void backward(const Var<Scalar>& loss) {
    if (loss.rows() != 1 || loss.cols() != 1) throw ShapeError("backward() needs a scalar loss");
    if (!loss.requires_grad()) return;
    loss.node().grad = Matrix<Scalar>::Ones(1, 1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      Node<Scalar>& n = *it;
      if (n.requires_grad && n.backward && n.grad.size() != 0) n.backward(n);
    }
  }

  bool grad_enabled() const { return grad_enabled_; }
  void set_grad_enabled(bool enabled) { grad_enabled_ = enabled; }
  std::size_t size() const { return nodes_.size(); }

 private:
  std::deque<Node<Scalar>> nodes_;
  bool grad_enabled_ = true;
};

template <typename Scalar>
bool any_requires_grad(std::initializer_list<Var<Scalar>> vars) {
  for (const auto& v : vars)
    if (v.valid() && v.requires_grad()) return true;
  return false;
}

// ---------------------------------------------------------------------------
// Elementwise and broadcasting arithmetic.

template <typename Scalar> Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b);
template <typename Scalar> Var<Scalar> sub(const Var<Scalar>& a, const Var<Scalar>& b);
template <typename Scalar> Var<Scalar> mul(const Var<Scalar>& a, const Var<Scalar>& b);
template <typename Scalar> Var<Scalar> scale(const Var<Scalar>& a, Scalar s);
template <typename Scalar> Var<Scalar> add_scalar(const Var<Scalar>& a, Scalar s);
// x + bias, bias is rows x 1 and broadcast over every column.
template <typename Scalar> Var<Scalar> add_bias(const Var<Scalar>& x, const Var<Scalar>& bias);
// Per-sequence broadcast: v is rows x segments, column b applies to segment b.
template <typename Scalar> Var<Scalar> add_segments(const Var<Scalar>& x, const Var<Scalar>& v);
template <typename Scalar> Var<Scalar> mul_segments(const Var<Scalar>& x, const Var<Scalar>& v);
template <typename Scalar> Var<Scalar> matmul(const Var<Scalar>& a, const Var<Scalar>& b);
template <typename Scalar> Var<Scalar> transpose(const Var<Scalar>& a);

template <typename Scalar> Var<Scalar> relu(const Var<Scalar>& x);
template <typename Scalar> Var<Scalar> leaky_relu(const Var<Scalar>& x, Scalar slope);
template <typename Scalar> Var<Scalar> tanh(const Var<Scalar>& x);
template <typename Scalar> Var<Scalar> sigmoid(const Var<Scalar>& x);
template <typename Scalar> Var<Scalar> exp(const Var<Scalar>& x);
template <typename Scalar> Var<Scalar> log(const Var<Scalar>& x);
template <typename Scalar> Var<Scalar> sqrt(const Var<Scalar>& x);
template <typename Scalar> Var<Scalar> square(const Var<Scalar>& x);
// max(x, lo); the gradient is blocked where the floor is active.
template <typename Scalar> Var<Scalar> clamp_min(const Var<Scalar>& x, Scalar lo);

// ---------------------------------------------------------------------------
// Normalizations.

// Softmax over rows, independently for each column.
template <typename Scalar> Var<Scalar> softmax_cols(const Var<Scalar>& x);
template <typename Scalar> Var<Scalar> log_softmax_cols(const Var<Scalar>& x);
// Softmax along time for every row, within each segment, restricted to the
// first `lengths[b]` columns of segment b. Masked positions are exactly 0.
template <typename Scalar>
Var<Scalar> segment_softmax_rows(const Var<Scalar>& x, std::span<const Index> lengths);
// Per-column normalization over rows followed by gain/bias (rows x 1 each).
template <typename Scalar>
Var<Scalar> layer_norm_cols(const Var<Scalar>& x, const Var<Scalar>& gain, const Var<Scalar>& bias,
                            Scalar eps = Scalar(1e-5));

template <typename Scalar>
struct RowStatistics {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> mean;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> variance;  // biased
};

// (x - mean_row) / sqrt(var_row + eps) with statistics over all columns.
template <typename Scalar>
Var<Scalar> batch_normalize_rows(const Var<Scalar>& x, Scalar eps, RowStatistics<Scalar>* stats);
// (x - mean) / sqrt(var + eps) with fixed statistics.
template <typename Scalar>
Var<Scalar> normalize_rows_fixed(const Var<Scalar>& x, const RowStatistics<Scalar>& stats,
                                 Scalar eps);
// Each column scaled to unit L2 norm.
template <typename Scalar> Var<Scalar> l2_normalize_cols(const Var<Scalar>& x, Scalar eps = Scalar(1e-12));

// ---------------------------------------------------------------------------
// Convolutions and pooling along time.

struct Conv1dSpec {
  Index kernel = 1;
  Index stride = 1;
  Index dilation = 1;
  Index pad_left = 0;
  Index pad_right = 0;

  static Conv1dSpec same(Index kernel, Index dilation = 1) {
    const Index total = dilation * (kernel - 1);
    return Conv1dSpec{kernel, 1, dilation, total / 2, total - total / 2};
  }
  Index output_length(Index input_length) const {
    return (input_length + pad_left + pad_right - dilation * (kernel - 1) - 1) / stride + 1;
  }
};

// weight: C_out x (kernel * C_in), column k * C_in + c multiplies input
// channel c at tap k. bias (optional): C_out x 1. Zero padding.
template <typename Scalar>
Var<Scalar> conv1d(const Var<Scalar>& x, const Var<Scalar>& weight, const Var<Scalar>* bias,
                   const Conv1dSpec& spec);

struct ConvTranspose1dSpec {
  Index kernel = 1;
  Index stride = 1;
  // Leading samples dropped from the full-length output.
  Index crop_left = 0;
  // Output length per segment as a multiple of the input length.
  Index output_factor = 1;
};

// weight: (kernel * C_out) x C_in, row k * C_out + o. Output length per
// segment is exactly output_factor * T_in: the full transposed convolution is
// computed and cropped to [crop_left, crop_left + output_factor * T_in).
template <typename Scalar>
Var<Scalar> conv_transpose1d(const Var<Scalar>& x, const Var<Scalar>& weight,
                             const Var<Scalar>* bias, const ConvTranspose1dSpec& spec);

// Average pooling with zero padding counted in the denominator.
template <typename Scalar>
Var<Scalar> avg_pool1d(const Var<Scalar>& x, Index kernel, Index stride, Index pad);

// ---------------------------------------------------------------------------
// Data movement.

// out.data()[i] = x.data()[index[i]] in column-major order; index -1 writes 0.
// Covers reshapes, padding, framing and duration-based repetition.
template <typename Scalar>
Var<Scalar> gather(const Var<Scalar>& x, std::span<const Index> index, Index rows, Index cols,
                   Index segments);
template <typename Scalar> Var<Scalar> concat_rows(std::span<const Var<Scalar>> parts);
// Concatenates along columns; segments add up.
template <typename Scalar> Var<Scalar> concat_cols(std::span<const Var<Scalar>> parts);
template <typename Scalar> Var<Scalar> slice_rows(const Var<Scalar>& x, Index start, Index count);
template <typename Scalar>
Var<Scalar> slice_cols(const Var<Scalar>& x, Index start, Index count, Index segments = 1);
// Same data, new segment count.
template <typename Scalar> Var<Scalar> resegment(const Var<Scalar>& x, Index segments);

// ---------------------------------------------------------------------------
// Reductions and losses (1 x 1 outputs unless noted).

template <typename Scalar> Var<Scalar> sum(const Var<Scalar>& x);
template <typename Scalar> Var<Scalar> mean(const Var<Scalar>& x);
// rows x segments: sum over time within each segment.
template <typename Scalar> Var<Scalar> segment_sum(const Var<Scalar>& x);
template <typename Scalar> Var<Scalar> mse(const Var<Scalar>& a, const Var<Scalar>& b);
template <typename Scalar> Var<Scalar> l1(const Var<Scalar>& a, const Var<Scalar>& b);
// Sum of the given scalar losses each multiplied by its weight.
template <typename Scalar>
Var<Scalar> weighted_sum(std::span<const Var<Scalar>> terms, std::span<const Scalar> weights);

// Constant 0/1 mask: for segment b columns >= lengths[b] are zeroed.
template <typename Scalar>
Var<Scalar> mask_time(const Var<Scalar>& x, std::span<const Index> lengths);

}  // namespace wtv::ad

#endif  // WTV_AUTODIFF_HPP_
