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

#include "wtv/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace wtv::ad {

namespace {

template <typename S>
using M = Matrix<S>;
template <typename S>
using Col = Eigen::Matrix<S, Eigen::Dynamic, 1>;

template <typename S>
void require_same_shape(const Var<S>& a, const Var<S>& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
}

template <typename S>
Var<S> emit(const Var<S>& ref, M<S> value, Index segments, bool rg,
            std::function<void(Node<S>&)> bw) {
  return ref.tape().make(std::move(value), segments, rg, std::move(bw));
}

// Copies the receptive fields of every output position into columns:
// row k * C_in + c, column b * T_out + t_out.
template <typename S>
M<S> im2col(const M<S>& x, Index segments, const Conv1dSpec& spec) {
  const Index cin = x.rows();
  const Index tin = x.cols() / segments;
  const Index tout = spec.output_length(tin);
  M<S> cols = M<S>::Zero(spec.kernel * cin, segments * tout);
  for (Index b = 0; b < segments; ++b) {
    for (Index to = 0; to < tout; ++to) {
      S* dst = cols.data() + (b * tout + to) * cols.rows();
      const Index base = to * spec.stride - spec.pad_left;
      for (Index k = 0; k < spec.kernel; ++k) {
        const Index t = base + k * spec.dilation;
        if (t < 0 || t >= tin) continue;
        const S* src = x.data() + (b * tin + t) * cin;
        std::copy(src, src + cin, dst + k * cin);
      }
    }
  }
  return cols;
}

template <typename S>
void col2im_add(const M<S>& gcols, Index segments, Index tin, const Conv1dSpec& spec, M<S>& gx) {
  const Index cin = gx.rows();
  const Index tout = spec.output_length(tin);
  for (Index b = 0; b < segments; ++b) {
    for (Index to = 0; to < tout; ++to) {
      const S* src = gcols.data() + (b * tout + to) * gcols.rows();
      const Index base = to * spec.stride - spec.pad_left;
      for (Index k = 0; k < spec.kernel; ++k) {
        const Index t = base + k * spec.dilation;
        if (t < 0 || t >= tin) continue;
        S* dst = gx.data() + (b * tin + t) * cin;
        const S* s = src + k * cin;
        for (Index c = 0; c < cin; ++c) dst[c] += s[c];
      }
    }
  }
}

bool is_pointwise(const Conv1dSpec& s) {
  return s.kernel == 1 && s.stride == 1 && s.pad_left == 0 && s.pad_right == 0;
}

}  // namespace

template <typename S>
Var<S> add(const Var<S>& a, const Var<S>& b) {
  require_same_shape(a, b, "add");
  Node<S>* pa = &a.node();
  Node<S>* pb = &b.node();
  return emit<S>(a, a.value() + b.value(), a.segments(), any_requires_grad<S>({a, b}),
                 [pa, pb](Node<S>& n) {
                   pa->accumulate(n.grad);
                   pb->accumulate(n.grad);
                 });
}

template <typename S>
Var<S> sub(const Var<S>& a, const Var<S>& b) {
  require_same_shape(a, b, "sub");
  Node<S>* pa = &a.node();
  Node<S>* pb = &b.node();
  return emit<S>(a, a.value() - b.value(), a.segments(), any_requires_grad<S>({a, b}),
                 [pa, pb](Node<S>& n) {
                   pa->accumulate(n.grad);
                   pb->accumulate(-n.grad);
                 });
}

template <typename S>
Var<S> mul(const Var<S>& a, const Var<S>& b) {
  require_same_shape(a, b, "mul");
  Node<S>* pa = &a.node();
  Node<S>* pb = &b.node();
  return emit<S>(a, a.value().cwiseProduct(b.value()), a.segments(), any_requires_grad<S>({a, b}),
                 [pa, pb](Node<S>& n) {
                   if (pa->requires_grad) pa->accumulate(n.grad.cwiseProduct(pb->value));
                   if (pb->requires_grad) pb->accumulate(n.grad.cwiseProduct(pa->value));
                 });
}

template <typename S>
Var<S> scale(const Var<S>& a, S s) {
  Node<S>* pa = &a.node();
  return emit<S>(a, a.value() * s, a.segments(), a.requires_grad(),
                 [pa, s](Node<S>& n) { pa->accumulate(n.grad * s); });
}

template <typename S>
Var<S> add_scalar(const Var<S>& a, S s) {
  Node<S>* pa = &a.node();
  return emit<S>(a, (a.value().array() + s).matrix(), a.segments(), a.requires_grad(),
                 [pa](Node<S>& n) { pa->accumulate(n.grad); });
}

template <typename S>
Var<S> add_bias(const Var<S>& x, const Var<S>& bias) {
  if (bias.cols() != 1 || bias.rows() != x.rows()) throw ShapeError("add_bias: bias shape");
  Node<S>* px = &x.node();
  Node<S>* pb = &bias.node();
  M<S> y = x.value().colwise() + bias.value().col(0);
  return emit<S>(x, std::move(y), x.segments(), any_requires_grad<S>({x, bias}),
                 [px, pb](Node<S>& n) {
                   px->accumulate(n.grad);
                   if (pb->requires_grad) pb->accumulate(n.grad.rowwise().sum());
                 });
}

template <typename S>
Var<S> add_segments(const Var<S>& x, const Var<S>& v) {
  const Index B = x.segments();
  const Index T = x.segment_length();
  if (v.rows() != x.rows() || v.cols() != B) throw ShapeError("add_segments: broadcast shape");
  M<S> y = x.value();
  for (Index b = 0; b < B; ++b) y.middleCols(b * T, T).colwise() += v.value().col(b);
  Node<S>* px = &x.node();
  Node<S>* pv = &v.node();
  return emit<S>(x, std::move(y), B, any_requires_grad<S>({x, v}), [px, pv, B, T](Node<S>& n) {
    px->accumulate(n.grad);
    if (pv->requires_grad) {
      M<S> gv(n.grad.rows(), B);
      for (Index b = 0; b < B; ++b) gv.col(b) = n.grad.middleCols(b * T, T).rowwise().sum();
      pv->accumulate(gv);
    }
  });
}

template <typename S>
Var<S> mul_segments(const Var<S>& x, const Var<S>& v) {
  const Index B = x.segments();
  const Index T = x.segment_length();
  if (v.rows() != x.rows() || v.cols() != B) throw ShapeError("mul_segments: broadcast shape");
  M<S> y(x.rows(), x.cols());
  for (Index b = 0; b < B; ++b)
    y.middleCols(b * T, T) = x.value().middleCols(b * T, T).array().colwise() *
                             v.value().col(b).array();
  Node<S>* px = &x.node();
  Node<S>* pv = &v.node();
  return emit<S>(x, std::move(y), B, any_requires_grad<S>({x, v}), [px, pv, B, T](Node<S>& n) {
    if (px->requires_grad) {
      M<S> gx(n.grad.rows(), n.grad.cols());
      for (Index b = 0; b < B; ++b)
        gx.middleCols(b * T, T) =
            n.grad.middleCols(b * T, T).array().colwise() * pv->value.col(b).array();
      px->accumulate(gx);
    }
    if (pv->requires_grad) {
      M<S> gv(n.grad.rows(), B);
      for (Index b = 0; b < B; ++b)
        gv.col(b) = n.grad.middleCols(b * T, T)
                        .cwiseProduct(px->value.middleCols(b * T, T))
                        .rowwise()
                        .sum();
      pv->accumulate(gv);
    }
  });
}

template <typename S>
Var<S> matmul(const Var<S>& a, const Var<S>& b) {
  if (a.cols() != b.rows())
    throw ShapeError("matmul: inner dimensions " + std::to_string(a.cols()) + " vs " +
                     std::to_string(b.rows()));
  Node<S>* pa = &a.node();
  Node<S>* pb = &b.node();
  M<S> y = a.value() * b.value();
  return emit<S>(b, std::move(y), b.segments(), any_requires_grad<S>({a, b}),
                 [pa, pb](Node<S>& n) {
                   if (pa->requires_grad) pa->accumulate(n.grad * pb->value.transpose());
                   if (pb->requires_grad) pb->accumulate(pa->value.transpose() * n.grad);
                 });
}

template <typename S>
Var<S> transpose(const Var<S>& a) {
  Node<S>* pa = &a.node();
  return emit<S>(a, a.value().transpose(), 1, a.requires_grad(),
                 [pa](Node<S>& n) { pa->accumulate(n.grad.transpose()); });
}

template <typename S>
Var<S> relu(const Var<S>& x) {
  Node<S>* px = &x.node();
  return emit<S>(x, x.value().cwiseMax(S(0)), x.segments(), x.requires_grad(), [px](Node<S>& n) {
    px->accumulate((px->value.array() > S(0)).select(n.grad.array(), S(0)).matrix());
  });
}

template <typename S>
Var<S> leaky_relu(const Var<S>& x, S slope) {
  Node<S>* px = &x.node();
  M<S> y = (x.value().array() > S(0)).select(x.value().array(), x.value().array() * slope);
  return emit<S>(x, std::move(y), x.segments(), x.requires_grad(), [px, slope](Node<S>& n) {
    px->accumulate(
        (px->value.array() > S(0)).select(n.grad.array(), n.grad.array() * slope).matrix());
  });
}

template <typename S>
Var<S> tanh(const Var<S>& x) {
  Node<S>* px = &x.node();
  return emit<S>(x, x.value().array().tanh().matrix(), x.segments(), x.requires_grad(),
                 [px](Node<S>& n) {
                   px->accumulate((n.grad.array() * (S(1) - n.value.array().square())).matrix());
                 });
}

template <typename S>
Var<S> sigmoid(const Var<S>& x) {
  Node<S>* px = &x.node();
  M<S> y = (S(1) / (S(1) + (-x.value().array()).exp())).matrix();
  return emit<S>(x, std::move(y), x.segments(), x.requires_grad(), [px](Node<S>& n) {
    px->accumulate((n.grad.array() * n.value.array() * (S(1) - n.value.array())).matrix());
  });
}

template <typename S>
Var<S> exp(const Var<S>& x) {
  Node<S>* px = &x.node();
  return emit<S>(x, x.value().array().exp().matrix(), x.segments(), x.requires_grad(),
                 [px](Node<S>& n) { px->accumulate(n.grad.cwiseProduct(n.value)); });
}

template <typename S>
Var<S> log(const Var<S>& x) {
  Node<S>* px = &x.node();
  return emit<S>(x, x.value().array().log().matrix(), x.segments(), x.requires_grad(),
                 [px](Node<S>& n) { px->accumulate(n.grad.cwiseQuotient(px->value)); });
}

template <typename S>
Var<S> sqrt(const Var<S>& x) {
  Node<S>* px = &x.node();
  return emit<S>(x, x.value().array().sqrt().matrix(), x.segments(), x.requires_grad(),
                 [px](Node<S>& n) {
                   px->accumulate((n.grad.array() / (S(2) * n.value.array())).matrix());
                 });
}

template <typename S>
Var<S> square(const Var<S>& x) {
  Node<S>* px = &x.node();
  return emit<S>(x, x.value().array().square().matrix(), x.segments(), x.requires_grad(),
                 [px](Node<S>& n) {
                   px->accumulate((S(2) * n.grad.array() * px->value.array()).matrix());
                 });
}

template <typename S>
Var<S> clamp_min(const Var<S>& x, S lo) {
  Node<S>* px = &x.node();
  return emit<S>(x, x.value().cwiseMax(lo), x.segments(), x.requires_grad(),
                 [px, lo](Node<S>& n) {
                   px->accumulate((px->value.array() > lo).select(n.grad.array(), S(0)).matrix());
                 });
}

template <typename S>
Var<S> softmax_cols(const Var<S>& x) {
  M<S> y = x.value();
  for (Index c = 0; c < y.cols(); ++c) {
    auto col = y.col(c);
    col.array() -= col.maxCoeff();
    col = col.array().exp().matrix();
    col /= col.sum();
  }
  Node<S>* px = &x.node();
  return emit<S>(x, std::move(y), x.segments(), x.requires_grad(), [px](Node<S>& n) {
    const M<S>& y = n.value;
    const Eigen::Matrix<S, 1, Eigen::Dynamic> dot = n.grad.cwiseProduct(y).colwise().sum();
    px->accumulate((y.array() * (n.grad.rowwise() - dot).array()).matrix());
  });
}

template <typename S>
Var<S> log_softmax_cols(const Var<S>& x) {
  M<S> y = x.value();
  for (Index c = 0; c < y.cols(); ++c) {
    auto col = y.col(c);
    const S m = col.maxCoeff();
    const S lse = m + std::log((col.array() - m).exp().sum());
    col.array() -= lse;
  }
  Node<S>* px = &x.node();
  return emit<S>(x, std::move(y), x.segments(), x.requires_grad(), [px](Node<S>& n) {
    const M<S> p = n.value.array().exp().matrix();
    const Eigen::Matrix<S, 1, Eigen::Dynamic> gsum = n.grad.colwise().sum();
    px->accumulate(n.grad - (p.array().rowwise() * gsum.array()).matrix());
  });
}

template <typename S>
Var<S> segment_softmax_rows(const Var<S>& x, std::span<const Index> lengths) {
  const Index B = x.segments();
  const Index T = x.segment_length();
  if (static_cast<Index>(lengths.size()) != B) throw ShapeError("segment_softmax_rows: lengths");
  std::vector<Index> lens(lengths.begin(), lengths.end());
  M<S> y = M<S>::Zero(x.rows(), x.cols());
  for (Index b = 0; b < B; ++b) {
    const Index len = lens[b];
    if (len < 1 || len > T) throw ShapeError("segment_softmax_rows: invalid length");
    auto in = x.value().middleCols(b * T, len);
    auto out = y.middleCols(b * T, len);
    const Col<S> m = in.rowwise().maxCoeff();
    out = (in.colwise() - m).array().exp().matrix();
    const Col<S> z = out.rowwise().sum();
    out.array().colwise() /= z.array();
  }
  Node<S>* px = &x.node();
  return emit<S>(x, std::move(y), B, x.requires_grad(), [px, lens, T](Node<S>& n) {
    M<S> gx = M<S>::Zero(n.grad.rows(), n.grad.cols());
    for (Index b = 0; b < static_cast<Index>(lens.size()); ++b) {
      const Index len = lens[b];
      auto yb = n.value.middleCols(b * T, len);
      auto gb = n.grad.middleCols(b * T, len);
      const Col<S> dot = gb.cwiseProduct(yb).rowwise().sum();
      gx.middleCols(b * T, len) = (yb.array() * (gb.colwise() - dot).array()).matrix();
    }
    px->accumulate(gx);
  });
}

template <typename S>
Var<S> layer_norm_cols(const Var<S>& x, const Var<S>& gain, const Var<S>& bias, S eps) {
  const Index R = x.rows();
  if (gain.rows() != R || bias.rows() != R || gain.cols() != 1 || bias.cols() != 1)
    throw ShapeError("layer_norm_cols: gain/bias shape");
  const Eigen::Matrix<S, 1, Eigen::Dynamic> mu = x.value().colwise().mean();
  M<S> centered = x.value().rowwise() - mu;
  const Eigen::Matrix<S, 1, Eigen::Dynamic> inv =
      (centered.array().square().colwise().mean() + eps).rsqrt();
  M<S> xhat = (centered.array().rowwise() * inv.array()).matrix();
  M<S> y = (xhat.array().colwise() * gain.value().col(0).array()).matrix();
  y.colwise() += bias.value().col(0);
  Node<S>* px = &x.node();
  Node<S>* pg = &gain.node();
  Node<S>* pb = &bias.node();
  return emit<S>(
      x, std::move(y), x.segments(), any_requires_grad<S>({x, gain, bias}),
      [px, pg, pb, xhat = std::move(xhat), inv](Node<S>& n) {
        if (pg->requires_grad) pg->accumulate(n.grad.cwiseProduct(xhat).rowwise().sum());
        if (pb->requires_grad) pb->accumulate(n.grad.rowwise().sum());
        if (px->requires_grad) {
          const M<S> gh = (n.grad.array().colwise() * pg->value.col(0).array()).matrix();
          const Eigen::Matrix<S, 1, Eigen::Dynamic> m1 = gh.colwise().mean();
          const Eigen::Matrix<S, 1, Eigen::Dynamic> m2 = gh.cwiseProduct(xhat).colwise().mean();
          M<S> gx = gh.rowwise() - m1;
          gx -= (xhat.array().rowwise() * m2.array()).matrix();
          gx = (gx.array().rowwise() * inv.array()).matrix();
          px->accumulate(gx);
        }
      });
}

template <typename S>
Var<S> batch_normalize_rows(const Var<S>& x, S eps, RowStatistics<S>* stats) {
  const Col<S> mu = x.value().rowwise().mean();
  M<S> centered = x.value().colwise() - mu;
  const Col<S> var = centered.array().square().rowwise().mean();
  const Col<S> inv = (var.array() + eps).rsqrt();
  M<S> xhat = (centered.array().colwise() * inv.array()).matrix();
  if (stats) {
    stats->mean = mu;
    stats->variance = var;
  }
  Node<S>* px = &x.node();
  return emit<S>(x, xhat, x.segments(), x.requires_grad(), [px, inv](Node<S>& n) {
    const M<S>& xhat = n.value;
    const Col<S> m1 = n.grad.rowwise().mean();
    const Col<S> m2 = n.grad.cwiseProduct(xhat).rowwise().mean();
    M<S> gx = n.grad.colwise() - m1;
    gx -= (xhat.array().colwise() * m2.array()).matrix();
    gx = (gx.array().colwise() * inv.array()).matrix();
    px->accumulate(gx);
  });
}

template <typename S>
Var<S> normalize_rows_fixed(const Var<S>& x, const RowStatistics<S>& stats, S eps) {
  if (stats.mean.size() != x.rows()) throw ShapeError("normalize_rows_fixed: statistics size");
  const Col<S> inv = (stats.variance.array() + eps).rsqrt();
  M<S> y = ((x.value().colwise() - stats.mean).array().colwise() * inv.array()).matrix();
  Node<S>* px = &x.node();
  return emit<S>(x, std::move(y), x.segments(), x.requires_grad(), [px, inv](Node<S>& n) {
    px->accumulate((n.grad.array().colwise() * inv.array()).matrix());
  });
}

template <typename S>
Var<S> l2_normalize_cols(const Var<S>& x, S eps) {
  const Eigen::Matrix<S, 1, Eigen::Dynamic> norm = x.value().colwise().norm().cwiseMax(eps);
  M<S> y = (x.value().array().rowwise() / norm.array()).matrix();
  Node<S>* px = &x.node();
  return emit<S>(x, std::move(y), x.segments(), x.requires_grad(), [px, norm](Node<S>& n) {
    const M<S>& y = n.value;
    const Eigen::Matrix<S, 1, Eigen::Dynamic> dot = n.grad.cwiseProduct(y).colwise().sum();
    M<S> gx = n.grad - (y.array().rowwise() * dot.array()).matrix();
    gx = (gx.array().rowwise() / norm.array()).matrix();
    px->accumulate(gx);
  });
}

template <typename S>
Var<S> conv1d(const Var<S>& x, const Var<S>& weight, const Var<S>* bias, const Conv1dSpec& spec) {
  const Index cin = x.rows();
  const Index B = x.segments();
  const Index tin = x.segment_length();
  if (weight.cols() != spec.kernel * cin)
    throw ShapeError("conv1d: weight has " + std::to_string(weight.cols()) + " columns, expected " +
                     std::to_string(spec.kernel * cin));
  const Index tout = spec.output_length(tin);
  if (tout < 1) throw ShapeError("conv1d: input too short for kernel");
  if (bias && (bias->rows() != weight.rows() || bias->cols() != 1))
    throw ShapeError("conv1d: bias shape");
  const bool pointwise = is_pointwise(spec);
  M<S> y = pointwise ? M<S>(weight.value() * x.value())
                     : M<S>(weight.value() * im2col(x.value(), B, spec));
  if (bias) y.colwise() += bias->value().col(0);
  Node<S>* px = &x.node();
  Node<S>* pw = &weight.node();
  Node<S>* pb = bias ? &bias->node() : nullptr;
  const bool rg = x.requires_grad() || weight.requires_grad() || (bias && bias->requires_grad());
  return emit<S>(x, std::move(y), B, rg, [px, pw, pb, spec, B, tin, pointwise](Node<S>& n) {
    if (pb && pb->requires_grad) pb->accumulate(n.grad.rowwise().sum());
    if (pointwise) {
      if (pw->requires_grad) pw->accumulate(n.grad * px->value.transpose());
      if (px->requires_grad) px->accumulate(pw->value.transpose() * n.grad);
      return;
    }
    if (pw->requires_grad) {
      const M<S> cols = im2col(px->value, B, spec);
      pw->accumulate(n.grad * cols.transpose());
    }
    if (px->requires_grad) {
      const M<S> gcols = pw->value.transpose() * n.grad;
      M<S> gx = M<S>::Zero(px->value.rows(), px->value.cols());
      col2im_add(gcols, B, tin, spec, gx);
      px->accumulate(gx);
    }
  });
}

template <typename S>
Var<S> conv_transpose1d(const Var<S>& x, const Var<S>& weight, const Var<S>* bias,
                        const ConvTranspose1dSpec& spec) {
  const Index cin = x.rows();
  const Index B = x.segments();
  const Index tin = x.segment_length();
  if (weight.cols() != cin || weight.rows() % spec.kernel != 0)
    throw ShapeError("conv_transpose1d: weight shape");
  const Index cout = weight.rows() / spec.kernel;
  const Index lout = spec.output_factor * tin;
  if (bias && (bias->rows() != cout || bias->cols() != 1))
    throw ShapeError("conv_transpose1d: bias shape");
  const M<S> ycols = weight.value() * x.value();
  M<S> y = M<S>::Zero(cout, B * lout);
  for (Index b = 0; b < B; ++b)
    for (Index t = 0; t < tin; ++t)
      for (Index k = 0; k < spec.kernel; ++k) {
        const Index pos = t * spec.stride + k - spec.crop_left;
        if (pos < 0 || pos >= lout) continue;
        y.col(b * lout + pos) += ycols.block(k * cout, b * tin + t, cout, 1);
      }
  if (bias) y.colwise() += bias->value().col(0);
  Node<S>* px = &x.node();
  Node<S>* pw = &weight.node();
  Node<S>* pb = bias ? &bias->node() : nullptr;
  const bool rg = x.requires_grad() || weight.requires_grad() || (bias && bias->requires_grad());
  return emit<S>(x, std::move(y), B, rg, [px, pw, pb, spec, B, tin, lout, cout](Node<S>& n) {
    if (pb && pb->requires_grad) pb->accumulate(n.grad.rowwise().sum());
    M<S> gcols = M<S>::Zero(spec.kernel * cout, B * tin);
    for (Index b = 0; b < B; ++b)
      for (Index t = 0; t < tin; ++t)
        for (Index k = 0; k < spec.kernel; ++k) {
          const Index pos = t * spec.stride + k - spec.crop_left;
          if (pos < 0 || pos >= lout) continue;
          gcols.block(k * cout, b * tin + t, cout, 1) = n.grad.col(b * lout + pos);
        }
    if (pw->requires_grad) pw->accumulate(gcols * px->value.transpose());
    if (px->requires_grad) px->accumulate(pw->value.transpose() * gcols);
  });
}

template <typename S>
Var<S> avg_pool1d(const Var<S>& x, Index kernel, Index stride, Index pad) {
  const Index B = x.segments();
  const Index tin = x.segment_length();
  const Index tout = (tin + 2 * pad - kernel) / stride + 1;
  if (tout < 1) throw ShapeError("avg_pool1d: input too short");
  M<S> y = M<S>::Zero(x.rows(), B * tout);
  const S w = S(1) / S(kernel);
  for (Index b = 0; b < B; ++b)
    for (Index to = 0; to < tout; ++to)
      for (Index k = 0; k < kernel; ++k) {
        const Index t = to * stride - pad + k;
        if (t < 0 || t >= tin) continue;
        y.col(b * tout + to) += w * x.value().col(b * tin + t);
      }
  Node<S>* px = &x.node();
  return emit<S>(x, std::move(y), B, x.requires_grad(),
                 [px, kernel, stride, pad, B, tin, tout, w](Node<S>& n) {
                   M<S> gx = M<S>::Zero(px->value.rows(), px->value.cols());
                   for (Index b = 0; b < B; ++b)
                     for (Index to = 0; to < tout; ++to)
                       for (Index k = 0; k < kernel; ++k) {
                         const Index t = to * stride - pad + k;
                         if (t < 0 || t >= tin) continue;
                         gx.col(b * tin + t) += w * n.grad.col(b * tout + to);
                       }
                   px->accumulate(gx);
                 });
}

template <typename S>
Var<S> gather(const Var<S>& x, std::span<const Index> index, Index rows, Index cols,
              Index segments) {
  if (static_cast<Index>(index.size()) != rows * cols) throw ShapeError("gather: index size");
  const Index n_in = x.value().size();
  std::vector<Index> idx(index.begin(), index.end());
  M<S> y(rows, cols);
  const S* src = x.value().data();
  S* dst = y.data();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const Index j = idx[i];
    if (j >= n_in) throw ShapeError("gather: index out of range");
    dst[i] = j < 0 ? S(0) : src[j];
  }
  Node<S>* px = &x.node();
  return emit<S>(x, std::move(y), segments, x.requires_grad(),
                 [px, idx = std::move(idx)](Node<S>& n) {
                   M<S> gx = M<S>::Zero(px->value.rows(), px->value.cols());
                   const S* g = n.grad.data();
                   S* out = gx.data();
                   for (std::size_t i = 0; i < idx.size(); ++i)
                     if (idx[i] >= 0) out[idx[i]] += g[i];
                   px->accumulate(gx);
                 });
}

template <typename S>
Var<S> concat_rows(std::span<const Var<S>> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  Index rows = 0;
  bool rg = false;
  for (const auto& p : parts) {
    if (p.cols() != parts[0].cols()) throw ShapeError("concat_rows: column mismatch");
    rows += p.rows();
    rg = rg || p.requires_grad();
  }
  M<S> y(rows, parts[0].cols());
  std::vector<Node<S>*> nodes;
  Index r = 0;
  for (const auto& p : parts) {
    y.middleRows(r, p.rows()) = p.value();
    r += p.rows();
    nodes.push_back(&p.node());
  }
  return emit<S>(parts[0], std::move(y), parts[0].segments(), rg, [nodes](Node<S>& n) {
    Index r = 0;
    for (Node<S>* p : nodes) {
      const Index pr = p->value.rows();
      p->accumulate(n.grad.middleRows(r, pr));
      r += pr;
    }
  });
}

template <typename S>
Var<S> concat_cols(std::span<const Var<S>> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  Index cols = 0;
  Index segments = 0;
  bool rg = false;
  for (const auto& p : parts) {
    if (p.rows() != parts[0].rows()) throw ShapeError("concat_cols: row mismatch");
    cols += p.cols();
    segments += p.segments();
    rg = rg || p.requires_grad();
  }
  M<S> y(parts[0].rows(), cols);
  std::vector<Node<S>*> nodes;
  Index c = 0;
  for (const auto& p : parts) {
    y.middleCols(c, p.cols()) = p.value();
    c += p.cols();
    nodes.push_back(&p.node());
  }
  return emit<S>(parts[0], std::move(y), segments, rg, [nodes](Node<S>& n) {
    Index c = 0;
    for (Node<S>* p : nodes) {
      const Index pc = p->value.cols();
      p->accumulate(n.grad.middleCols(c, pc));
      c += pc;
    }
  });
}

template <typename S>
Var<S> slice_rows(const Var<S>& x, Index start, Index count) {
  if (start < 0 || count < 1 || start + count > x.rows()) throw ShapeError("slice_rows: range");
  Node<S>* px = &x.node();
  return emit<S>(x, x.value().middleRows(start, count), x.segments(), x.requires_grad(),
                 [px, start, count](Node<S>& n) {
                   M<S> gx = M<S>::Zero(px->value.rows(), px->value.cols());
                   gx.middleRows(start, count) = n.grad;
                   px->accumulate(gx);
                 });
}

template <typename S>
Var<S> slice_cols(const Var<S>& x, Index start, Index count, Index segments) {
  if (start < 0 || count < 1 || start + count > x.cols()) throw ShapeError("slice_cols: range");
  Node<S>* px = &x.node();
  return emit<S>(x, x.value().middleCols(start, count), segments, x.requires_grad(),
                 [px, start, count](Node<S>& n) {
                   M<S> gx = M<S>::Zero(px->value.rows(), px->value.cols());
                   gx.middleCols(start, count) = n.grad;
                   px->accumulate(gx);
                 });
}

template <typename S>
Var<S> resegment(const Var<S>& x, Index segments) {
  Node<S>* px = &x.node();
  return emit<S>(x, x.value(), segments, x.requires_grad(),
                 [px](Node<S>& n) { px->accumulate(n.grad); });
}

template <typename S>
Var<S> sum(const Var<S>& x) {
  M<S> y(1, 1);
  y(0, 0) = x.value().sum();
  Node<S>* px = &x.node();
  return emit<S>(x, std::move(y), 1, x.requires_grad(), [px](Node<S>& n) {
    px->accumulate(M<S>::Constant(px->value.rows(), px->value.cols(), n.grad(0, 0)));
  });
}

template <typename S>
Var<S> mean(const Var<S>& x) {
  M<S> y(1, 1);
  const S count = S(x.value().size());
  y(0, 0) = x.value().sum() / count;
  Node<S>* px = &x.node();
  return emit<S>(x, std::move(y), 1, x.requires_grad(), [px, count](Node<S>& n) {
    px->accumulate(M<S>::Constant(px->value.rows(), px->value.cols(), n.grad(0, 0) / count));
  });
}

template <typename S>
Var<S> segment_sum(const Var<S>& x) {
  const Index B = x.segments();
  const Index T = x.segment_length();
  M<S> y(x.rows(), B);
  for (Index b = 0; b < B; ++b) y.col(b) = x.value().middleCols(b * T, T).rowwise().sum();
  Node<S>* px = &x.node();
  return emit<S>(x, std::move(y), B, x.requires_grad(), [px, B, T](Node<S>& n) {
    M<S> gx(px->value.rows(), px->value.cols());
    for (Index b = 0; b < B; ++b) gx.middleCols(b * T, T).colwise() = n.grad.col(b);
    px->accumulate(gx);
  });
}

template <typename S>
Var<S> mse(const Var<S>& a, const Var<S>& b) {
  require_same_shape(a, b, "mse");
  const S count = S(a.value().size());
  M<S> diff = a.value() - b.value();
  M<S> y(1, 1);
  y(0, 0) = diff.squaredNorm() / count;
  Node<S>* pa = &a.node();
  Node<S>* pb = &b.node();
  return emit<S>(a, std::move(y), 1, any_requires_grad<S>({a, b}),
                 [pa, pb, diff = std::move(diff), count](Node<S>& n) {
                   const S g = S(2) * n.grad(0, 0) / count;
                   if (pa->requires_grad) pa->accumulate(diff * g);
                   if (pb->requires_grad) pb->accumulate(diff * (-g));
                 });
}

template <typename S>
Var<S> l1(const Var<S>& a, const Var<S>& b) {
  require_same_shape(a, b, "l1");
  const S count = S(a.value().size());
  M<S> diff = a.value() - b.value();
  M<S> y(1, 1);
  y(0, 0) = diff.cwiseAbs().sum() / count;
  Node<S>* pa = &a.node();
  Node<S>* pb = &b.node();
  return emit<S>(a, std::move(y), 1, any_requires_grad<S>({a, b}),
                 [pa, pb, diff = std::move(diff), count](Node<S>& n) {
                   const S g = n.grad(0, 0) / count;
                   const M<S> sign = diff.array().sign().matrix();
                   if (pa->requires_grad) pa->accumulate(sign * g);
                   if (pb->requires_grad) pb->accumulate(sign * (-g));
                 });
}

template <typename S>
Var<S> weighted_sum(std::span<const Var<S>> terms, std::span<const S> weights) {
  if (terms.empty() || terms.size() != weights.size()) throw ShapeError("weighted_sum: sizes");
  M<S> y = M<S>::Zero(1, 1);
  bool rg = false;
  std::vector<Node<S>*> nodes;
  std::vector<S> w(weights.begin(), weights.end());
  for (std::size_t i = 0; i < terms.size(); ++i) {
    if (terms[i].rows() != 1 || terms[i].cols() != 1) throw ShapeError("weighted_sum: non-scalar");
    y(0, 0) += w[i] * terms[i].value()(0, 0);
    rg = rg || terms[i].requires_grad();
    nodes.push_back(&terms[i].node());
  }
  return emit<S>(terms[0], std::move(y), 1, rg, [nodes, w](Node<S>& n) {
    for (std::size_t i = 0; i < nodes.size(); ++i) nodes[i]->accumulate(n.grad * w[i]);
  });
}

template <typename S>
Var<S> mask_time(const Var<S>& x, std::span<const Index> lengths) {
  const Index B = x.segments();
  const Index T = x.segment_length();
  if (static_cast<Index>(lengths.size()) != B) throw ShapeError("mask_time: lengths");
  std::vector<Index> lens(lengths.begin(), lengths.end());
  M<S> y = x.value();
  for (Index b = 0; b < B; ++b)
    if (lens[b] < T) y.middleCols(b * T + lens[b], T - lens[b]).setZero();
  Node<S>* px = &x.node();
  return emit<S>(x, std::move(y), B, x.requires_grad(), [px, lens, T](Node<S>& n) {
    M<S> gx = n.grad;
    for (std::size_t b = 0; b < lens.size(); ++b)
      if (lens[b] < T) gx.middleCols(Index(b) * T + lens[b], T - lens[b]).setZero();
    px->accumulate(gx);
  });
}

#define WTV_INSTANTIATE_AD(S)                                                                  \
  template Var<S> add(const Var<S>&, const Var<S>&);                                           \
  template Var<S> sub(const Var<S>&, const Var<S>&);                                           \
  template Var<S> mul(const Var<S>&, const Var<S>&);                                           \
  template Var<S> scale(const Var<S>&, S);                                                     \
  template Var<S> add_scalar(const Var<S>&, S);                                                \
  template Var<S> add_bias(const Var<S>&, const Var<S>&);                                      \
  template Var<S> add_segments(const Var<S>&, const Var<S>&);                                  \
  template Var<S> mul_segments(const Var<S>&, const Var<S>&);                                  \
  template Var<S> matmul(const Var<S>&, const Var<S>&);                                        \
  template Var<S> transpose(const Var<S>&);                                                    \
  template Var<S> relu(const Var<S>&);                                                         \
  template Var<S> leaky_relu(const Var<S>&, S);                                                \
  template Var<S> tanh(const Var<S>&);                                                         \
  template Var<S> sigmoid(const Var<S>&);                                                      \
  template Var<S> exp(const Var<S>&);                                                          \
  template Var<S> log(const Var<S>&);                                                          \
  template Var<S> sqrt(const Var<S>&);                                                         \
  template Var<S> square(const Var<S>&);                                                       \
  template Var<S> clamp_min(const Var<S>&, S);                                                 \
  template Var<S> softmax_cols(const Var<S>&);                                                 \
  template Var<S> log_softmax_cols(const Var<S>&);                                             \
  template Var<S> segment_softmax_rows(const Var<S>&, std::span<const Index>);                 \
  template Var<S> layer_norm_cols(const Var<S>&, const Var<S>&, const Var<S>&, S);             \
  template Var<S> batch_normalize_rows(const Var<S>&, S, RowStatistics<S>*);                   \
  template Var<S> normalize_rows_fixed(const Var<S>&, const RowStatistics<S>&, S);             \
  template Var<S> l2_normalize_cols(const Var<S>&, S);                                         \
  template Var<S> conv1d(const Var<S>&, const Var<S>&, const Var<S>*, const Conv1dSpec&);      \
  template Var<S> conv_transpose1d(const Var<S>&, const Var<S>&, const Var<S>*,                \
                                   const ConvTranspose1dSpec&);                                \
  template Var<S> avg_pool1d(const Var<S>&, Index, Index, Index);                              \
  template Var<S> gather(const Var<S>&, std::span<const Index>, Index, Index, Index);          \
  template Var<S> concat_rows(std::span<const Var<S>>);                                        \
  template Var<S> concat_cols(std::span<const Var<S>>);                                        \
  template Var<S> slice_rows(const Var<S>&, Index, Index);                                     \
  template Var<S> slice_cols(const Var<S>&, Index, Index, Index);                              \
  template Var<S> resegment(const Var<S>&, Index);                                             \
  template Var<S> sum(const Var<S>&);                                                          \
  template Var<S> mean(const Var<S>&);                                                         \
  template Var<S> segment_sum(const Var<S>&);                                                  \
  template Var<S> mse(const Var<S>&, const Var<S>&);                                           \
  template Var<S> l1(const Var<S>&, const Var<S>&);                                            \
  template Var<S> weighted_sum(std::span<const Var<S>>, std::span<const S>);                   \
  template Var<S> mask_time(const Var<S>&, std::span<const Index>);

WTV_INSTANTIATE_AD(float)
WTV_INSTANTIATE_AD(double)

#undef WTV_INSTANTIATE_AD

}  // namespace wtv::ad
