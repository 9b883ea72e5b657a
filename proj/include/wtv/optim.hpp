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

// LAMB and AdamW over a ParameterSet, with per-tensor state keyed by
// parameter name.

#ifndef WTV_OPTIM_HPP_
#define WTV_OPTIM_HPP_

#include <cstdint>
#include <map>
#include <string>

#include "wtv/nn.hpp"

namespace wtv {

enum class OptimizerKind { kLamb, kAdamW };

std::string to_string(OptimizerKind kind);
OptimizerKind optimizer_kind_from_string(const std::string& name);

struct OptimizerSpec {
  OptimizerKind algorithm = OptimizerKind::kAdamW;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  // Multiplier applied to lr once per epoch; 1 disables decay.
  double per_epoch_decay = 1.0;
  // Global gradient-norm clip; 0 disables it.
  double clip_norm = 0.0;
  // Inverse square-root schedule with linear warmup over this many steps:
  // lr * min((s + 1)^-0.5, (s + 1) warmup^-1.5). 0 disables it.
  std::int64_t warmup_steps = 0;

  void validate() const;
  double lr_at_epoch(std::int64_t epoch) const;
  double warmup_scale(std::int64_t step) const;
};

OptimizerSpec text2vec_optimizer();
OptimizerSpec vec2wav_optimizer();
// Same settings with a ten times smaller initial learning rate.
OptimizerSpec finetune_spec(OptimizerSpec spec);

template <typename Scalar>
double global_grad_norm(const nn::ParameterSet<Scalar>& params);
// Scales every gradient by max_norm / norm when the global norm exceeds
// max_norm. Returns the norm before clipping.
template <typename Scalar>
double clip_grad_norm(nn::ParameterSet<Scalar>& params, double max_norm);

template <typename Scalar>
class Optimizer {
 public:
  using Matrix = nn::Matrix<Scalar>;
  struct Slot {
    Matrix m;
    Matrix v;
  };

  explicit Optimizer(const OptimizerSpec& spec);

  const OptimizerSpec& spec() const { return spec_; }
  // One update of every parameter using its accumulated gradient. Clipping
  // (if configured) is applied first.
  void step(nn::ParameterSet<Scalar>& params, double lr);
  void reset();

  std::int64_t steps() const { return t_; }
  void set_steps(std::int64_t t) { t_ = t; }
  std::map<std::string, Slot>& slots() { return slots_; }
  const std::map<std::string, Slot>& slots() const { return slots_; }

 private:
  OptimizerSpec spec_;
  std::int64_t t_ = 0;
  std::map<std::string, Slot> slots_;
};

extern template class Optimizer<float>;
extern template class Optimizer<double>;

}  // namespace wtv

#endif  // WTV_OPTIM_HPP_
