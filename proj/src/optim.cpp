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

#include "wtv/optim.hpp"

#include <algorithm>
#include <cmath>

namespace wtv {

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::kLamb ? "lamb" : "adamw"; }

OptimizerKind optimizer_kind_from_string(const std::string& name) {
  if (name == "lamb") return OptimizerKind::kLamb;
  if (name == "adamw") return OptimizerKind::kAdamW;
  throw ConfigError("unknown optimizer '" + name + "'");
}

void OptimizerSpec::validate() const {
  if (!(lr > 0)) throw ConfigError("lr must be positive");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) throw ConfigError("betas must be in [0, 1)");
  if (!(eps > 0)) throw ConfigError("eps must be positive");
  if (!(weight_decay >= 0)) throw ConfigError("weight_decay must be non-negative");
  if (!(per_epoch_decay > 0 && per_epoch_decay <= 1)) throw ConfigError("per_epoch_decay must be in (0, 1]");
  if (!(clip_norm >= 0)) throw ConfigError("clip_norm must be non-negative");
  if (warmup_steps < 0) throw ConfigError("warmup_steps must be non-negative");
}

double OptimizerSpec::lr_at_epoch(std::int64_t epoch) const {
  return lr * std::pow(per_epoch_decay, static_cast<double>(epoch));
}

double OptimizerSpec::warmup_scale(std::int64_t step) const {
  if (warmup_steps == 0) return 1.0;
  const double s = static_cast<double>(step + 1), w = static_cast<double>(warmup_steps);
  return std::min(1.0 / std::sqrt(s), s * std::pow(w, -1.5));
}

OptimizerSpec text2vec_optimizer() {
  OptimizerSpec s;
  s.algorithm = OptimizerKind::kLamb;
  s.lr = 0.1;
  s.beta1 = 0.9;
  s.beta2 = 0.98;
  s.eps = 1e-9;
  s.weight_decay = 0.0;
  s.per_epoch_decay = 1.0;
  s.clip_norm = 1000.0;
  s.warmup_steps = 1000;
  return s;
}

OptimizerSpec vec2wav_optimizer() {
  OptimizerSpec s;
  s.algorithm = OptimizerKind::kAdamW;
  s.lr = 2e-4;
  s.beta1 = 0.8;
  s.beta2 = 0.99;
  s.eps = 1e-8;
  s.weight_decay = 0.01;
  s.per_epoch_decay = 0.999;
  return s;
}

OptimizerSpec finetune_spec(OptimizerSpec spec) {
  spec.lr /= 10.0;
  return spec;
}

template <typename Scalar>
double global_grad_norm(const nn::ParameterSet<Scalar>& params) {
  double sq = 0;
  for (const auto& [name, p] : params.params())
    if (p.grad.size()) sq += p.grad.template cast<double>().squaredNorm();
  return std::sqrt(sq);
}

template <typename Scalar>
double clip_grad_norm(nn::ParameterSet<Scalar>& params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (max_norm > 0 && norm > max_norm) {
    const Scalar factor = static_cast<Scalar>(max_norm / (norm + 1e-6));
    for (auto& [name, p] : params.params())
      if (p.grad.size()) p.grad *= factor;
  }
  return norm;
}

template <typename Scalar>
Optimizer<Scalar>::Optimizer(const OptimizerSpec& spec) : spec_(spec) {
  spec_.validate();
}

template <typename Scalar>
void Optimizer<Scalar>::reset() {
  t_ = 0;
  slots_.clear();
}

template <typename Scalar>
void Optimizer<Scalar>::step(nn::ParameterSet<Scalar>& params, double lr) {
  if (!(lr > 0)) throw PreconditionError("learning rate must be positive");
  if (spec_.clip_norm > 0) clip_grad_norm(params, spec_.clip_norm);
  ++t_;
  const Scalar b1 = static_cast<Scalar>(spec_.beta1), b2 = static_cast<Scalar>(spec_.beta2);
  const Scalar eps = static_cast<Scalar>(spec_.eps), wd = static_cast<Scalar>(spec_.weight_decay);
  const Scalar lr_s = static_cast<Scalar>(lr);
  const Scalar bc1 = Scalar(1) - static_cast<Scalar>(std::pow(spec_.beta1, static_cast<double>(t_)));
  const Scalar bc2 = Scalar(1) - static_cast<Scalar>(std::pow(spec_.beta2, static_cast<double>(t_)));

  for (auto& [name, p] : params.params()) {
    if (p.grad.size() == 0) p.zero_grad();
    auto [it, fresh] = slots_.try_emplace(name);
    Slot& s = it->second;
    if (fresh || s.m.rows() != p.value.rows() || s.m.cols() != p.value.cols()) {
      s.m = Matrix::Zero(p.value.rows(), p.value.cols());
      s.v = Matrix::Zero(p.value.rows(), p.value.cols());
    }
    s.m = b1 * s.m + (Scalar(1) - b1) * p.grad;
    s.v = b2 * s.v + (Scalar(1) - b2) * p.grad.cwiseProduct(p.grad);
    const Matrix m_hat = s.m / bc1;
    const Matrix v_hat = s.v / bc2;
    const Matrix adam = m_hat.array() / (v_hat.array().sqrt() + eps);

    if (spec_.algorithm == OptimizerKind::kAdamW) {
      p.value *= Scalar(1) - lr_s * wd;
      p.value -= lr_s * adam;
    } else {
      const Matrix u = adam + wd * p.value;
      const Scalar w_norm = p.value.norm();
      const Scalar u_norm = u.norm();
      const Scalar trust = (w_norm > 0 && u_norm > 0) ? w_norm / u_norm : Scalar(1);
      p.value -= (lr_s * trust) * u;
    }
  }
}

template class Optimizer<float>;
template class Optimizer<double>;
template double global_grad_norm(const nn::ParameterSet<float>&);
template double global_grad_norm(const nn::ParameterSet<double>&);
template double clip_grad_norm(nn::ParameterSet<float>&, double);
template double clip_grad_norm(nn::ParameterSet<double>&, double);

}  // namespace wtv
