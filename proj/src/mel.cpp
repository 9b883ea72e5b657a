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

#include "wtv/mel.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace wtv {

MelConfig decoder_mel_config() { return MelConfig{}; }

MelConfig extractor_mel_config() {
  MelConfig c;
  c.sample_rate = kExtractorRate;
  c.n_fft = 512;
  c.win = 400;
  c.hop = kExtractorHop;
  c.n_mels = 80;
  c.fmin = 0.0;
  c.fmax = 8000.0;
  c.padding = FramePadding::kZeroEnd;
  return c;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> mel_band_centers(const MelConfig& config) {
  const double lo = hz_to_mel(config.fmin);
  const double hi = hz_to_mel(config.fmax);
  std::vector<double> centers(static_cast<std::size_t>(config.n_mels));
  for (int m = 0; m < config.n_mels; ++m)
    centers[static_cast<std::size_t>(m)] = mel_to_hz(lo + (hi - lo) * (m + 1) / (config.n_mels + 1));
  return centers;
}

template <typename Scalar>
MelAnalyzer<Scalar>::MelAnalyzer(const MelConfig& config) : config_(config) {
  if (config.n_fft < 2 || config.win < 1 || config.win > config.n_fft || config.hop < 1 ||
      config.n_mels < 1 || !(config.fmax > config.fmin) || config.fmax > config.sample_rate / 2.0)
    throw ConfigError("invalid mel configuration");
  const int n_fft = config.n_fft;
  bins_ = n_fft / 2 + 1;

  // Periodic Hann window of length win, centered in the FFT frame.
  Eigen::VectorXd window = Eigen::VectorXd::Zero(n_fft);
  const int offset = (n_fft - config.win) / 2;
  for (int i = 0; i < config.win; ++i)
    window(offset + i) = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / config.win);

  Eigen::MatrixXd basis(2 * bins_, n_fft);
  for (Eigen::Index k = 0; k < bins_; ++k)
    for (int n = 0; n < n_fft; ++n) {
      // Reduce k * n modulo n_fft so the phase stays exact for large products.
      const double phase = 2.0 * std::numbers::pi * static_cast<double>((k * n) % n_fft) / n_fft;
      basis(k, n) = std::cos(phase) * window(n);
      basis(bins_ + k, n) = -std::sin(phase) * window(n);
    }
  basis_ = basis.cast<Scalar>();

  const double lo = hz_to_mel(config.fmin);
  const double hi = hz_to_mel(config.fmax);
  std::vector<double> edges(static_cast<std::size_t>(config.n_mels + 2));
  for (int i = 0; i < config.n_mels + 2; ++i)
    edges[static_cast<std::size_t>(i)] = mel_to_hz(lo + (hi - lo) * i / (config.n_mels + 1));
  Eigen::MatrixXd fb = Eigen::MatrixXd::Zero(config.n_mels, bins_);
  for (int m = 0; m < config.n_mels; ++m) {
    const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
    for (Eigen::Index k = 0; k < bins_; ++k) {
      const double f = static_cast<double>(k) * config.sample_rate / n_fft;
      double w = 0.0;
      if (f > left && f <= center)
        w = (f - left) / (center - left);
      else if (f > center && f < right)
        w = (right - f) / (right - center);
      fb(m, k) = w;
    }
  }
  filterbank_ = fb.cast<Scalar>();
}

template <typename Scalar>
Eigen::Index MelAnalyzer<Scalar>::num_frames(Eigen::Index num_samples) const {
  switch (config_.padding) {
    case FramePadding::kReflectCenter: return 1 + num_samples / config_.hop;
    case FramePadding::kNone:
      return num_samples < config_.win ? 0 : 1 + (num_samples - config_.win) / config_.hop;
    case FramePadding::kZeroEnd: return num_samples / config_.hop;
  }
  return 0;
}

template <typename Scalar>
Eigen::Index MelAnalyzer<Scalar>::min_samples() const {
  switch (config_.padding) {
    case FramePadding::kReflectCenter: return config_.win;
    case FramePadding::kNone: return config_.win;
    case FramePadding::kZeroEnd: return config_.hop;
  }
  return config_.win;
}

template <typename Scalar>
std::vector<Eigen::Index> MelAnalyzer<Scalar>::frame_index(Eigen::Index length,
                                                           Eigen::Index offset) const {
  const Eigen::Index frames = num_frames(length);
  const int n_fft = config_.n_fft;
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(frames * n_fft));
  const Eigen::Index half = n_fft / 2;
  for (Eigen::Index f = 0; f < frames; ++f)
    for (int n = 0; n < n_fft; ++n) {
      Eigen::Index src = -1;
      switch (config_.padding) {
        case FramePadding::kReflectCenter: {
          Eigen::Index p = f * config_.hop + n - half;
          if (p < 0) p = -p;
          if (p >= length) p = 2 * (length - 1) - p;
          src = p;
          break;
        }
        case FramePadding::kNone: {
          const Eigen::Index p = f * config_.hop + n - (n_fft - config_.win) / 2;
          src = (p >= 0 && p < length) ? p : -1;
          break;
        }
        case FramePadding::kZeroEnd: {
          const Eigen::Index p = f * config_.hop + n - (n_fft - config_.win) / 2;
          src = (p >= 0 && p < length) ? p : -1;
          break;
        }
      }
      idx[static_cast<std::size_t>(f * n_fft + n)] = src < 0 ? -1 : src + offset;
    }
  return idx;
}

template <typename Scalar>
typename MelAnalyzer<Scalar>::Matrix MelAnalyzer<Scalar>::log_mel(
    const Eigen::Ref<const Vector>& signal) const {
  const Eigen::Index L = signal.size();
  if (L < min_samples())
    throw PreconditionError("signal of " + std::to_string(L) + " samples is shorter than " +
                            std::to_string(min_samples()));
  if (config_.padding == FramePadding::kReflectCenter && L <= config_.n_fft / 2)
    throw PreconditionError("signal too short for reflect padding");
  const auto idx = frame_index(L, 0);
  const Eigen::Index frames = num_frames(L);
  Matrix framed(config_.n_fft, frames);
  for (std::size_t i = 0; i < idx.size(); ++i)
    framed.data()[i] = idx[i] < 0 ? Scalar(0) : signal(idx[i]);
  const Matrix spec = basis_ * framed;
  const Matrix power = spec.topRows(bins_).array().square() + spec.bottomRows(bins_).array().square();
  const Matrix mag = (power.array() + Scalar(config_.power_eps)).sqrt().matrix();
  const Matrix mel = filterbank_ * mag;
  return mel.cwiseMax(Scalar(config_.log_floor)).array().log().matrix();
}

template <typename Scalar>
ad::Var<Scalar> MelAnalyzer<Scalar>::log_mel(const ad::Var<Scalar>& wave) const {
  if (wave.rows() != 1) throw ShapeError("log_mel expects a 1 x L waveform");
  const Eigen::Index B = wave.segments();
  const Eigen::Index L = wave.segment_length();
  if (L < min_samples() || (config_.padding == FramePadding::kReflectCenter && L <= config_.n_fft / 2))
    throw PreconditionError("waveform too short for mel analysis");
  const Eigen::Index frames = num_frames(L);
  std::vector<Eigen::Index> idx;
  idx.reserve(static_cast<std::size_t>(B * frames * config_.n_fft));
  for (Eigen::Index b = 0; b < B; ++b) {
    const auto part = frame_index(L, b * L);
    idx.insert(idx.end(), part.begin(), part.end());
  }
  ad::Tape<Scalar>& tape = wave.tape();
  const auto framed = ad::gather(wave, std::span<const Eigen::Index>(idx), config_.n_fft, B * frames, B);
  const auto spec = ad::matmul(tape.constant(basis_), framed);
  const auto power = ad::add(ad::square(ad::slice_rows(spec, 0, bins_)),
                             ad::square(ad::slice_rows(spec, bins_, bins_)));
  const auto mag = ad::sqrt(ad::add_scalar(power, Scalar(config_.power_eps)));
  const auto mel = ad::matmul(tape.constant(filterbank_), mag);
  return ad::log(ad::clamp_min(mel, Scalar(config_.log_floor)));
}

Eigen::MatrixXf compute_mel(const Waveform& w) {
  if (w.sample_rate != kOutputRate)
    throw ValidationError("mel analysis expects 32000 Hz audio, got " + std::to_string(w.sample_rate));
  static const MelAnalyzer<float> analyzer(decoder_mel_config());
  return analyzer.log_mel(w.samples);
}

template class MelAnalyzer<float>;
template class MelAnalyzer<double>;

}  // namespace wtv
