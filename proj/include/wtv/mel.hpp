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

// Log-mel spectrogram analysis. The short-time transform is a dense product
// with a windowed DFT basis so the same code path serves plain analysis and
// the differentiable reconstruction loss.

#ifndef WTV_MEL_HPP_
#define WTV_MEL_HPP_

#include <Eigen/Dense>

#include <vector>

#include "wtv/autodiff.hpp"
#include "wtv/core.hpp"

namespace wtv {

enum class FramePadding {
  // Reflect-pad n_fft/2 on both sides; frames = 1 + floor(L / hop).
  kReflectCenter,
  // No padding; frames = 1 + floor((L - win) / hop).
  kNone,
  // Frame t starts at t * hop and is zero-padded past the end;
  // frames = floor(L / hop).
  kZeroEnd,
};

struct MelConfig {
  int sample_rate = kOutputRate;
  int n_fft = 1024;
  int hop = 256;
  int win = 1024;
  int n_mels = 80;
  double fmin = 0.0;
  double fmax = 16000.0;
  FramePadding padding = FramePadding::kReflectCenter;
  // Mel magnitudes are floored here before the log.
  double log_floor = 1e-5;
  // Added to the power spectrum before the square root.
  double power_eps = 1e-14;
};

// 32 kHz analysis shared by the reconstruction loss and the decoder's
// speaker encoder: 1024-point FFT, hop 256, 80 bands up to 16 kHz.
MelConfig decoder_mel_config();
// 16 kHz analysis used by the mock feature extractor: 25 ms window, 20 ms hop.
MelConfig extractor_mel_config();

double hz_to_mel(double hz);
double mel_to_hz(double mel);
// Center frequency of each band (Hz).
std::vector<double> mel_band_centers(const MelConfig& config);

template <typename Scalar>
class MelAnalyzer {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  explicit MelAnalyzer(const MelConfig& config);

  const MelConfig& config() const { return config_; }
  Eigen::Index num_frames(Eigen::Index num_samples) const;
  // Smallest accepted input length.
  Eigen::Index min_samples() const;

  // n_mels x frames log-mel matrix.
  Matrix log_mel(const Eigen::Ref<const Vector>& signal) const;
  // Differentiable form: `wave` is 1 x (B * L) with B segments; the result is
  // n_mels x (B * frames) with B segments.
  ad::Var<Scalar> log_mel(const ad::Var<Scalar>& wave) const;

  const Matrix& filterbank() const { return filterbank_; }

 private:
  // Flat source index of every frame sample (-1 for zero padding), laid out
  // n_fft x frames column-major, for one segment of length L at offset.
  std::vector<Eigen::Index> frame_index(Eigen::Index length, Eigen::Index offset) const;

  MelConfig config_;
  Matrix basis_;       // (2 * bins) x n_fft: windowed cosine rows then sine rows
  Matrix filterbank_;  // n_mels x bins
  Eigen::Index bins_ = 0;
};

// Log-mel of a 32 kHz waveform with the decoder configuration.
Eigen::MatrixXf compute_mel(const Waveform& w);

extern template class MelAnalyzer<float>;
extern template class MelAnalyzer<double>;

}  // namespace wtv

#endif  // WTV_MEL_HPP_
