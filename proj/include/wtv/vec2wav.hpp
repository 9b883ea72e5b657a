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

// Feature-to-waveform GAN.
//
// The generator upsamples 50 Hz feature frames by 640 through transposed
// convolutions, each followed by a conditional batch normalization and a
// multi-receptive-field block of dilated residual convolutions. Conditioning
// is concat(speaker embedding, noise). The speaker embedding comes from a
// small ECAPA-style encoder over the decoder mel spectrogram, trained with
// the generator.
//
// Discriminators follow the usual multi-period plus multi-scale layout. The
// generator (with its speaker encoder) and the discriminators live in two
// separate parameter sets so they can be stepped by separate optimizers.

#ifndef WTV_VEC2WAV_HPP_
#define WTV_VEC2WAV_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "wtv/core.hpp"
#include "wtv/mel.hpp"
#include "wtv/nn.hpp"

namespace wtv {

struct Vec2WavConfig {
  std::vector<int> upsample_rates{5, 4, 4, 2, 2, 2};
  std::vector<int> upsample_kernels{11, 8, 8, 4, 4, 4};
  std::vector<int> resblock_kernels{3, 7, 11};
  std::vector<std::vector<int>> resblock_dilations{{1, 3, 5}, {1, 3, 5}, {1, 3, 5}};
  int base_channels = 512;
  // Floor for the halving channel schedule; 1 leaves it unconstrained.
  int min_channels = 1;
  std::vector<int> mpd_periods{2, 3, 5, 7, 11, 13, 17, 19};
  int msd_scales = 3;
  std::vector<int> mpd_channels{32, 128, 512, 1024, 1024};
  std::vector<int> msd_channels{128, 128, 256, 512, 1024, 1024, 1024};
  int noise_dim = 64;
  int speaker_dim = kSpeakerDim;
  int feature_dim = kFeatureDim;
  int output_rate = kOutputRate;
  int speaker_channels = 512;
  int speaker_attention = 128;
  double cbn_momentum = 0.1;
  double cbn_eps = 1e-5;
  double leaky_slope = 0.1;
  double lambda_fm = 2.0;
  double lambda_mel = 45.0;

  void validate() const;
  int upsample_factor() const;
  // Channels entering stage `i`; stage_channels(num_stages) feeds conv_post.
  int stage_channels(int i) const;
  int num_stages() const { return static_cast<int>(upsample_rates.size()); }
  int num_subdiscriminators() const { return static_cast<int>(mpd_periods.size()) + msd_scales; }
};

struct NoiseVector {
  Eigen::VectorXf values;
};

NoiseVector sample_noise(int dim, nn::Rng& rng);

template <typename Scalar>
struct SubDiscriminatorOutput {
  std::string name;
  ad::Var<Scalar> score;
  std::vector<ad::Var<Scalar>> features;  // last entry is the score map
};

template <typename Scalar>
using DiscriminatorScores = std::vector<SubDiscriminatorOutput<Scalar>>;

// Reflect-pads on the right to a multiple of `period` and folds into a
// period x (L' / period) grid; row j holds samples j, j + period, ...
Eigen::MatrixXf mpd_grid(const Eigen::VectorXf& samples, int period);
// Flat gather indices doing the same fold for a batch of `segments` equal
// length waveforms; the result has segments * period sequences.
std::vector<Eigen::Index> mpd_fold_index(Eigen::Index length, int period, Eigen::Index segments);

// y = gamma(c) * normalize(x) + beta(c) with c = concat(speaker, noise).
// gamma and beta come from per-site linear maps; the gamma map carries a
// unit bias so an all-zero weight matrix gives plain batch normalization.
struct ConditionalBatchNorm {
  std::string name;
  Eigen::Index channels = 0;
  Eigen::Index cond_dim = 0;

  template <typename Scalar>
  void init(nn::ParameterSet<Scalar>& ps, nn::Rng& rng, double stddev = 0.01) const;

  template <typename Scalar>
  ad::Var<Scalar> operator()(nn::Scope<Scalar>& s, const ad::Var<Scalar>& x, const ad::Var<Scalar>& cond,
                             double momentum, double eps) const;
};

template <typename Scalar>
class Vec2Wav {
 public:
  using Matrix = nn::Matrix<Scalar>;
  using Var = ad::Var<Scalar>;
  using Scope = nn::Scope<Scalar>;

  Vec2Wav(const Vec2WavConfig& config, std::uint64_t seed);

  const Vec2WavConfig& config() const { return config_; }
  nn::ParameterSet<Scalar>& generator_params() { return gen_; }
  const nn::ParameterSet<Scalar>& generator_params() const { return gen_; }
  nn::ParameterSet<Scalar>& discriminator_params() { return disc_; }
  const nn::ParameterSet<Scalar>& discriminator_params() const { return disc_; }

  // Graph builders. Scopes must wrap the matching parameter set.
  // mel: n_mels x (B * F); returns speaker_dim x B, unit columns.
  Var speaker_encoder(Scope& g, const Var& mel, std::span<const Eigen::Index> lengths) const;
  // features: feature_dim x (B * T), speaker: speaker_dim x B, noise: noise_dim x B.
  // Returns 1 x (B * 640 T) in (-1, 1).
  Var generator(Scope& g, const Var& features, const Var& speaker, const Var& noise) const;
  // wave: 1 x (B * L). MPD outputs first in period order, then MSD scales.
  DiscriminatorScores<Scalar> discriminate(Scope& d, const Var& wave) const;
  SubDiscriminatorOutput<Scalar> period_discriminator(Scope& d, const Var& wave, int period) const;
  SubDiscriminatorOutput<Scalar> scale_discriminator(Scope& d, const Var& wave, int scale) const;

  // Value-level API, inference mode (running CBN statistics).
  Waveform generate(const FeatureSequence& features, const SpeakerEmbedding& speaker,
                    const NoiseVector& noise) const;
  // mel: n_mels x F. `valid_frames` < 0 uses every frame.
  SpeakerEmbedding speaker_embed_mel(const Eigen::MatrixXf& mel, Eigen::Index valid_frames = -1) const;
  SpeakerEmbedding speaker_embed(const Waveform& audio) const;

 private:
  Var resblock(Scope& g, int stage, std::size_t kernel_index, Var x) const;

  Vec2WavConfig config_;
  nn::ParameterSet<Scalar> gen_;
  nn::ParameterSet<Scalar> disc_;
};

// Least-squares GAN objectives, summed over sub-discriminators.
template <typename Scalar>
ad::Var<Scalar> discriminator_loss(const DiscriminatorScores<Scalar>& real, const DiscriminatorScores<Scalar>& fake);
template <typename Scalar>
ad::Var<Scalar> generator_adv_loss(const DiscriminatorScores<Scalar>& fake);
// lambda * sum over sub-discriminators and layers of mean |real - fake|.
template <typename Scalar>
ad::Var<Scalar> feature_matching_loss(const DiscriminatorScores<Scalar>& real, const DiscriminatorScores<Scalar>& fake,
                                      Scalar lambda = Scalar(2));

double mel_weight_schedule(std::int64_t step, std::int64_t total_steps, double lambda0);

// Mean absolute difference of decoder log-mel spectrograms.
double mel_reconstruction_loss(const Waveform& real, const Waveform& fake);
// Graph version: fake is 1 x (B * L) with B segments, real_mel is the
// stacked log-mel of the matching real audio.
template <typename Scalar>
ad::Var<Scalar> mel_reconstruction_loss(const MelAnalyzer<Scalar>& analyzer, const ad::Var<Scalar>& fake,
                                        const nn::Matrix<Scalar>& real_mel);

extern template class Vec2Wav<float>;
extern template class Vec2Wav<double>;

}  // namespace wtv

#endif  // WTV_VEC2WAV_HPP_
