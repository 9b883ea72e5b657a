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

#include "wtv/vec2wav.hpp"

#include <algorithm>
#include <cmath>

namespace wtv {

using Eigen::Index;

void Vec2WavConfig::validate() const {
  if (upsample_rates.empty() || upsample_rates.size() != upsample_kernels.size())
    throw ConfigError("upsample_rates and upsample_kernels must have the same non-zero length");
  for (std::size_t i = 0; i < upsample_rates.size(); ++i) {
    if (upsample_rates[i] < 1) throw ConfigError("upsample rates must be positive");
    if (upsample_kernels[i] < upsample_rates[i]) throw ConfigError("each upsample kernel must cover its rate");
    if ((upsample_kernels[i] - upsample_rates[i]) % 2 != 0)
      throw ConfigError("upsample kernel minus rate must be even");
  }
  if (upsample_factor() != kOutputRate / kFrameRateHz)
    throw ConfigError("upsample rates must multiply to " + std::to_string(kOutputRate / kFrameRateHz));
  if (resblock_kernels.empty() || resblock_kernels.size() != resblock_dilations.size())
    throw ConfigError("one dilation list per resblock kernel is required");
  for (int k : resblock_kernels)
    if (k < 1 || k % 2 == 0) throw ConfigError("resblock kernels must be odd");
  for (const auto& ds : resblock_dilations)
    if (ds.empty() || std::any_of(ds.begin(), ds.end(), [](int d) { return d < 1; }))
      throw ConfigError("resblock dilations must be positive");
  if (base_channels < 1 || min_channels < 1) throw ConfigError("channel counts must be positive");
  for (int p : {13, 17, 19})
    if (std::find(mpd_periods.begin(), mpd_periods.end(), p) == mpd_periods.end())
      throw ConfigError("mpd_periods must include 13, 17 and 19");
  if (std::any_of(mpd_periods.begin(), mpd_periods.end(), [](int p) { return p < 1; }))
    throw ConfigError("periods must be positive");
  if (msd_scales < 1) throw ConfigError("msd_scales must be positive");
  if (mpd_channels.size() != 5) throw ConfigError("mpd_channels needs 5 entries");
  if (msd_channels.size() != 7) throw ConfigError("msd_channels needs 7 entries");
  for (int c : mpd_channels)
    if (c < 1) throw ConfigError("mpd channels must be positive");
  for (int c : msd_channels)
    if (c < 1) throw ConfigError("msd channels must be positive");
  if (noise_dim < 1) throw ConfigError("noise_dim must be positive");
  if (speaker_dim != kSpeakerDim) throw ConfigError("speaker_dim must be 192");
  if (feature_dim != kFeatureDim) throw ConfigError("feature_dim must be 768");
  if (output_rate != kOutputRate) throw ConfigError("output_rate must be 32000");
  if (speaker_channels < 1 || speaker_attention < 1) throw ConfigError("speaker encoder widths must be positive");
  if (!(cbn_momentum > 0 && cbn_momentum <= 1)) throw ConfigError("cbn_momentum must be in (0, 1]");
  if (!(cbn_eps > 0)) throw ConfigError("cbn_eps must be positive");
  if (!(lambda_fm >= 0) || !(lambda_mel >= 0)) throw ConfigError("loss weights must be non-negative");
}

int Vec2WavConfig::upsample_factor() const {
  int f = 1;
  for (int r : upsample_rates) f *= r;
  return f;
}

int Vec2WavConfig::stage_channels(int i) const {
  return std::max(base_channels >> std::min(i, 30), min_channels);
}

NoiseVector sample_noise(int dim, nn::Rng& rng) {
  if (dim < 1) throw PreconditionError("noise dimension must be positive");
  std::normal_distribution<double> n(0.0, 1.0);
  NoiseVector z;
  z.values.resize(dim);
  for (int i = 0; i < dim; ++i) z.values[i] = static_cast<float>(n(rng));
  return z;
}

namespace {

Index reflect(Index i, Index length) {
  if (length == 1) return 0;
  const Index period = 2 * (length - 1);
  i %= period;
  if (i < 0) i += period;
  return i < length ? i : period - i;
}

}  // namespace

std::vector<Index> mpd_fold_index(Index length, int period, Index segments) {
  if (period < 1) throw PreconditionError("period must be positive");
  if (length < 1) throw PreconditionError("waveform must not be empty");
  const Index cols = (length + period - 1) / period;
  std::vector<Index> idx;
  idx.reserve(static_cast<std::size_t>(segments * period * cols));
  for (Index b = 0; b < segments; ++b)
    for (Index j = 0; j < period; ++j)
      for (Index i = 0; i < cols; ++i) idx.push_back(b * length + reflect(i * period + j, length));
  return idx;
}

Eigen::MatrixXf mpd_grid(const Eigen::VectorXf& samples, int period) {
  const std::vector<Index> idx = mpd_fold_index(samples.size(), period, 1);
  const Index cols = static_cast<Index>(idx.size()) / period;
  Eigen::MatrixXf grid(period, cols);
  for (Index j = 0; j < period; ++j)
    for (Index i = 0; i < cols; ++i) grid(j, i) = samples[idx[static_cast<std::size_t>(j * cols + i)]];
  return grid;
}

template <typename Scalar>
void ConditionalBatchNorm::init(nn::ParameterSet<Scalar>& ps, nn::Rng& rng, double stddev) const {
  using nn::Init;
  ps.add(name + ".gamma.weight", nn::init_matrix<Scalar>(channels, cond_dim, Init::kNormal, cond_dim, rng, stddev));
  ps.add(name + ".gamma.bias", nn::init_matrix<Scalar>(channels, 1, Init::kOne, cond_dim, rng));
  ps.add(name + ".beta.weight", nn::init_matrix<Scalar>(channels, cond_dim, Init::kNormal, cond_dim, rng, stddev));
  ps.add(name + ".beta.bias", nn::init_matrix<Scalar>(channels, 1, Init::kZero, cond_dim, rng));
  ps.add_buffer(name + ".running_mean", nn::Matrix<Scalar>::Zero(channels, 1));
  ps.add_buffer(name + ".running_var", nn::Matrix<Scalar>::Ones(channels, 1));
}

template <typename Scalar>
ad::Var<Scalar> ConditionalBatchNorm::operator()(nn::Scope<Scalar>& s, const ad::Var<Scalar>& x,
                                                 const ad::Var<Scalar>& cond, double momentum,
                                                 double eps) const {
  if (x.rows() != channels) throw ShapeError(name + ": channel mismatch");
  if (cond.rows() != cond_dim || cond.cols() != x.segments()) throw ShapeError(name + ": conditioning shape");
  auto& running_mean = s.params().buffer(name + ".running_mean");
  auto& running_var = s.params().buffer(name + ".running_var");
  ad::Var<Scalar> normalized;
  if (s.training()) {
    ad::RowStatistics<Scalar> stats;
    normalized = ad::batch_normalize_rows(x, static_cast<Scalar>(eps), &stats);
    const Scalar n = static_cast<Scalar>(x.cols());
    const Scalar unbiased = n > 1 ? n / (n - 1) : Scalar(1);
    const Scalar m = static_cast<Scalar>(momentum);
    running_mean = (Scalar(1) - m) * running_mean + m * stats.mean;
    running_var = (Scalar(1) - m) * running_var + (m * unbiased) * stats.variance;
  } else {
    ad::RowStatistics<Scalar> stats{running_mean.col(0), running_var.col(0)};
    normalized = ad::normalize_rows_fixed(x, stats, static_cast<Scalar>(eps));
  }
  const auto gamma = ad::add_bias(ad::matmul(s[name + ".gamma.weight"], cond), s[name + ".gamma.bias"]);
  const auto beta = ad::add_bias(ad::matmul(s[name + ".beta.weight"], cond), s[name + ".beta.bias"]);
  return ad::add_segments(ad::mul_segments(normalized, gamma), beta);
}

namespace {

template <typename Scalar>
ad::Var<Scalar> masked(const ad::Var<Scalar>& x, std::span<const Index> lengths) {
  return lengths.empty() ? x : ad::mask_time(x, lengths);
}

// Layer descriptions by name; constructor and forward pass share them.
struct Layers {
  const Vec2WavConfig& c;

  nn::Conv1d pre() const { return {"pre", c.feature_dim, c.stage_channels(0), 7}; }
  nn::ConvTranspose1d up(int i) const {
    return {"up" + std::to_string(i), c.stage_channels(i), c.stage_channels(i + 1),
            c.upsample_kernels[static_cast<std::size_t>(i)], c.upsample_rates[static_cast<std::size_t>(i)]};
  }
  ConditionalBatchNorm cbn(int i) const {
    return {"cbn" + std::to_string(i), c.stage_channels(i + 1), c.speaker_dim + c.noise_dim};
  }
  static std::string res_prefix(int stage, std::size_t k) {
    return "mrf" + std::to_string(stage) + ".k" + std::to_string(k);
  }
  nn::Conv1d res_conv(const std::string& prefix, int stage, const char* which, std::size_t j, int kernel,
                      int dilation) const {
    const Index ch = c.stage_channels(stage + 1);
    return {prefix + "." + which + "_" + std::to_string(j), ch, ch, kernel, dilation};
  }
  nn::Conv1d post() const { return {"post", c.stage_channels(c.num_stages()), 1, 7}; }

  // ECAPA-style speaker encoder.
  Index n_mels() const { return decoder_mel_config().n_mels; }
  nn::Conv1d spk_in() const { return {"spk.in", n_mels(), c.speaker_channels, 5}; }
  nn::Conv1d spk_a(int j) const { return {"spk.b" + std::to_string(j) + ".a", c.speaker_channels, c.speaker_channels, 1}; }
  nn::Conv1d spk_d(int j) const {
    return {"spk.b" + std::to_string(j) + ".dil", c.speaker_channels, c.speaker_channels, 3, j + 2};
  }
  nn::Conv1d spk_b(int j) const { return {"spk.b" + std::to_string(j) + ".b", c.speaker_channels, c.speaker_channels, 1}; }
  nn::Linear spk_se1(int j) const {
    return {"spk.b" + std::to_string(j) + ".se1", c.speaker_channels, std::max(c.speaker_channels / 4, 1)};
  }
  nn::Linear spk_se2(int j) const {
    return {"spk.b" + std::to_string(j) + ".se2", std::max(c.speaker_channels / 4, 1), c.speaker_channels};
  }
  nn::Conv1d spk_mfa() const { return {"spk.mfa", 3 * c.speaker_channels, 3 * c.speaker_channels, 1}; }
  nn::Conv1d spk_att1() const { return {"spk.att1", 3 * c.speaker_channels, c.speaker_attention, 1}; }
  nn::Conv1d spk_att2() const { return {"spk.att2", c.speaker_attention, 3 * c.speaker_channels, 1}; }
  nn::Linear spk_out() const { return {"spk.out", 6 * c.speaker_channels, c.speaker_dim}; }

  nn::Conv1d mpd_conv(int period, std::size_t i) const {
    static constexpr int kStrides[5] = {3, 3, 3, 3, 1};
    const Index in = i == 0 ? 1 : c.mpd_channels[i - 1];
    return {"mpd" + std::to_string(period) + ".conv" + std::to_string(i), in, c.mpd_channels[i], 5, 1, kStrides[i], 2};
  }
  nn::Conv1d mpd_post(int period) const { return {"mpd" + std::to_string(period) + ".post", c.mpd_channels.back(), 1, 3, 1, 1, 1}; }

  nn::Conv1d msd_conv(int scale, std::size_t i) const {
    static constexpr int kKernels[7] = {15, 41, 41, 41, 41, 41, 5};
    static constexpr int kStrides[7] = {1, 2, 2, 4, 4, 1, 1};
    const Index in = i == 0 ? 1 : c.msd_channels[i - 1];
    return {"msd" + std::to_string(scale) + ".conv" + std::to_string(i), in, c.msd_channels[i], kKernels[i], 1,
            kStrides[i], (kKernels[i] - 1) / 2};
  }
  nn::Conv1d msd_post(int scale) const { return {"msd" + std::to_string(scale) + ".post", c.msd_channels.back(), 1, 3, 1, 1, 1}; }
};

template <typename Scalar>
nn::Scope<Scalar> eval_scope(ad::Tape<Scalar>& tape, const nn::ParameterSet<Scalar>& params) {
  tape.set_grad_enabled(false);
  return nn::Scope<Scalar>(tape, const_cast<nn::ParameterSet<Scalar>&>(params), false, false);
}

}  // namespace

template <typename Scalar>
Vec2Wav<Scalar>::Vec2Wav(const Vec2WavConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  nn::Rng rng(seed);
  const Layers l{config_};
  using nn::Init;

  l.pre().init(gen_, rng);
  for (int i = 0; i < config_.num_stages(); ++i) {
    l.up(i).init(gen_, rng, Init::kNormal, 0.01);
    l.cbn(i).init(gen_, rng);
    for (std::size_t k = 0; k < config_.resblock_kernels.size(); ++k) {
      const std::string prefix = Layers::res_prefix(i, k);
      for (std::size_t j = 0; j < config_.resblock_dilations[k].size(); ++j) {
        l.res_conv(prefix, i, "c1", j, config_.resblock_kernels[k], config_.resblock_dilations[k][j])
            .init(gen_, rng, Init::kNormal, 0.01);
        l.res_conv(prefix, i, "c2", j, config_.resblock_kernels[k], 1).init(gen_, rng, Init::kNormal, 0.01);
      }
    }
  }
  l.post().init(gen_, rng);

  l.spk_in().init(gen_, rng);
  for (int j = 0; j < 3; ++j) {
    l.spk_a(j).init(gen_, rng);
    l.spk_d(j).init(gen_, rng);
    l.spk_b(j).init(gen_, rng);
    l.spk_se1(j).init(gen_, rng);
    l.spk_se2(j).init(gen_, rng);
  }
  l.spk_mfa().init(gen_, rng);
  l.spk_att1().init(gen_, rng);
  l.spk_att2().init(gen_, rng);
  l.spk_out().init(gen_, rng);

  for (int p : config_.mpd_periods) {
    for (std::size_t i = 0; i < config_.mpd_channels.size(); ++i) l.mpd_conv(p, i).init(disc_, rng);
    l.mpd_post(p).init(disc_, rng);
  }
  for (int sc = 0; sc < config_.msd_scales; ++sc) {
    for (std::size_t i = 0; i < config_.msd_channels.size(); ++i) l.msd_conv(sc, i).init(disc_, rng);
    l.msd_post(sc).init(disc_, rng);
  }
}

template <typename Scalar>
ad::Var<Scalar> Vec2Wav<Scalar>::speaker_encoder(Scope& g, const Var& mel,
                                                 std::span<const Index> lengths) const {
  const Layers l{config_};
  if (mel.rows() != l.n_mels()) throw ShapeError("speaker encoder expects decoder mel input");
  const Index B = mel.segments();
  std::vector<Index> lens(lengths.begin(), lengths.end());
  if (lens.empty()) lens.assign(static_cast<std::size_t>(B), mel.segment_length());
  if (static_cast<Index>(lens.size()) != B) throw ShapeError("one length per segment is required");

  Var x = masked(ad::relu(l.spk_in()(g, masked(mel, lengths))), lengths);
  nn::Matrix<Scalar> inv_len(config_.speaker_channels, B);
  for (Index b = 0; b < B; ++b) inv_len.col(b).setConstant(Scalar(1) / static_cast<Scalar>(lens[static_cast<std::size_t>(b)]));
  const Var inv_len_v = g.tape().constant(inv_len, B);

  std::vector<Var> block_out;
  for (int j = 0; j < 3; ++j) {
    Var h = masked(ad::relu(l.spk_a(j)(g, x)), lengths);
    h = masked(ad::relu(l.spk_d(j)(g, h)), lengths);
    h = masked(ad::relu(l.spk_b(j)(g, h)), lengths);
    // Squeeze-excitation on the masked time average.
    const Var avg = ad::mul(ad::segment_sum(h), inv_len_v);
    const Var gate = ad::sigmoid(l.spk_se2(j)(g, ad::relu(l.spk_se1(j)(g, avg))));
    x = ad::add(x, ad::mul_segments(h, gate));
    block_out.push_back(x);
  }
  const Var h = masked(ad::relu(l.spk_mfa()(g, ad::concat_rows<Scalar>(block_out))), lengths);

  // Attentive statistics pooling with per-channel frame weights.
  const Var e = l.spk_att2()(g, ad::tanh(l.spk_att1()(g, h)));
  const Var w = ad::segment_softmax_rows(e, std::span<const Index>(lens));
  const Var mu = ad::segment_sum(ad::mul(w, h));
  const Var second = ad::segment_sum(ad::mul(w, ad::square(h)));
  const Var sigma = ad::sqrt(ad::clamp_min(ad::sub(second, ad::square(mu)), Scalar(1e-5)));
  const Var pooled = ad::concat_rows<Scalar>(std::vector<Var>{mu, sigma});
  return ad::l2_normalize_cols(l.spk_out()(g, pooled));
}

template <typename Scalar>
ad::Var<Scalar> Vec2Wav<Scalar>::resblock(Scope& g, int stage, std::size_t kernel_index, Var x) const {
  const Layers l{config_};
  const Scalar slope = static_cast<Scalar>(config_.leaky_slope);
  const std::string prefix = Layers::res_prefix(stage, kernel_index);
  const int kernel = config_.resblock_kernels[kernel_index];
  const auto& dilations = config_.resblock_dilations[kernel_index];
  for (std::size_t j = 0; j < dilations.size(); ++j) {
    Var h = l.res_conv(prefix, stage, "c1", j, kernel, dilations[j])(g, ad::leaky_relu(x, slope));
    h = l.res_conv(prefix, stage, "c2", j, kernel, 1)(g, ad::leaky_relu(h, slope));
    x = ad::add(x, h);
  }
  return x;
}

template <typename Scalar>
ad::Var<Scalar> Vec2Wav<Scalar>::generator(Scope& g, const Var& features, const Var& speaker,
                                           const Var& noise) const {
  const Layers l{config_};
  const Index B = features.segments();
  if (features.rows() != config_.feature_dim) throw ShapeError("generator expects feature_dim input rows");
  if (speaker.rows() != config_.speaker_dim || speaker.cols() != B) throw ShapeError("speaker must be speaker_dim x B");
  if (noise.rows() != config_.noise_dim || noise.cols() != B) throw ShapeError("noise must be noise_dim x B");
  const Var cond = ad::resegment(ad::concat_rows<Scalar>(std::vector<Var>{speaker, noise}), B);
  const Scalar slope = static_cast<Scalar>(config_.leaky_slope);
  const Scalar kernels = static_cast<Scalar>(config_.resblock_kernels.size());

  Var x = l.pre()(g, features);
  for (int i = 0; i < config_.num_stages(); ++i) {
    x = l.up(i)(g, ad::leaky_relu(x, slope));
    x = l.cbn(i)(g, x, cond, config_.cbn_momentum, config_.cbn_eps);
    Var acc;
    for (std::size_t k = 0; k < config_.resblock_kernels.size(); ++k) {
      const Var r = resblock(g, i, k, x);
      acc = acc.valid() ? ad::add(acc, r) : r;
    }
    x = ad::scale(acc, Scalar(1) / kernels);
  }
  return ad::tanh(l.post()(g, ad::leaky_relu(x, Scalar(0.01))));
}

template <typename Scalar>
SubDiscriminatorOutput<Scalar> Vec2Wav<Scalar>::period_discriminator(Scope& d, const Var& wave, int period) const {
  const Layers l{config_};
  if (wave.rows() != 1) throw ShapeError("discriminators expect a 1-row waveform");
  const Index B = wave.segments(), L = wave.segment_length();
  const std::vector<Index> idx = mpd_fold_index(L, period, B);
  Var x = ad::gather(wave, std::span<const Index>(idx), 1, static_cast<Index>(idx.size()), B * period);
  SubDiscriminatorOutput<Scalar> out;
  out.name = "mpd" + std::to_string(period);
  const Scalar slope = static_cast<Scalar>(config_.leaky_slope);
  for (std::size_t i = 0; i < config_.mpd_channels.size(); ++i) {
    x = ad::leaky_relu(l.mpd_conv(period, i)(d, x), slope);
    out.features.push_back(x);
  }
  out.score = l.mpd_post(period)(d, x);
  out.features.push_back(out.score);
  return out;
}

template <typename Scalar>
SubDiscriminatorOutput<Scalar> Vec2Wav<Scalar>::scale_discriminator(Scope& d, const Var& wave, int scale) const {
  const Layers l{config_};
  if (wave.rows() != 1) throw ShapeError("discriminators expect a 1-row waveform");
  Var x = wave;
  for (int i = 0; i < scale; ++i) x = ad::avg_pool1d(x, 4, 2, 1);
  SubDiscriminatorOutput<Scalar> out;
  out.name = "msd" + std::to_string(scale);
  const Scalar slope = static_cast<Scalar>(config_.leaky_slope);
  for (std::size_t i = 0; i < config_.msd_channels.size(); ++i) {
    x = ad::leaky_relu(l.msd_conv(scale, i)(d, x), slope);
    out.features.push_back(x);
  }
  out.score = l.msd_post(scale)(d, x);
  out.features.push_back(out.score);
  return out;
}

template <typename Scalar>
DiscriminatorScores<Scalar> Vec2Wav<Scalar>::discriminate(Scope& d, const Var& wave) const {
  DiscriminatorScores<Scalar> all;
  for (int p : config_.mpd_periods) all.push_back(period_discriminator(d, wave, p));
  for (int sc = 0; sc < config_.msd_scales; ++sc) all.push_back(scale_discriminator(d, wave, sc));
  return all;
}

template <typename Scalar>
Waveform Vec2Wav<Scalar>::generate(const FeatureSequence& features, const SpeakerEmbedding& speaker,
                                   const NoiseVector& noise) const {
  validate(features);
  validate(speaker);
  if (features.num_frames() < 1) throw PreconditionError("generation needs at least one feature frame");
  if (noise.values.size() != config_.noise_dim || !noise.values.allFinite())
    throw PreconditionError("noise vector must be finite with noise_dim entries");
  ad::Tape<Scalar> tape;
  Scope g = eval_scope(tape, gen_);
  const Var f = tape.constant(features.values.transpose().template cast<Scalar>());
  const Var spk = tape.constant(speaker.vector.template cast<Scalar>());
  const Var z = tape.constant(noise.values.template cast<Scalar>());
  Waveform w;
  w.sample_rate = config_.output_rate;
  w.samples = generator(g, f, spk, z).value().row(0).transpose().template cast<float>();
  return w;
}

template <typename Scalar>
SpeakerEmbedding Vec2Wav<Scalar>::speaker_embed_mel(const Eigen::MatrixXf& mel, Index valid_frames) const {
  if (mel.cols() < 1 || valid_frames == 0) throw PreconditionError("speaker embedding needs at least one mel frame");
  if (mel.rows() != decoder_mel_config().n_mels) throw ShapeError("mel must have n_mels rows");
  if (valid_frames > mel.cols()) throw ShapeError("valid_frames exceeds the mel length");
  if (!mel.allFinite()) throw PreconditionError("mel must be finite");
  ad::Tape<Scalar> tape;
  Scope g = eval_scope(tape, gen_);
  std::vector<Index> lengths;
  if (valid_frames > 0) lengths.push_back(valid_frames);
  SpeakerEmbedding e;
  e.vector = speaker_encoder(g, tape.constant(mel.template cast<Scalar>()), lengths).value().col(0).template cast<float>();
  e.source_stage = SpeakerStage::kVec2Wav;
  return e;
}

template <typename Scalar>
SpeakerEmbedding Vec2Wav<Scalar>::speaker_embed(const Waveform& audio) const {
  return speaker_embed_mel(compute_mel(audio));
}

template <typename Scalar>
ad::Var<Scalar> discriminator_loss(const DiscriminatorScores<Scalar>& real, const DiscriminatorScores<Scalar>& fake) {
  if (real.empty() || real.size() != fake.size()) throw ShapeError("discriminator score sets differ");
  std::vector<ad::Var<Scalar>> terms;
  for (std::size_t i = 0; i < real.size(); ++i) {
    ad::Tape<Scalar>& tape = real[i].score.tape();
    const auto& r = real[i].score;
    const auto& f = fake[i].score;
    terms.push_back(ad::mse(r, tape.constant(nn::Matrix<Scalar>::Ones(r.rows(), r.cols()), r.segments())));
    terms.push_back(ad::mse(f, tape.constant(nn::Matrix<Scalar>::Zero(f.rows(), f.cols()), f.segments())));
  }
  const std::vector<Scalar> ones(terms.size(), Scalar(1));
  return ad::weighted_sum<Scalar>(terms, ones);
}

template <typename Scalar>
ad::Var<Scalar> generator_adv_loss(const DiscriminatorScores<Scalar>& fake) {
  if (fake.empty()) throw ShapeError("no discriminator scores");
  std::vector<ad::Var<Scalar>> terms;
  for (const auto& sub : fake) {
    const auto& f = sub.score;
    terms.push_back(ad::mse(f, f.tape().constant(nn::Matrix<Scalar>::Ones(f.rows(), f.cols()), f.segments())));
  }
  const std::vector<Scalar> ones(terms.size(), Scalar(1));
  return ad::weighted_sum<Scalar>(terms, ones);
}

template <typename Scalar>
ad::Var<Scalar> feature_matching_loss(const DiscriminatorScores<Scalar>& real, const DiscriminatorScores<Scalar>& fake,
                                      Scalar lambda) {
  if (real.empty() || real.size() != fake.size()) throw ShapeError("feature sets differ in sub-discriminator count");
  std::vector<ad::Var<Scalar>> terms;
  for (std::size_t i = 0; i < real.size(); ++i) {
    if (real[i].features.size() != fake[i].features.size())
      throw ShapeError("feature sets differ in layer count for " + real[i].name);
    for (std::size_t j = 0; j < real[i].features.size(); ++j)
      terms.push_back(ad::l1(real[i].features[j], fake[i].features[j]));
  }
  const std::vector<Scalar> weights(terms.size(), lambda);
  return ad::weighted_sum<Scalar>(terms, weights);
}

double mel_weight_schedule(std::int64_t step, std::int64_t total_steps, double lambda0) {
  if (step < 0) throw PreconditionError("step must be non-negative");
  if (total_steps <= 0) throw PreconditionError("total_steps must be positive");
  return lambda0 * std::max(0.0, 1.0 - static_cast<double>(step) / static_cast<double>(total_steps));
}

double mel_reconstruction_loss(const Waveform& real, const Waveform& fake) {
  if (real.size() != fake.size())
    throw InvariantError("mel loss needs equal lengths, got " + std::to_string(real.size()) + " and " +
                         std::to_string(fake.size()));
  const Eigen::MatrixXf a = compute_mel(real);
  const Eigen::MatrixXf b = compute_mel(fake);
  return static_cast<double>((a - b).cwiseAbs().mean());
}

template <typename Scalar>
ad::Var<Scalar> mel_reconstruction_loss(const MelAnalyzer<Scalar>& analyzer, const ad::Var<Scalar>& fake,
                                        const nn::Matrix<Scalar>& real_mel) {
  const ad::Var<Scalar> m = analyzer.log_mel(fake);
  if (m.rows() != real_mel.rows() || m.cols() != real_mel.cols())
    throw InvariantError("mel loss needs equal lengths");
  return ad::l1(m, fake.tape().constant(real_mel, m.segments()));
}

#define WTV_INSTANTIATE_VEC2WAV(S)                                                                          \
  template class Vec2Wav<S>;                                                                                \
  template void ConditionalBatchNorm::init<S>(nn::ParameterSet<S>&, nn::Rng&, double) const;               \
  template ad::Var<S> ConditionalBatchNorm::operator()<S>(nn::Scope<S>&, const ad::Var<S>&,                 \
                                                          const ad::Var<S>&, double, double) const;         \
  template ad::Var<S> discriminator_loss(const DiscriminatorScores<S>&, const DiscriminatorScores<S>&);    \
  template ad::Var<S> generator_adv_loss(const DiscriminatorScores<S>&);                                    \
  template ad::Var<S> feature_matching_loss(const DiscriminatorScores<S>&, const DiscriminatorScores<S>&, S); \
  template ad::Var<S> mel_reconstruction_loss(const MelAnalyzer<S>&, const ad::Var<S>&, const nn::Matrix<S>&);

WTV_INSTANTIATE_VEC2WAV(float)
WTV_INSTANTIATE_VEC2WAV(double)

}  // namespace wtv
