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

// Text encoder: characters to 768-d feature frames at 50 Hz.
//
// Two stacks of feed-forward transformer layers sit on either side of a length
// regulator. The first stack is conditioned on a speaker embedding computed
// from the target features; durations come from monotonic alignment search
// during training and from a duration predictor at inference.
//
// Internally everything is channels x time with batches stacked along
// columns. The value-level API returns row-per-token / row-per-frame matrices
// to match FeatureSequence.

#ifndef WTV_TEXT2VEC_HPP_
#define WTV_TEXT2VEC_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wtv/alignment.hpp"
#include "wtv/core.hpp"
#include "wtv/nn.hpp"

namespace wtv {

// Printable ASCII (32..126) maps to 1..95; anything else is id 0.
inline constexpr int kCharVocabSize = 96;
TokenSequence tokenize(const std::string& text);

struct Text2VecConfig {
  int vocab_size = kCharVocabSize;
  int hidden_dim = 384;
  int fft_layers_per_block = 4;
  int attention_heads = 2;
  int conv_kernel = 3;
  int conv_filter = 1536;
  int duration_hidden = 256;
  int duration_kernel = 3;
  int speaker_dim = kSpeakerDim;
  int feature_dim = kFeatureDim;
  int align_dim = 80;
  int speaker_channels = 256;
  int speaker_attention = 128;
  double prior_strength = 1.0;

  void validate() const;
};

struct Text2VecExample {
  TokenSequence tokens;
  FeatureSequence target;
};

struct Text2VecLossWeights {
  double duration = 1.0;
  double align = 1.0;
  double bin = 0.0;
};

struct Text2VecForwardOptions {
  // Replaces Viterbi durations (one vector per example).
  const std::vector<align::DurationVector>* forced_durations = nullptr;
  // Bypasses the speaker encoder (one embedding per example).
  const std::vector<SpeakerEmbedding>* fixed_speakers = nullptr;
};

struct AlignmentBundle {
  align::SoftAlignment<double> soft;
  align::HardAlignment hard;
  align::DurationVector durations;
};

struct Text2VecTrainOutput {
  FeatureSequence predicted_features;
  double feature_loss = 0;
  double duration_loss = 0;
  double align_loss = 0;  // forward-sum loss divided by T
  double bin_loss = 0;    // binarization loss divided by T
  double total = 0;
  AlignmentBundle alignment;
};

template <typename Scalar>
struct Text2VecBatchResult {
  // Mean of the per-utterance weighted totals; invalid when every example
  // was skipped.
  ad::Var<Scalar> total;
  std::vector<Text2VecTrainOutput> items;  // one per used example
  std::vector<std::size_t> used;           // indices into the input batch
  std::vector<std::size_t> skipped;        // N > T, no monotonic alignment
};

template <typename Scalar>
class Text2Vec {
 public:
  using Matrix = nn::Matrix<Scalar>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Var = ad::Var<Scalar>;
  using Scope = nn::Scope<Scalar>;

  Text2Vec(const Text2VecConfig& config, std::uint64_t seed);

  const Text2VecConfig& config() const { return config_; }
  nn::ParameterSet<Scalar>& params() { return params_; }
  const nn::ParameterSet<Scalar>& params() const { return params_; }

  // Graph builders. `lengths` are valid columns per segment.
  Var speaker_encoder(Scope& s, const Var& features, std::span<const Eigen::Index> lengths) const;
  Var embed(Scope& s, const std::vector<int>& ids, Eigen::Index segments, std::span<const Eigen::Index> lengths) const;
  Var encoder(Scope& s, const Var& embedded, const Var& speaker, std::span<const Eigen::Index> lengths) const;
  Var duration_head(Scope& s, const Var& hidden, std::span<const Eigen::Index> lengths) const;
  Var align_keys(Scope& s, const Var& embedded, std::span<const Eigen::Index> lengths) const;
  Var align_queries(Scope& s, const Var& features, std::span<const Eigen::Index> lengths) const;
  Var decoder(Scope& s, const Var& expanded, std::span<const Eigen::Index> lengths) const;

  Text2VecBatchResult<Scalar> forward_train(Scope& s, std::span<const Text2VecExample> batch,
                                            const Text2VecLossWeights& weights,
                                            const Text2VecForwardOptions& options = {}) const;

  // Value-level API, no gradients.
  Matrix encode_tokens(const TokenSequence& tokens, const SpeakerEmbedding& spk) const;  // N x H
  Vector predict_durations(const Matrix& text_hidden) const;                            // log(1 + d)
  FeatureSequence decode_features(const Matrix& expanded) const;                        // T x H in
  // `valid_frames` < 0 uses every frame; otherwise trailing frames are padding.
  SpeakerEmbedding speaker_embed(const FeatureSequence& target, Eigen::Index valid_frames = -1) const;
  FeatureSequence infer(const TokenSequence& tokens, const SpeakerEmbedding& spk, double pace,
                        align::DurationVector* durations = nullptr) const;

 private:
  Var fft_block(Scope& s, const std::string& prefix, Var x, std::span<const Eigen::Index> lengths) const;

  Text2VecConfig config_;
  nn::ParameterSet<Scalar> params_;
};

// Row n of `hidden` repeated durations[n] times.
template <typename Derived>
nn::Matrix<typename Derived::Scalar> regulate_length(const Eigen::MatrixBase<Derived>& hidden,
                                                     const align::DurationVector& durations) {
  align::validate(durations);
  if (static_cast<Eigen::Index>(durations.durations.size()) != hidden.rows())
    throw ShapeError("one duration per token is required");
  nn::Matrix<typename Derived::Scalar> out(durations.total(), hidden.cols());
  Eigen::Index t = 0;
  for (Eigen::Index n = 0; n < hidden.rows(); ++n)
    for (int k = 0; k < durations.durations[static_cast<std::size_t>(n)]; ++k) out.row(t++) = hidden.row(n);
  return out;
}

// max(1, round_half_up(pace * (exp(p) - 1))) per token.
align::DurationVector inference_durations(std::span<const double> log_durations, double pace);

extern template class Text2Vec<float>;
extern template class Text2Vec<double>;

}  // namespace wtv

#endif  // WTV_TEXT2VEC_HPP_
