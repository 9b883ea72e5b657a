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

#include "wtv/text2vec.hpp"

#include <algorithm>
#include <cmath>

namespace wtv {

using Eigen::Index;

TokenSequence tokenize(const std::string& text) {
  TokenSequence t;
  t.vocab_size = kCharVocabSize;
  t.ids.reserve(text.size());
  for (unsigned char c : text) t.ids.push_back(c >= 32 && c <= 126 ? static_cast<int>(c) - 31 : 0);
  return t;
}

void Text2VecConfig::validate() const {
  if (vocab_size < 1) throw ConfigError("vocab_size must be positive");
  if (hidden_dim < 1 || attention_heads < 1 || hidden_dim % attention_heads != 0)
    throw ConfigError("hidden_dim must be a positive multiple of attention_heads");
  if (feature_dim != kFeatureDim) throw ConfigError("feature_dim must be 768");
  if (speaker_dim != kSpeakerDim) throw ConfigError("speaker_dim must be 192");
  if (fft_layers_per_block < 1 || conv_kernel < 1 || conv_kernel % 2 == 0 || duration_kernel % 2 == 0)
    throw ConfigError("invalid layer count or kernel size");
  if (conv_filter < 1 || duration_hidden < 1 || align_dim < 1 || speaker_channels < 1 || speaker_attention < 1)
    throw ConfigError("layer widths must be positive");
  if (!(prior_strength > 0)) throw ConfigError("prior_strength must be positive");
}

align::DurationVector inference_durations(std::span<const double> log_durations, double pace) {
  if (!(pace > 0)) throw PreconditionError("pace must be positive");
  align::DurationVector d;
  for (double p : log_durations) {
    const double frames = pace * (std::exp(p) - 1.0);
    d.durations.push_back(std::max(1, static_cast<int>(std::floor(frames + 0.5))));
  }
  return d;
}

namespace {

template <typename Scalar>
ad::Var<Scalar> masked(const ad::Var<Scalar>& x, std::span<const Index> lengths) {
  return lengths.empty() ? x : ad::mask_time(x, lengths);
}

template <typename Scalar>
nn::Matrix<Scalar> tiled_positions(Index dim, Index length, Index segments) {
  const nn::Matrix<Scalar> pe = nn::sinusoidal_positions<Scalar>(dim, length);
  nn::Matrix<Scalar> out(dim, length * segments);
  for (Index b = 0; b < segments; ++b) out.middleCols(b * length, length) = pe;
  return out;
}

// Layers are described by value; names fix the parameter layout.
struct Layers {
  const Text2VecConfig& c;

  nn::Embedding emb() const { return {"emb", c.vocab_size, c.hidden_dim}; }
  nn::Linear spk_proj() const { return {"spk_proj", c.speaker_dim, c.hidden_dim}; }
  nn::MultiHeadAttention attn(const std::string& p) const { return {p + ".attn", c.hidden_dim, c.attention_heads}; }
  nn::LayerNorm ln(const std::string& p) const { return {p, c.hidden_dim}; }
  nn::Conv1d ffn1(const std::string& p) const { return {p + ".conv1", c.hidden_dim, c.conv_filter, c.conv_kernel}; }
  nn::Conv1d ffn2(const std::string& p) const { return {p + ".conv2", c.conv_filter, c.hidden_dim, c.conv_kernel}; }
  nn::Linear out() const { return {"dec.out", c.hidden_dim, c.feature_dim}; }

  nn::Conv1d dur1() const { return {"dur.conv1", c.hidden_dim, c.duration_hidden, c.duration_kernel}; }
  nn::Conv1d dur2() const { return {"dur.conv2", c.duration_hidden, c.duration_hidden, c.duration_kernel}; }
  nn::LayerNorm dur_ln1() const { return {"dur.ln1", c.duration_hidden}; }
  nn::LayerNorm dur_ln2() const { return {"dur.ln2", c.duration_hidden}; }
  nn::Linear dur_out() const { return {"dur.out", c.duration_hidden, 1}; }

  nn::Conv1d key1() const { return {"align.key1", c.hidden_dim, c.hidden_dim, 3}; }
  nn::Conv1d key2() const { return {"align.key2", c.hidden_dim, c.align_dim, 1}; }
  nn::Conv1d query1() const { return {"align.query1", c.feature_dim, c.hidden_dim, 3}; }
  nn::Conv1d query2() const { return {"align.query2", c.hidden_dim, c.hidden_dim, 1}; }
  nn::Conv1d query3() const { return {"align.query3", c.hidden_dim, c.align_dim, 1}; }

  nn::Conv1d spk1() const { return {"spk.conv1", c.feature_dim, c.speaker_channels, 3}; }
  nn::Conv1d spk2() const { return {"spk.conv2", c.speaker_channels, c.speaker_channels, 3}; }
  nn::Conv1d spk3() const { return {"spk.conv3", c.speaker_channels, c.speaker_channels, 3}; }
  nn::Conv1d spk_att1() const { return {"spk.att1", c.speaker_channels, c.speaker_attention, 1}; }
  nn::Conv1d spk_att2() const { return {"spk.att2", c.speaker_attention, c.speaker_channels, 1}; }
  nn::Linear spk_out() const { return {"spk.out", 2 * c.speaker_channels, c.speaker_dim}; }

  static std::string layer(const std::string& block, int i) { return block + "." + std::to_string(i); }
};

template <typename Scalar>
nn::Scope<Scalar> eval_scope(ad::Tape<Scalar>& tape, const nn::ParameterSet<Scalar>& params) {
  tape.set_grad_enabled(false);
  return nn::Scope<Scalar>(tape, const_cast<nn::ParameterSet<Scalar>&>(params), false, false);
}

}  // namespace

template <typename Scalar>
Text2Vec<Scalar>::Text2Vec(const Text2VecConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  nn::Rng rng(seed);
  const Layers l{config_};
  l.emb().init(params_, rng);
  l.spk_proj().init(params_, rng);
  for (const char* block : {"enc", "dec"})
    for (int i = 0; i < config_.fft_layers_per_block; ++i) {
      const std::string p = Layers::layer(block, i);
      l.attn(p).init(params_, rng);
      l.ln(p + ".ln1").init(params_, rng);
      l.ffn1(p).init(params_, rng);
      l.ffn2(p).init(params_, rng);
      l.ln(p + ".ln2").init(params_, rng);
    }
  l.out().init(params_, rng);
  l.dur1().init(params_, rng);
  l.dur_ln1().init(params_, rng);
  l.dur2().init(params_, rng);
  l.dur_ln2().init(params_, rng);
  l.dur_out().init(params_, rng);
  l.key1().init(params_, rng);
  l.key2().init(params_, rng);
  l.query1().init(params_, rng);
  l.query2().init(params_, rng);
  l.query3().init(params_, rng);
  l.spk1().init(params_, rng);
  l.spk2().init(params_, rng);
  l.spk3().init(params_, rng);
  l.spk_att1().init(params_, rng);
  l.spk_att2().init(params_, rng);
  l.spk_out().init(params_, rng);
  // Per-dimension statistics of the training targets, kept for optional
  // standardization; filled in by the trainer.
  params_.add_buffer("stats.feature_mean", Matrix::Zero(config_.feature_dim, 1));
  params_.add_buffer("stats.feature_std", Matrix::Ones(config_.feature_dim, 1));
}

template <typename Scalar>
typename Text2Vec<Scalar>::Var Text2Vec<Scalar>::fft_block(Scope& s, const std::string& prefix, Var x,
                                                          std::span<const Index> lengths) const {
  const Layers l{config_};
  for (int i = 0; i < config_.fft_layers_per_block; ++i) {
    const std::string p = Layers::layer(prefix, i);
    const Var a = l.attn(p)(s, x, lengths);
    x = masked(l.ln(p + ".ln1")(s, ad::add(x, a)), lengths);
    const Var h = masked(ad::relu(l.ffn1(p)(s, x)), lengths);
    x = masked(l.ln(p + ".ln2")(s, ad::add(x, l.ffn2(p)(s, h))), lengths);
  }
  return x;
}

template <typename Scalar>
typename Text2Vec<Scalar>::Var Text2Vec<Scalar>::speaker_encoder(Scope& s, const Var& features,
                                                                std::span<const Index> lengths) const {
  const Layers l{config_};
  if (features.segment_length() < 1) throw PreconditionError("speaker encoder needs at least one frame");
  for (Index len : lengths)
    if (len < 1) throw PreconditionError("speaker encoder needs at least one frame");
  Var h = masked(ad::relu(l.spk1()(s, masked(features, lengths))), lengths);
  h = masked(ad::relu(l.spk2()(s, h)), lengths);
  h = masked(ad::relu(l.spk3()(s, h)), lengths);
  // Channel-dependent attention over frames.
  const Var e = l.spk_att2()(s, ad::tanh(l.spk_att1()(s, h)));
  std::vector<Index> full;
  if (lengths.empty()) full.assign(static_cast<std::size_t>(h.segments()), h.segment_length());
  const Var alpha = ad::segment_softmax_rows(e, lengths.empty() ? std::span<const Index>(full) : lengths);
  const Var mu = ad::segment_sum(ad::mul(alpha, h));
  const Var m2 = ad::segment_sum(ad::mul(alpha, ad::square(h)));
  const Var sigma = ad::sqrt(ad::clamp_min(ad::sub(m2, ad::square(mu)), Scalar(1e-5)));
  const std::vector<Var> parts{mu, sigma};
  return ad::l2_normalize_cols(l.spk_out()(s, ad::concat_rows<Scalar>(parts)));
}

template <typename Scalar>
typename Text2Vec<Scalar>::Var Text2Vec<Scalar>::embed(Scope& s, const std::vector<int>& ids, Index segments,
                                                      std::span<const Index> lengths) const {
  return masked(Layers{config_}.emb()(s, ids, segments), lengths);
}

template <typename Scalar>
typename Text2Vec<Scalar>::Var Text2Vec<Scalar>::encoder(Scope& s, const Var& embedded, const Var& speaker,
                                                        std::span<const Index> lengths) const {
  const Layers l{config_};
  const Index B = embedded.segments(), N = embedded.segment_length();
  if (speaker.rows() != config_.speaker_dim || speaker.cols() != B)
    throw ShapeError("encoder needs one speaker embedding per segment");
  Var x = ad::add(embedded, s.tape().constant(tiled_positions<Scalar>(config_.hidden_dim, N, B), B));
  x = ad::add_segments(x, l.spk_proj()(s, speaker));
  return fft_block(s, "enc", masked(x, lengths), lengths);
}

template <typename Scalar>
typename Text2Vec<Scalar>::Var Text2Vec<Scalar>::duration_head(Scope& s, const Var& hidden,
                                                              std::span<const Index> lengths) const {
  const Layers l{config_};
  Var h = masked(l.dur_ln1()(s, ad::relu(l.dur1()(s, hidden))), lengths);
  h = masked(l.dur_ln2()(s, ad::relu(l.dur2()(s, h))), lengths);
  return l.dur_out()(s, h);
}

template <typename Scalar>
typename Text2Vec<Scalar>::Var Text2Vec<Scalar>::align_keys(Scope& s, const Var& embedded,
                                                           std::span<const Index> lengths) const {
  const Layers l{config_};
  return l.key2()(s, masked(ad::relu(l.key1()(s, embedded)), lengths));
}

template <typename Scalar>
typename Text2Vec<Scalar>::Var Text2Vec<Scalar>::align_queries(Scope& s, const Var& features,
                                                              std::span<const Index> lengths) const {
  const Layers l{config_};
  const Var h = masked(ad::relu(l.query1()(s, masked(features, lengths))), lengths);
  return l.query3()(s, ad::relu(l.query2()(s, h)));
}

template <typename Scalar>
typename Text2Vec<Scalar>::Var Text2Vec<Scalar>::decoder(Scope& s, const Var& expanded,
                                                        std::span<const Index> lengths) const {
  const Index B = expanded.segments(), T = expanded.segment_length();
  Var x = ad::add(expanded, s.tape().constant(tiled_positions<Scalar>(config_.hidden_dim, T, B), B));
  x = fft_block(s, "dec", masked(x, lengths), lengths);
  return Layers{config_}.out()(s, x);
}

template <typename Scalar>
Text2VecBatchResult<Scalar> Text2Vec<Scalar>::forward_train(Scope& s, std::span<const Text2VecExample> batch,
                                                            const Text2VecLossWeights& weights,
                                                            const Text2VecForwardOptions& options) const {
  Text2VecBatchResult<Scalar> result;
  if (options.forced_durations && options.forced_durations->size() != batch.size())
    throw ShapeError("forced durations must match the batch");
  if (options.fixed_speakers && options.fixed_speakers->size() != batch.size())
    throw ShapeError("fixed speakers must match the batch");
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& ex = batch[i];
    validate(ex.tokens);
    if (ex.tokens.vocab_size != config_.vocab_size) throw VocabularyError("token vocabulary does not match the model");
    validate(ex.target);
    if (ex.tokens.length() > ex.target.num_frames())
      result.skipped.push_back(i);
    else
      result.used.push_back(i);
  }
  if (result.used.empty()) return result;

  const Index B = static_cast<Index>(result.used.size());
  const Index H = config_.hidden_dim, D = config_.feature_dim;
  std::vector<Index> tok_len, frame_len;
  for (std::size_t u : result.used) {
    tok_len.push_back(batch[u].tokens.length());
    frame_len.push_back(batch[u].target.num_frames());
  }
  const Index N = *std::max_element(tok_len.begin(), tok_len.end());
  const Index T = *std::max_element(frame_len.begin(), frame_len.end());

  std::vector<int> ids(static_cast<std::size_t>(B * N), 0);
  Matrix target = Matrix::Zero(D, B * T);
  for (Index b = 0; b < B; ++b) {
    const auto& ex = batch[result.used[static_cast<std::size_t>(b)]];
    std::copy(ex.tokens.ids.begin(), ex.tokens.ids.end(), ids.begin() + b * N);
    target.middleCols(b * T, frame_len[b]) = ex.target.values.transpose().template cast<Scalar>();
  }
  ad::Tape<Scalar>& tape = s.tape();
  const Var tgt = tape.constant(target, B);

  Var speaker;
  if (options.fixed_speakers) {
    Matrix spk(config_.speaker_dim, B);
    for (Index b = 0; b < B; ++b) {
      const auto& e = (*options.fixed_speakers)[result.used[static_cast<std::size_t>(b)]];
      validate(e);
      spk.col(b) = e.vector.template cast<Scalar>();
    }
    speaker = tape.constant(spk);
  } else {
    speaker = speaker_encoder(s, tgt, frame_len);
  }

  const Var emb = embed(s, ids, B, tok_len);
  const Var hidden = encoder(s, emb, speaker, tok_len);
  const Var log_dur = duration_head(s, hidden, tok_len);
  const Var keys = align_keys(s, emb, tok_len);
  const Var queries = align_queries(s, tgt, frame_len);

  std::vector<Index> regulate(static_cast<std::size_t>(H * B * T), -1);
  std::vector<Var> terms_align, terms_bin, terms_dur;
  for (Index b = 0; b < B; ++b) {
    const std::size_t u = result.used[static_cast<std::size_t>(b)];
    const Index Nb = tok_len[b], Tb = frame_len[b];
    Text2VecTrainOutput out;

    const Var aff = align::log_affinity(ad::slice_cols(keys, b * N, Nb), ad::slice_cols(queries, b * T, Tb));
    const auto prior = align::diagonal_prior<Scalar>(Nb, Tb, static_cast<Scalar>(config_.prior_strength));
    const Var log_soft = ad::log_softmax_cols(ad::add(aff, tape.constant(prior.log_prior)));
    const Scalar inv_t = Scalar(1) / static_cast<Scalar>(Tb);
    const Var fs = ad::scale(align::forward_sum_loss(log_soft), inv_t);

    out.alignment.soft.values = log_soft.value().array().exp().matrix().template cast<double>();
    if (options.forced_durations) {
      out.alignment.durations = (*options.forced_durations)[u];
      align::validate(out.alignment.durations);
      if (static_cast<Index>(out.alignment.durations.durations.size()) != Nb || out.alignment.durations.total() != Tb)
        throw ShapeError("forced durations do not match the utterance");
      std::vector<int> path;
      for (Index n = 0; n < Nb; ++n)
        path.insert(path.end(), static_cast<std::size_t>(out.alignment.durations.durations[static_cast<std::size_t>(n)]),
                    static_cast<int>(n));
      out.alignment.hard = align::HardAlignment::from_path(path, Nb);
    } else {
      out.alignment.hard = align::viterbi_path_log(log_soft.value());
      out.alignment.durations = align::durations_from_hard(out.alignment.hard);
    }
    const Var bin = ad::scale(align::binarization_loss(log_soft, out.alignment.hard), inv_t);

    Matrix dur_target(1, Nb);
    for (Index n = 0; n < Nb; ++n)
      dur_target(0, n) = static_cast<Scalar>(std::log1p(static_cast<double>(out.alignment.durations.durations[static_cast<std::size_t>(n)])));
    const Var dur = ad::mse(ad::slice_cols(log_dur, b * N, Nb), tape.constant(dur_target));

    const auto path = out.alignment.hard.path();
    for (Index t = 0; t < Tb; ++t)
      for (Index h = 0; h < H; ++h)
        regulate[static_cast<std::size_t>((b * T + t) * H + h)] = (b * N + path[static_cast<std::size_t>(t)]) * H + h;

    out.align_loss = static_cast<double>(fs.value()(0, 0));
    out.bin_loss = static_cast<double>(bin.value()(0, 0));
    out.duration_loss = static_cast<double>(dur.value()(0, 0));
    terms_align.push_back(fs);
    terms_bin.push_back(bin);
    terms_dur.push_back(dur);
    result.items.push_back(std::move(out));
  }

  const Var expanded = ad::gather(hidden, std::span<const Index>(regulate), H, B * T, B);
  const Var pred = decoder(s, expanded, frame_len);

  std::vector<Var> totals;
  for (Index b = 0; b < B; ++b) {
    auto& out = result.items[static_cast<std::size_t>(b)];
    const Index Tb = frame_len[b];
    const Var pb = ad::slice_cols(pred, b * T, Tb);
    const Var feat = ad::mse(pb, ad::slice_cols(tgt, b * T, Tb));
    out.feature_loss = static_cast<double>(feat.value()(0, 0));
    out.predicted_features.values = pb.value().transpose().template cast<float>();
    const std::vector<Var> parts{feat, terms_dur[static_cast<std::size_t>(b)], terms_align[static_cast<std::size_t>(b)],
                                 terms_bin[static_cast<std::size_t>(b)]};
    const std::vector<Scalar> w{Scalar(1), static_cast<Scalar>(weights.duration), static_cast<Scalar>(weights.align),
                                static_cast<Scalar>(weights.bin)};
    const Var total = ad::weighted_sum<Scalar>(parts, w);
    out.total = static_cast<double>(total.value()(0, 0));
    totals.push_back(total);
  }
  const std::vector<Scalar> mean_w(totals.size(), Scalar(1) / static_cast<Scalar>(B));
  result.total = ad::weighted_sum<Scalar>(totals, mean_w);
  return result;
}

template <typename Scalar>
typename Text2Vec<Scalar>::Matrix Text2Vec<Scalar>::encode_tokens(const TokenSequence& tokens,
                                                                  const SpeakerEmbedding& spk) const {
  validate(tokens);
  if (tokens.vocab_size != config_.vocab_size) throw VocabularyError("token vocabulary does not match the model");
  validate(spk);
  ad::Tape<Scalar> tape;
  Scope s = eval_scope(tape, params_);
  const Var emb = embed(s, tokens.ids, 1, {});
  const Var hidden = encoder(s, emb, tape.constant(spk.vector.template cast<Scalar>()), {});
  return hidden.value().transpose();
}

template <typename Scalar>
typename Text2Vec<Scalar>::Vector Text2Vec<Scalar>::predict_durations(const Matrix& text_hidden) const {
  if (text_hidden.cols() != config_.hidden_dim) throw ShapeError("text_hidden must be N x hidden_dim");
  ad::Tape<Scalar> tape;
  Scope s = eval_scope(tape, params_);
  return duration_head(s, tape.constant(text_hidden.transpose()), {}).value().row(0).transpose();
}

template <typename Scalar>
FeatureSequence Text2Vec<Scalar>::decode_features(const Matrix& expanded) const {
  if (expanded.cols() != config_.hidden_dim || expanded.rows() < 1)
    throw ShapeError("expanded must be T x hidden_dim with T >= 1");
  ad::Tape<Scalar> tape;
  Scope s = eval_scope(tape, params_);
  FeatureSequence out;
  out.values = decoder(s, tape.constant(expanded.transpose()), {}).value().transpose().template cast<float>();
  return out;
}

template <typename Scalar>
SpeakerEmbedding Text2Vec<Scalar>::speaker_embed(const FeatureSequence& target, Index valid_frames) const {
  validate(target);
  if (target.num_frames() < 1 || valid_frames == 0) throw PreconditionError("speaker embedding needs at least one frame");
  if (valid_frames > target.num_frames()) throw ShapeError("valid_frames exceeds the sequence length");
  ad::Tape<Scalar> tape;
  Scope s = eval_scope(tape, params_);
  const Var x = tape.constant(target.values.transpose().template cast<Scalar>());
  std::vector<Index> lengths;
  if (valid_frames > 0) lengths.push_back(valid_frames);
  SpeakerEmbedding e;
  e.vector = speaker_encoder(s, x, lengths).value().col(0).template cast<float>();
  e.source_stage = SpeakerStage::kText2Vec;
  return e;
}

template <typename Scalar>
FeatureSequence Text2Vec<Scalar>::infer(const TokenSequence& tokens, const SpeakerEmbedding& spk, double pace,
                                        align::DurationVector* durations) const {
  if (!(pace > 0)) throw PreconditionError("pace must be positive");
  const Matrix hidden = encode_tokens(tokens, spk);
  const Eigen::VectorXd pred = predict_durations(hidden).template cast<double>();
  const align::DurationVector d = inference_durations(std::span<const double>(pred.data(), static_cast<std::size_t>(pred.size())), pace);
  if (durations) *durations = d;
  return decode_features(regulate_length(hidden, d));
}

template class Text2Vec<float>;
template class Text2Vec<double>;

}  // namespace wtv
