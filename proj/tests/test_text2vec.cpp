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

#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "gradcheck.hpp"
#include "wtv/text2vec.hpp"

namespace {

using wtv::Text2Vec;
using wtv::Text2VecConfig;

Text2VecConfig tiny_config() {
  Text2VecConfig c;
  c.hidden_dim = 16;
  c.fft_layers_per_block = 1;
  c.attention_heads = 2;
  c.conv_filter = 24;
  c.duration_hidden = 12;
  c.align_dim = 8;
  c.speaker_channels = 12;
  c.speaker_attention = 6;
  return c;
}

wtv::FeatureSequence random_features(Eigen::Index T, std::mt19937_64& rng) {
  std::normal_distribution<float> n(0.0f, 1.0f);
  wtv::FeatureSequence f;
  f.values.resize(T, wtv::kFeatureDim);
  for (Eigen::Index i = 0; i < f.values.size(); ++i) f.values.data()[i] = n(rng);
  return f;
}

wtv::SpeakerEmbedding random_speaker(std::mt19937_64& rng) {
  std::normal_distribution<float> n(0.0f, 1.0f);
  wtv::SpeakerEmbedding e;
  e.vector.resize(wtv::kSpeakerDim);
  for (auto& v : e.vector) v = n(rng);
  return wtv::normalized(e);
}

}  // namespace

TEST_CASE("character tokenizer") {
  const auto t = wtv::tokenize("Hi!");
  CHECK(t.ids == std::vector<int>{'H' - 31, 'i' - 31, '!' - 31});
  CHECK(t.vocab_size == 96);
  CHECK(wtv::tokenize("\t\xc3\xa9").ids == std::vector<int>{0, 0, 0});
  CHECK(wtv::tokenize(" ~").ids == std::vector<int>{1, 95});
}

TEST_CASE("encode_tokens shape and conditioning") {
  std::mt19937_64 rng(1);
  const Text2Vec<float> model(tiny_config(), 42);
  const auto spk_a = random_speaker(rng), spk_b = random_speaker(rng);

  const auto one = model.encode_tokens(wtv::tokenize("a"), spk_a);
  CHECK(one.rows() == 1);
  CHECK(one.cols() == 16);
  CHECK(one.allFinite());

  const auto a = model.encode_tokens(wtv::tokenize("hello"), spk_a);
  const auto b = model.encode_tokens(wtv::tokenize("hello"), spk_b);
  CHECK((a - b).cwiseAbs().maxCoeff() > 1e-6);

  const auto ab = model.encode_tokens(wtv::tokenize("ab"), spk_a);
  const auto ba = model.encode_tokens(wtv::tokenize("ba"), spk_a);
  CHECK((ab.row(0) - ba.row(1)).cwiseAbs().maxCoeff() > 1e-6);

  wtv::TokenSequence bad{{3, 200}, 96};
  CHECK_THROWS_AS(model.encode_tokens(bad, spk_a), wtv::VocabularyError);
}

TEST_CASE("length regulation") {
  Eigen::MatrixXd h(2, 3);
  h << 1, 2, 3, 4, 5, 6;
  const auto out = wtv::regulate_length(h, wtv::align::DurationVector{{2, 3}});
  REQUIRE(out.rows() == 5);
  for (int t : {0, 1}) CHECK(out.row(t) == h.row(0));
  for (int t : {2, 3, 4}) CHECK(out.row(t) == h.row(1));
  CHECK(wtv::regulate_length(h, wtv::align::DurationVector{{1, 1}}) == h);
  CHECK_THROWS_AS(wtv::regulate_length(h, wtv::align::DurationVector{{0, 2}}), wtv::InvariantError);

  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> pick(1, 5);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::MatrixXd src = wtv::testing::random_matrix(6, 4, rng);
    wtv::align::DurationVector d;
    for (int n = 0; n < 6; ++n) d.durations.push_back(pick(rng));
    const auto r = wtv::regulate_length(src, d);
    std::vector<int> cumsum(6);
    std::partial_sum(d.durations.begin(), d.durations.end(), cumsum.begin());
    CHECK(r.rows() == cumsum.back());
    for (Eigen::Index t = 0; t < r.rows(); ++t) {
      const auto n = std::upper_bound(cumsum.begin(), cumsum.end(), static_cast<int>(t)) - cumsum.begin();
      CHECK(r.row(t) == src.row(n));
    }
  }
}

TEST_CASE("inference duration rounding") {
  const std::vector<double> log2s(4, std::log(2.0));
  const auto d = wtv::inference_durations(log2s, 1.0);
  CHECK(d.durations == std::vector<int>{1, 1, 1, 1});
  const std::vector<double> p{std::log(1.0 + 2.25), std::log(1.0 + 1.5), -5.0, std::log(1.0 + 0.2)};
  CHECK(wtv::inference_durations(p, 1.0).durations == std::vector<int>{2, 2, 1, 1});
  CHECK(wtv::inference_durations(p, 2.0).durations == std::vector<int>{5, 3, 1, 1});
  CHECK_THROWS_AS(wtv::inference_durations(p, 0.0), wtv::PreconditionError);
}

TEST_CASE("decoder and duration predictor contracts") {
  std::mt19937_64 rng(2);
  Text2Vec<float> model(tiny_config(), 5);
  const Eigen::MatrixXf x = wtv::testing::random_matrix(7, 16, rng).cast<float>();
  const auto f1 = model.decode_features(x.topRows(1));
  CHECK(f1.num_frames() == 1);
  CHECK(f1.dim() == 768);
  const auto a = model.decode_features(x), b = model.decode_features(x);
  CHECK((a.values.array() == b.values.array()).all());

  const auto dur = model.predict_durations(x.topRows(1));
  CHECK(dur.size() == 1);
  CHECK(std::isfinite(dur(0)));

  model.params().at("dec.out.weight").value.setZero();
  model.params().at("dec.out.bias").value.setZero();
  CHECK(model.decode_features(Eigen::MatrixXf::Zero(3, 16)).values.cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("text2vec speaker encoder") {
  std::mt19937_64 rng(3);
  const Text2Vec<double> model(tiny_config(), 8);
  const auto f = random_features(12, rng);
  const auto e = model.speaker_embed(f);
  CHECK(std::abs(e.vector.norm() - 1.0f) < 1e-6);
  CHECK(e.source_stage == wtv::SpeakerStage::kText2Vec);

  wtv::FeatureSequence padded;
  padded.values = Eigen::MatrixXf::Zero(22, 768);
  padded.values.topRows(12) = f.values;
  padded.values.bottomRows(10).setConstant(3.0f);
  const auto ep = model.speaker_embed(padded, 12);
  CHECK((ep.vector - e.vector).cwiseAbs().maxCoeff() < 1e-5);

  const auto other = model.speaker_embed(random_features(15, rng));
  CHECK(wtv::cosine_similarity(e, other) < 1.0);
  CHECK_THROWS_AS(model.speaker_embed(padded, 0), wtv::PreconditionError);
}

TEST_CASE("training forward: identities and skips") {
  std::mt19937_64 rng(4);
  const Text2Vec<float> model(tiny_config(), 11);
  const auto spk = random_speaker(rng);
  const auto tokens = wtv::tokenize("abcd");
  const wtv::align::DurationVector d{{2, 1, 3, 2}};
  const auto own = model.decode_features(wtv::regulate_length(model.encode_tokens(tokens, spk), d));

  const std::vector<wtv::Text2VecExample> batch{{tokens, own}};
  const std::vector<wtv::align::DurationVector> forced{d};
  const std::vector<wtv::SpeakerEmbedding> speakers{spk};
  {
    wtv::ad::Tape<float> tape;
    wtv::nn::Scope<float> s(tape, const_cast<wtv::nn::ParameterSet<float>&>(model.params()));
    const auto r = model.forward_train(s, batch, {}, {&forced, &speakers});
    REQUIRE(r.items.size() == 1);
    CHECK(r.items[0].feature_loss < 1e-10);

    // Duration loss equals the mean squared log-domain residual.
    const auto pred = model.predict_durations(model.encode_tokens(tokens, spk));
    double want = 0;
    for (int n = 0; n < 4; ++n) want += std::pow(pred(n) - std::log1p(d.durations[n]), 2);
    CHECK(r.items[0].duration_loss == doctest::Approx(want / 4).epsilon(1e-5));
  }

  const std::vector<wtv::Text2VecExample> single{{wtv::tokenize("x"), random_features(9, rng)}};
  {
    wtv::ad::Tape<float> tape;
    wtv::nn::Scope<float> s(tape, const_cast<wtv::nn::ParameterSet<float>&>(model.params()));
    const auto r = model.forward_train(s, single, {});
    REQUIRE(r.items.size() == 1);
    CHECK(r.items[0].alignment.durations.durations == std::vector<int>{9});
    CHECK(std::isfinite(r.items[0].duration_loss));
  }

  const std::vector<wtv::Text2VecExample> too_long{{wtv::tokenize("abcdef"), random_features(4, rng)},
                                                   {wtv::tokenize("ab"), random_features(5, rng)}};
  {
    wtv::ad::Tape<float> tape;
    wtv::nn::Scope<float> s(tape, const_cast<wtv::nn::ParameterSet<float>&>(model.params()));
    const auto r = model.forward_train(s, too_long, {});
    CHECK(r.skipped == std::vector<std::size_t>{0});
    CHECK(r.used == std::vector<std::size_t>{1});
    CHECK(r.items[0].alignment.durations.total() == 5);
  }
}

TEST_CASE("padded batches reproduce single-utterance losses") {
  std::mt19937_64 rng(5);
  const Text2Vec<float> model(tiny_config(), 13);
  const std::vector<wtv::Text2VecExample> batch{{wtv::tokenize("hello"), random_features(14, rng)},
                                                {wtv::tokenize("hi"), random_features(6, rng)},
                                                {wtv::tokenize("sweet"), random_features(9, rng)}};
  const wtv::Text2VecLossWeights w{1.0, 1.0, 0.5};
  wtv::ad::Tape<float> tape;
  wtv::nn::Scope<float> s(tape, const_cast<wtv::nn::ParameterSet<float>&>(model.params()));
  const auto joint = model.forward_train(s, batch, w);
  REQUIRE(joint.items.size() == 3);
  double mean = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    wtv::ad::Tape<float> t1;
    wtv::nn::Scope<float> s1(t1, const_cast<wtv::nn::ParameterSet<float>&>(model.params()));
    const auto alone = model.forward_train(s1, std::span(&batch[i], 1), w);
    const auto& a = alone.items[0];
    const auto& j = joint.items[i];
    CHECK(std::abs(a.feature_loss - j.feature_loss) < 1e-5);
    CHECK(std::abs(a.duration_loss - j.duration_loss) < 1e-5);
    CHECK(std::abs(a.align_loss - j.align_loss) < 1e-5);
    CHECK(std::abs(a.bin_loss - j.bin_loss) < 1e-5);
    CHECK(a.alignment.durations.durations == j.alignment.durations.durations);
    mean += a.total / 3;
  }
  CHECK(std::abs(joint.total.value()(0, 0) - mean) < 1e-5);
}

TEST_CASE("feature loss gradient with respect to the output projection") {
  std::mt19937_64 rng(6);
  Text2Vec<double> model(tiny_config(), 17);
  const std::vector<wtv::Text2VecExample> batch{{wtv::tokenize("abc"), random_features(7, rng)}};
  const std::vector<wtv::align::DurationVector> forced{{{2, 3, 2}}};
  const std::vector<wtv::SpeakerEmbedding> speakers{random_speaker(rng)};
  const wtv::Text2VecForwardOptions opts{&forced, &speakers};
  auto loss = [&]() {
    wtv::ad::Tape<double> tape;
    wtv::nn::Scope<double> s(tape, model.params(), true);
    const auto r = model.forward_train(s, batch, {}, opts);
    return r.items[0].feature_loss;
  };

  auto& w = model.params().at("dec.out.weight");
  model.params().zero_grad();
  {
    wtv::ad::Tape<double> tape;
    wtv::nn::Scope<double> s(tape, model.params(), true);
    const auto r = model.forward_train(s, batch, {0.0, 0.0, 0.0}, opts);
    tape.backward(r.total);
  }
  std::uniform_int_distribution<Eigen::Index> pick(0, w.value.size() - 1);
  Eigen::VectorXd analytic(24), numeric(24);
  for (int k = 0; k < 24; ++k) {
    const Eigen::Index i = pick(rng);
    const double orig = w.value.data()[i];
    w.value.data()[i] = orig + 1e-5;
    const double fp = loss();
    w.value.data()[i] = orig - 1e-5;
    const double fm = loss();
    w.value.data()[i] = orig;
    numeric(k) = (fp - fm) / 2e-5;
    analytic(k) = w.grad.data()[i];
  }
  CHECK((analytic - numeric).norm() / numeric.norm() < 1e-4);
}

TEST_CASE("inference length bookkeeping") {
  std::mt19937_64 rng(7);
  const Text2Vec<float> model(tiny_config(), 19);
  const auto spk = random_speaker(rng);
  const auto tokens = wtv::tokenize("a short sentence");
  wtv::align::DurationVector d1, d2;
  const auto f1 = model.infer(tokens, spk, 1.0, &d1);
  const auto f2 = model.infer(tokens, spk, 2.0, &d2);
  CHECK(f1.num_frames() == d1.total());
  CHECK(f2.num_frames() == d2.total());
  CHECK(f1.num_frames() >= tokens.length());
  for (int v : d1.durations) CHECK(v >= 1);
  const auto pred = model.predict_durations(model.encode_tokens(tokens, spk));
  for (std::size_t n = 0; n < d2.durations.size(); ++n) {
    const double raw = 2.0 * std::expm1(static_cast<double>(pred(static_cast<Eigen::Index>(n))));
    CHECK(d2.durations[n] == std::max(1, static_cast<int>(std::floor(raw + 0.5))));
  }
  CHECK_THROWS_AS(model.infer(tokens, spk, 0.0), wtv::PreconditionError);
}
