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
#include <random>

#include "doctest.h"
#include "gradcheck.hpp"
#include "wtv/audio.hpp"
#include "wtv/vec2wav.hpp"

namespace {

using wtv::Vec2Wav;
using wtv::Vec2WavConfig;
using Eigen::Index;

Vec2WavConfig tiny_config() {
  Vec2WavConfig c;
  c.base_channels = 16;
  c.min_channels = 4;
  c.mpd_channels = {4, 8, 8, 8, 8};
  c.msd_channels = {4, 4, 8, 8, 8, 8, 8};
  c.speaker_channels = 8;
  c.speaker_attention = 4;
  return c;
}

wtv::FeatureSequence random_features(Index T, std::mt19937_64& rng) {
  std::normal_distribution<float> n(0.0f, 1.0f);
  wtv::FeatureSequence f;
  f.values.resize(T, wtv::kFeatureDim);
  for (Index i = 0; i < f.values.size(); ++i) f.values.data()[i] = n(rng);
  return f;
}

wtv::SpeakerEmbedding random_speaker(std::mt19937_64& rng) {
  std::normal_distribution<float> n(0.0f, 1.0f);
  wtv::SpeakerEmbedding e;
  e.vector.resize(wtv::kSpeakerDim);
  for (auto& v : e.vector) v = n(rng);
  return wtv::normalized(e);
}

// Score sets with fixed maps, for loss arithmetic.
wtv::DiscriminatorScores<double> constant_scores(wtv::ad::Tape<double>& tape, const std::vector<Index>& sizes,
                                                 double value) {
  wtv::DiscriminatorScores<double> out;
  for (Index n : sizes) {
    wtv::SubDiscriminatorOutput<double> s;
    s.score = tape.constant(wtv::ad::Matrix<double>::Constant(1, n, value));
    s.features.push_back(s.score);
    out.push_back(s);
  }
  return out;
}

}  // namespace

TEST_CASE("configuration contract") {
  const Vec2WavConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.upsample_factor() == 640);
  CHECK(c.mpd_periods == std::vector<int>{2, 3, 5, 7, 11, 13, 17, 19});
  CHECK(c.msd_scales == 3);
  CHECK(c.num_subdiscriminators() == 11);
  CHECK(c.stage_channels(0) == 512);
  CHECK(c.stage_channels(6) == 8);

  Vec2WavConfig bad = c;
  bad.upsample_kernels[0] = 4;
  CHECK_THROWS_AS(bad.validate(), wtv::ConfigError);
  bad = c;
  bad.upsample_rates = {5, 4, 4, 2, 2, 1};
  bad.upsample_kernels = {11, 8, 8, 4, 4, 3};
  CHECK_THROWS_AS(bad.validate(), wtv::ConfigError);
  bad = c;
  bad.mpd_periods = {2, 3, 5, 7, 11};
  CHECK_THROWS_AS(bad.validate(), wtv::ConfigError);
}

TEST_CASE("generator length contract and output range") {
  const Vec2Wav<float> model(tiny_config(), 3);
  std::mt19937_64 rng(11);
  const auto spk = random_speaker(rng);
  const auto z = wtv::sample_noise(64, rng);
  for (Index T : {1, 7, 32, 100}) {
    const wtv::Waveform w = model.generate(random_features(T, rng), spk, z);
    CHECK(w.size() == 640 * T);
    CHECK(w.sample_rate == 32000);
    CHECK(w.samples.allFinite());
    CHECK(w.samples.cwiseAbs().maxCoeff() < 1.0f);
  }
}

TEST_CASE("noise changes the output at initialization") {
  const Vec2Wav<float> model(tiny_config(), 5);
  std::mt19937_64 rng(2);
  const auto feats = random_features(4, rng);
  const auto spk = random_speaker(rng);
  const auto z1 = wtv::sample_noise(64, rng);
  const auto z2 = wtv::sample_noise(64, rng);
  const auto a = model.generate(feats, spk, z1);
  const auto b = model.generate(feats, spk, z2);
  const auto a2 = model.generate(feats, spk, z1);
  CHECK((a.samples - b.samples).cwiseAbs().maxCoeff() > 0.0f);
  CHECK((a.samples - a2.samples).cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("period folding") {
  Eigen::VectorXf x(6);
  x << 0, 1, 2, 3, 4, 5;
  const Eigen::MatrixXf g6 = wtv::mpd_grid(x, 2);
  REQUIRE(g6.rows() == 2);
  REQUIRE(g6.cols() == 3);
  CHECK(g6(0, 0) == 0);
  CHECK(g6(1, 0) == 1);
  CHECK(g6(0, 2) == 4);
  CHECK(g6(1, 2) == 5);

  Eigen::VectorXf y(7);
  y << 0, 1, 2, 3, 4, 5, 6;
  const Eigen::MatrixXf g7 = wtv::mpd_grid(y, 2);
  REQUIRE(g7.rows() == 2);
  REQUIRE(g7.cols() == 4);
  CHECK(g7(0, 3) == 6);
  CHECK(g7(1, 3) == 5);  // reflected, edge not repeated

  const Eigen::MatrixXf g1 = wtv::mpd_grid(Eigen::VectorXf::Constant(1, 0.5f), 3);
  CHECK(g1.rows() == 3);
  CHECK((g1.array() == 0.5f).all());
}

TEST_CASE("discriminator layout") {
  const Vec2Wav<float> model(tiny_config(), 7);
  wtv::ad::Tape<float> tape;
  wtv::nn::Scope<float> d(tape, const_cast<wtv::nn::ParameterSet<float>&>(model.discriminator_params()));
  std::mt19937_64 rng(1);
  const auto wave = tape.constant(wtv::testing::random_matrix(1, 2 * 20480, rng).cast<float>(), 2);
  const auto scores = model.discriminate(d, wave);
  REQUIRE(scores.size() == 11);
  int mpd = 0, msd = 0;
  for (const auto& s : scores) {
    mpd += s.name.rfind("mpd", 0) == 0;
    msd += s.name.rfind("msd", 0) == 0;
    CHECK(s.features.size() >= 2);
    CHECK(s.score.value().allFinite());
  }
  CHECK(mpd == 8);
  CHECK(msd == 3);
  CHECK(scores[0].score.segments() == 2 * 2);   // period 2
  CHECK(scores[7].score.segments() == 2 * 19);  // period 19
  // Stride-1 first layer: its length is the pooled input length.
  CHECK(scores[8].features[0].segment_length() == 20480);
  CHECK(scores[9].features[0].segment_length() == 10240);
  CHECK(scores[10].features[0].segment_length() == 5120);

  const auto zero = tape.constant(wtv::ad::Matrix<float>::Zero(1, 20480));
  for (const auto& s : model.discriminate(d, zero)) CHECK(s.score.value().allFinite());
}

TEST_CASE("least-squares adversarial losses") {
  wtv::ad::Tape<double> tape;
  const std::vector<Index> sizes{5, 3, 8};
  const double n = static_cast<double>(sizes.size());
  CHECK(wtv::discriminator_loss(constant_scores(tape, sizes, 1.0), constant_scores(tape, sizes, 0.0))
            .value()(0, 0) == doctest::Approx(0.0));
  CHECK(wtv::discriminator_loss(constant_scores(tape, sizes, 0.0), constant_scores(tape, sizes, 1.0))
            .value()(0, 0) == doctest::Approx(2.0 * n));
  CHECK(wtv::generator_adv_loss(constant_scores(tape, sizes, 1.0)).value()(0, 0) == doctest::Approx(0.0));
  CHECK(wtv::generator_adv_loss(constant_scores(tape, sizes, 0.0)).value()(0, 0) == doctest::Approx(n));

  std::mt19937_64 rng(9);
  wtv::DiscriminatorScores<double> real, fake;
  double d_oracle = 0, g_oracle = 0;
  for (Index sz : sizes) {
    const auto r = wtv::testing::random_matrix(1, sz, rng, -2, 2);
    const auto f = wtv::testing::random_matrix(1, sz, rng, -2, 2);
    double er = 0, ef = 0, eg = 0;
    for (Index i = 0; i < sz; ++i) {
      er += (r(0, i) - 1) * (r(0, i) - 1);
      ef += f(0, i) * f(0, i);
      eg += (f(0, i) - 1) * (f(0, i) - 1);
    }
    d_oracle += er / sz + ef / sz;
    g_oracle += eg / sz;
    wtv::SubDiscriminatorOutput<double> a, b;
    a.score = tape.constant(r);
    b.score = tape.constant(f);
    real.push_back(a);
    fake.push_back(b);
  }
  CHECK(wtv::discriminator_loss(real, fake).value()(0, 0) == doctest::Approx(d_oracle).epsilon(1e-12));
  CHECK(wtv::generator_adv_loss(fake).value()(0, 0) == doctest::Approx(g_oracle).epsilon(1e-12));
}

TEST_CASE("feature matching loss") {
  wtv::ad::Tape<double> tape;
  std::mt19937_64 rng(4);
  wtv::DiscriminatorScores<double> real, shifted, noisy;
  double oracle = 0;
  int layers = 0;
  for (int s = 0; s < 3; ++s) {
    wtv::SubDiscriminatorOutput<double> r, sh, nz;
    for (int l = 0; l < 2 + s; ++l) {
      const auto m = wtv::testing::random_matrix(3, 4 + l, rng);
      const auto m2 = wtv::testing::random_matrix(3, 4 + l, rng);
      r.features.push_back(tape.constant(m));
      sh.features.push_back(tape.constant((m.array() + 1.0).matrix()));
      nz.features.push_back(tape.constant(m2));
      oracle += (m - m2).cwiseAbs().mean();
      ++layers;
    }
    real.push_back(r);
    shifted.push_back(sh);
    noisy.push_back(nz);
  }
  CHECK(wtv::feature_matching_loss(real, real).value()(0, 0) == 0.0);
  CHECK(wtv::feature_matching_loss(real, shifted, 1.0).value()(0, 0) == doctest::Approx(layers));
  CHECK(wtv::feature_matching_loss(real, shifted).value()(0, 0) == doctest::Approx(2.0 * layers));
  CHECK(wtv::feature_matching_loss(real, noisy).value()(0, 0) == doctest::Approx(2.0 * oracle).epsilon(1e-12));

  auto broken = noisy;
  broken[1].features.pop_back();
  CHECK_THROWS_AS(wtv::feature_matching_loss(real, broken), wtv::ShapeError);
}

TEST_CASE("mel weight schedule") {
  CHECK(wtv::mel_weight_schedule(0, 2000, 45.0) == 45.0);
  CHECK(wtv::mel_weight_schedule(2000, 2000, 45.0) == 0.0);
  CHECK(wtv::mel_weight_schedule(1000, 2000, 45.0) == doctest::Approx(22.5));
  CHECK(wtv::mel_weight_schedule(5000, 2000, 45.0) == 0.0);
  CHECK_THROWS_AS(wtv::mel_weight_schedule(0, 0, 45.0), wtv::PreconditionError);
}

TEST_CASE("mel reconstruction loss") {
  const wtv::Waveform tone = wtv::sine_wave(440.0, 0.2, 32000);
  const wtv::Waveform quiet = wtv::silence(0.2, 32000);
  CHECK(wtv::mel_reconstruction_loss(tone, tone) == 0.0);
  CHECK(wtv::mel_reconstruction_loss(tone, quiet) > 1.0);
  wtv::Waveform shorter = tone;
  shorter.samples.conservativeResize(tone.size() - 1);
  CHECK_THROWS_AS(wtv::mel_reconstruction_loss(tone, shorter), wtv::InvariantError);

  // Graph form against independent per-utterance spectrograms.
  std::mt19937_64 rng(12);
  const Index L = 6400;
  const auto real = wtv::testing::random_matrix(1, 2 * L, rng, -0.5, 0.5);
  const auto fake = wtv::testing::random_matrix(1, 2 * L, rng, -0.5, 0.5);
  const wtv::MelAnalyzer<double> mel(wtv::decoder_mel_config());
  double oracle = 0;
  wtv::ad::Matrix<double> real_mel;
  for (Index b = 0; b < 2; ++b) {
    const Eigen::VectorXd r = real.row(0).segment(b * L, L).transpose();
    const Eigen::VectorXd f = fake.row(0).segment(b * L, L).transpose();
    const auto mr = mel.log_mel(r);
    oracle += (mr - mel.log_mel(f)).cwiseAbs().mean() / 2.0;
    real_mel.conservativeResize(mr.rows(), real_mel.cols() + mr.cols());
    real_mel.rightCols(mr.cols()) = mr;
  }
  wtv::ad::Tape<double> tape;
  const auto loss = wtv::mel_reconstruction_loss(mel, tape.constant(fake, 2), real_mel);
  CHECK(loss.value()(0, 0) == doctest::Approx(oracle).epsilon(1e-10));
}

TEST_CASE("conditional batch normalization") {
  wtv::nn::Rng rng(21);
  std::mt19937_64 data_rng(3);
  const Index C = 3, D = 5, T = 40;
  wtv::nn::ParameterSet<double> ps;
  const wtv::ConditionalBatchNorm cbn{"cbn", C, D};
  cbn.init(ps, rng);

  SUBCASE("identity modulation is plain batch normalization") {
    ps.at("cbn.gamma.weight").value.setZero();
    ps.at("cbn.beta.weight").value.setZero();
    wtv::ad::Tape<double> tape;
    wtv::nn::Scope<double> s(tape, ps);
    const auto x = tape.constant((wtv::testing::random_matrix(C, 2 * T, data_rng, -3, 5).array() * 4.0).matrix(), 2);
    const auto c = tape.constant(wtv::testing::random_matrix(D, 2, data_rng));
    const auto y = cbn(s, x, c, 0.1, 1e-5).value();
    for (Index ch = 0; ch < C; ++ch) {
      const double mean = y.row(ch).mean();
      const double var = (y.row(ch).array() - mean).square().mean();
      CHECK(std::abs(mean) < 1e-4);
      CHECK(std::abs(var - 1.0) < 1e-3);
    }
    // Running statistics moved one momentum step toward the batch.
    const auto& rm = ps.buffer("cbn.running_mean");
    CHECK(rm(0, 0) == doctest::Approx(0.1 * x.value().row(0).mean()));
  }

  SUBCASE("per-utterance shift equals the beta difference") {
    wtv::nn::ParameterSet<double> one;
    const wtv::ConditionalBatchNorm single{"c", 1, D};
    single.init(one, rng, 0.5);
    one.at("c.gamma.weight").value.setZero();
    wtv::ad::Tape<double> tape;
    wtv::nn::Scope<double> s(tape, one);
    const auto seg = wtv::testing::random_matrix(1, T, data_rng);
    wtv::ad::Matrix<double> x(1, 2 * T);
    x << seg, seg;
    const auto cond = wtv::testing::random_matrix(D, 2, data_rng);
    const auto y = single(s, tape.constant(x, 2), tape.constant(cond), 0.1, 1e-5).value();
    const double expected = (one.at("c.beta.weight").value * (cond.col(0) - cond.col(1)))(0, 0);
    CHECK(y.leftCols(T).mean() - y.rightCols(T).mean() == doctest::Approx(expected).epsilon(1e-12));
  }

  SUBCASE("modulation gradients match finite differences") {
    const auto x = wtv::testing::random_matrix(C, 2 * T, data_rng);
    const auto cond = wtv::testing::random_matrix(D, 2, data_rng);
    const auto weights = wtv::testing::random_matrix(C, 2 * T, data_rng);
    auto loss_of = [&](bool backward) {
      wtv::ad::Tape<double> tape;
      wtv::nn::Scope<double> s(tape, ps);
      const auto y = cbn(s, tape.constant(x, 2), tape.constant(cond), 0.1, 1e-5);
      const auto l = wtv::ad::sum(wtv::ad::mul(y, tape.constant(weights, 2)));
      if (backward) tape.backward(l);
      return l.value()(0, 0);
    };
    ps.zero_grad();
    loss_of(true);
    for (const char* name : {"cbn.gamma.weight", "cbn.gamma.bias", "cbn.beta.weight", "cbn.beta.bias"}) {
      auto& p = ps.at(name);
      wtv::ad::Matrix<double> numeric(p.value.rows(), p.value.cols());
      for (Index i = 0; i < p.value.size(); ++i) {
        const double orig = p.value.data()[i];
        p.value.data()[i] = orig + 1e-6;
        const double fp = loss_of(false);
        p.value.data()[i] = orig - 1e-6;
        const double fm = loss_of(false);
        p.value.data()[i] = orig;
        numeric.data()[i] = (fp - fm) / 2e-6;
      }
      CHECK(wtv::testing::relative_error(p.grad, numeric) < 1e-4);
    }
  }

  SUBCASE("zero-variance channel stays finite") {
    wtv::ad::Tape<double> tape;
    wtv::nn::Scope<double> s(tape, ps);
    const auto x = tape.constant(wtv::ad::Matrix<double>::Constant(C, T, 2.0));
    const auto c = tape.constant(wtv::testing::random_matrix(D, 1, data_rng));
    CHECK(cbn(s, x, c, 0.1, 1e-5).value().allFinite());
  }
}

TEST_CASE("vec2wav speaker encoder") {
  const Vec2Wav<double> model(tiny_config(), 13);
  std::mt19937_64 rng(8);
  const Eigen::MatrixXf mel = wtv::testing::random_matrix(80, 30, rng, -8, 1).cast<float>();
  const auto e = model.speaker_embed_mel(mel);
  CHECK(e.vector.size() == 192);
  CHECK(std::abs(e.vector.norm() - 1.0f) < 1e-6f);
  CHECK(e.source_stage == wtv::SpeakerStage::kVec2Wav);
  CHECK(wtv::cosine_similarity(e, e) == doctest::Approx(1.0).epsilon(1e-12));

  Eigen::MatrixXf padded(80, 45);
  padded.leftCols(30) = mel;
  padded.rightCols(15).setConstant(4.0f);
  const auto ep = model.speaker_embed_mel(padded, 30);
  CHECK((e.vector - ep.vector).cwiseAbs().maxCoeff() < 1e-5f);

  CHECK_THROWS_AS(model.speaker_embed_mel(Eigen::MatrixXf(80, 0)), wtv::PreconditionError);
  CHECK_THROWS_AS(model.speaker_embed_mel(Eigen::MatrixXf::Zero(40, 5)), wtv::ShapeError);

  const auto ew = model.speaker_embed(wtv::sine_wave(200.0, 0.3, 32000));
  CHECK(std::abs(ew.vector.norm() - 1.0f) < 1e-6f);
}

TEST_CASE("one adversarial step keeps everything finite") {
  Vec2Wav<float> model(tiny_config(), 17);
  std::mt19937_64 rng(6);
  const Index B = 2, T = 4, L = 640 * T;
  const auto feats = wtv::testing::random_matrix(768, B * T, rng).cast<float>().eval();
  const auto real = (wtv::testing::random_matrix(1, B * L, rng, -0.5, 0.5)).cast<float>().eval();
  const wtv::MelAnalyzer<float> analyzer(wtv::decoder_mel_config());
  wtv::ad::Matrix<float> noise(64, B);
  for (Index b = 0; b < B; ++b) noise.col(b) = wtv::sample_noise(64, rng).values;

  wtv::ad::Tape<float> gt;
  const auto real_mel = analyzer.log_mel(gt.constant(real, B));
  wtv::nn::Scope<float> g(gt, model.generator_params());
  const auto spk = model.speaker_encoder(g, real_mel, {});
  const auto fake = model.generator(g, gt.constant(feats, B), spk, gt.constant(noise));
  REQUIRE(fake.cols() == B * L);

  // Discriminator update on a detached copy of the generator output.
  wtv::ad::Tape<float> dt;
  wtv::nn::Scope<float> d(dt, model.discriminator_params());
  const auto d_loss = wtv::discriminator_loss(model.discriminate(d, dt.constant(real, B)),
                                              model.discriminate(d, dt.constant(fake.value(), B)));
  model.discriminator_params().zero_grad();
  dt.backward(d_loss);
  CHECK(std::isfinite(d_loss.value()(0, 0)));
  for (auto& [name, p] : model.discriminator_params().params()) {
    CHECK(p.grad.allFinite());
    p.value -= 1e-3f * p.grad;
  }

  // Generator update through the frozen discriminators.
  wtv::nn::Scope<float> dg(gt, model.discriminator_params(), false);
  gt.set_grad_enabled(false);
  const auto real_scores = model.discriminate(dg, gt.constant(real, B));
  gt.set_grad_enabled(true);
  const auto fake_scores = model.discriminate(dg, fake);
  const auto adv = wtv::generator_adv_loss(fake_scores);
  const auto fm = wtv::feature_matching_loss(real_scores, fake_scores);
  const auto mel_loss = wtv::mel_reconstruction_loss(analyzer, fake, real_mel.value());
  const std::vector<wtv::ad::Var<float>> terms{adv, fm, mel_loss};
  const std::vector<float> weights{1.0f, 1.0f, 45.0f};
  const auto g_loss = wtv::ad::weighted_sum<float>(terms, weights);
  model.generator_params().zero_grad();
  model.discriminator_params().zero_grad();
  gt.backward(g_loss);
  CHECK(std::isfinite(g_loss.value()(0, 0)));
  for (auto& [name, p] : model.generator_params().params()) {
    CHECK(p.grad.allFinite());
    // A two-unit squeeze bottleneck may be entirely inactive at this width.
    if (name.find(".se") == std::string::npos) {
      INFO(name);
      CHECK(p.grad.cwiseAbs().maxCoeff() > 0.0f);
    }
    p.value -= 1e-4f * p.grad;
  }
  for (const auto& [name, p] : model.discriminator_params().params()) CHECK(p.grad.cwiseAbs().maxCoeff() == 0.0f);
  CHECK(model.generator_params().all_finite());
  CHECK(model.discriminator_params().all_finite());
}
