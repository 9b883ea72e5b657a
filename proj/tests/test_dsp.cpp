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
#include <complex>
#include <cstring>
#include <filesystem>
#include <numbers>
#include <random>

#include "doctest.h"
#include "gradcheck.hpp"
#include "wtv/audio.hpp"
#include "wtv/f0.hpp"
#include "wtv/features.hpp"
#include "wtv/io.hpp"
#include "wtv/mel.hpp"

namespace {

using wtv::testing::random_matrix;

std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("wtv_test_dsp_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

// Log-mel by direct complex DFT sums, reflect padding written out by hand.
Eigen::MatrixXd naive_log_mel(const Eigen::VectorXd& x, const wtv::MelConfig& c) {
  const int N = c.n_fft;
  const long L = x.size();
  const long frames = 1 + L / c.hop;
  const int bins = N / 2 + 1;
  auto reflect = [&](long p) {
    if (p < 0) return -p;
    if (p >= L) return 2 * (L - 1) - p;
    return p;
  };
  const double mlo = 2595.0 * std::log10(1.0 + c.fmin / 700.0);
  const double mhi = 2595.0 * std::log10(1.0 + c.fmax / 700.0);
  std::vector<double> edge(static_cast<std::size_t>(c.n_mels + 2));
  for (int i = 0; i < c.n_mels + 2; ++i)
    edge[static_cast<std::size_t>(i)] =
        700.0 * (std::pow(10.0, (mlo + (mhi - mlo) * i / (c.n_mels + 1)) / 2595.0) - 1.0);
  Eigen::MatrixXd out(c.n_mels, frames);
  for (long f = 0; f < frames; ++f) {
    std::vector<double> mag(static_cast<std::size_t>(bins));
    for (int k = 0; k < bins; ++k) {
      std::complex<double> acc = 0;
      for (int n = 0; n < N; ++n) {
        const int off = (N - c.win) / 2;
        const double w = (n >= off && n < off + c.win)
                             ? 0.5 * (1 - std::cos(2 * std::numbers::pi * (n - off) / c.win))
                             : 0.0;
        acc += x(reflect(f * c.hop + n - N / 2)) * w * std::polar(1.0, -2 * std::numbers::pi * k * n / N);
      }
      mag[static_cast<std::size_t>(k)] = std::sqrt(std::norm(acc) + c.power_eps);
    }
    for (int m = 0; m < c.n_mels; ++m) {
      double s = 0;
      for (int k = 0; k < bins; ++k) {
        const double hz = static_cast<double>(k) * c.sample_rate / N;
        const double a = edge[m], b = edge[m + 1], d = edge[m + 2];
        double tri = 0;
        if (hz > a && hz <= b) tri = (hz - a) / (b - a);
        if (hz > b && hz < d) tri = (d - hz) / (d - b);
        s += tri * mag[static_cast<std::size_t>(k)];
      }
      out(m, f) = std::log(std::max(s, c.log_floor));
    }
  }
  return out;
}

wtv::MelConfig tiny_mel_config() {
  wtv::MelConfig c;
  c.sample_rate = 8000;
  c.n_fft = 32;
  c.win = 24;
  c.hop = 8;
  c.n_mels = 6;
  c.fmax = 4000;
  return c;
}

}  // namespace

TEST_CASE("mel analysis matches a direct DFT oracle") {
  std::mt19937_64 rng(7);
  const wtv::MelConfig c = tiny_mel_config();
  const wtv::MelAnalyzer<double> analyzer(c);
  const Eigen::VectorXd x = random_matrix(100, 1, rng);
  const Eigen::MatrixXd got = analyzer.log_mel(x);
  const Eigen::MatrixXd want = naive_log_mel(x, c);
  REQUIRE(got.rows() == want.rows());
  REQUIRE(got.cols() == want.cols());
  CHECK((got - want).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("differentiable mel equals plain mel and has correct gradients") {
  std::mt19937_64 rng(11);
  const wtv::MelConfig c = tiny_mel_config();
  const wtv::MelAnalyzer<double> analyzer(c);
  const Eigen::MatrixXd two = random_matrix(1, 80, rng);

  wtv::ad::Tape<double> tape;
  const auto wave = tape.constant(two, 2);
  const auto mel = analyzer.log_mel(wave);
  CHECK(mel.segments() == 2);
  const Eigen::VectorXd first = two.leftCols(40).transpose();
  const Eigen::VectorXd second = two.rightCols(40).transpose();
  const Eigen::MatrixXd a = analyzer.log_mel(first), b = analyzer.log_mel(second);
  CHECK((mel.value().leftCols(a.cols()) - a).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((mel.value().rightCols(b.cols()) - b).cwiseAbs().maxCoeff() < 1e-12);

  const Eigen::MatrixXd target = random_matrix(c.n_mels, 2 * a.cols(), rng, -3, 0);
  const auto r = wtv::testing::grad_check(
      [&](wtv::ad::Tape<double>& t, std::vector<wtv::ad::Var<double>>& in) {
        return wtv::ad::l1(analyzer.log_mel(in[0]), t.constant(target, 2));
      },
      {two}, 1e-6, {2});
  CHECK(r.max_relative_error < 1e-4);
}

TEST_CASE("decoder mel frame count, silence floor and tone peak") {
  const wtv::Waveform one_second = wtv::sine_wave(440.0, 1.0, wtv::kOutputRate);
  const Eigen::MatrixXf mel = wtv::compute_mel(one_second);
  CHECK(mel.rows() == 80);
  CHECK(mel.cols() == 1 + 32000 / 256);

  const Eigen::MatrixXf quiet = wtv::compute_mel(wtv::silence(1.0, wtv::kOutputRate));
  const float floor = std::log(1e-5f);
  CHECK(quiet.maxCoeff() == floor);
  CHECK(quiet.minCoeff() == floor);

  const auto centers = wtv::mel_band_centers(wtv::decoder_mel_config());
  int nearest = 0;
  for (int m = 1; m < 80; ++m)
    if (std::abs(centers[m] - 440.0) < std::abs(centers[nearest] - 440.0)) nearest = m;
  const Eigen::VectorXf energy = mel.rowwise().mean();
  Eigen::Index peak = 0;
  energy.maxCoeff(&peak);
  CHECK(std::abs(static_cast<int>(peak) - nearest) <= 1);

  CHECK_THROWS_AS(wtv::compute_mel(wtv::silence(0.01, wtv::kOutputRate)), wtv::PreconditionError);
  CHECK_THROWS_AS(wtv::compute_mel(wtv::silence(1.0, 16000)), wtv::ValidationError);
}

TEST_CASE("wav files round-trip at 16-bit precision") {
  const auto dir = scratch_dir("wav");
  wtv::Waveform w = wtv::sine_wave(300.0, 0.1, 16000, 0.9);
  wtv::write_wav(dir / "a.wav", w);
  const wtv::Waveform r = wtv::read_wav(dir / "a.wav");
  CHECK(r.sample_rate == 16000);
  REQUIRE(r.size() == w.size());
  CHECK((r.samples - w.samples).cwiseAbs().maxCoeff() <= 1.0f / 32768.0f);
  CHECK_THROWS_AS(wtv::read_wav(dir / "missing.wav"), wtv::MissingArtifactError);
  wtv::write_file_atomic(dir / "bad.wav", "not a wav file");
  CHECK_THROWS_AS(wtv::read_wav(dir / "bad.wav"), wtv::FormatError);
}

TEST_CASE("peak normalization") {
  wtv::Waveform w = wtv::sine_wave(100.0, 0.1, 16000, 0.5);
  w.samples(3) = 0.5f;
  const auto n = wtv::normalize_dbfs(w, -3.0);
  CHECK(std::abs(n.samples.cwiseAbs().maxCoeff() - 0.7079) < 1e-4);
  const auto twice = wtv::normalize_dbfs(n, -3.0);
  CHECK((twice.samples - n.samples).cwiseAbs().maxCoeff() < 1e-6);
  CHECK(std::abs(wtv::normalize_dbfs(w, 0.0).samples.cwiseAbs().maxCoeff() - 1.0f) < 1e-6);
  CHECK_THROWS_AS(wtv::normalize_dbfs(wtv::silence(0.1, 16000), -3.0), wtv::PreconditionError);
}

TEST_CASE("silence trimming") {
  const int sr = 16000;
  const auto tone = wtv::sine_wave(440.0, 0.5, sr, 0.5);
  wtv::Waveform padded;
  padded.sample_rate = sr;
  padded.samples = Eigen::VectorXf::Zero(sr / 4 + tone.size() + sr / 3);
  padded.samples.segment(sr / 4, tone.size()) = tone.samples;

  const auto r = wtv::trim_silence(padded, -40.0);
  const int frame = sr / 100;
  CHECK(std::abs(r.start - sr / 4) <= frame);
  CHECK(std::abs((r.start + r.length) - (sr / 4 + tone.size())) <= frame);
  CHECK_FALSE(r.fully_silent);
  CHECK(r.audio.size() <= padded.size());
  CHECK(r.audio.samples.cwiseAbs().maxCoeff() == padded.samples.cwiseAbs().maxCoeff());

  const auto again = wtv::trim_silence(r.audio, -40.0);
  CHECK(again.audio.size() == r.audio.size());

  const auto same = wtv::trim_silence(tone, -40.0);
  CHECK(same.audio.size() == tone.size());

  const auto empty = wtv::trim_silence(wtv::silence(0.3, sr), -40.0);
  CHECK(empty.fully_silent);
  CHECK(empty.audio.size() == 1);
}

TEST_CASE("f0 tracking on synthetic tones") {
  for (int sr : {16000, 32000}) {
    const auto w = wtv::sine_wave(220.0, 1.0, sr, 0.5);
    const auto track = wtv::estimate_f0(w);
    CHECK(track.size() == 100);
    CHECK(std::abs(wtv::median_voiced_f0(track) - 220.0) <= 3.0);
  }
  const auto low = wtv::estimate_f0(wtv::sine_wave(80.0, 1.0, 16000, 0.5));
  CHECK(std::abs(wtv::median_voiced_f0(low) - 80.0) <= 3.0);

  const auto quiet = wtv::estimate_f0(wtv::silence(0.735, 16000));
  CHECK(quiet.size() == 73);
  for (bool v : quiet.voiced) CHECK_FALSE(v);

  const std::string lines = wtv::f0_to_jsonl(wtv::estimate_f0(wtv::silence(0.05, 16000)));
  CHECK(std::count(lines.begin(), lines.end(), '\n') == 5);
}

TEST_CASE("mock extractor contract") {
  const wtv::MockFeatureExtractor ex(3);
  const auto f1 = ex.extract(wtv::silence(320.0 / 16000, 16000));
  CHECK(f1.num_frames() == 1);
  CHECK(f1.dim() == 768);

  const auto tone = wtv::sine_wave(440.0, 1.0, 16000);
  const auto a = ex.extract(tone), b = ex.extract(tone);
  CHECK(a.num_frames() == 50);
  CHECK((a.values.array() == b.values.array()).all());
  const auto quiet = ex.extract(wtv::silence(1.0, 16000));
  CHECK((a.values - quiet.values).norm() > 0);

  const auto other = wtv::MockFeatureExtractor(4).extract(tone);
  CHECK((other.values - a.values).norm() > 0);

  for (int len : {320, 639, 640, 16000, 32000, 12345}) {
    wtv::Waveform w = wtv::sine_wave(200.0, len / 16000.0, 16000);
    CHECK(wtv::extract_features(&ex, w).num_frames() == len / 320);
  }
  CHECK_THROWS_AS(ex.extract(wtv::silence(319.0 / 16000, 16000)), wtv::PreconditionError);
  CHECK_THROWS_AS(ex.extract(wtv::silence(1.0, 32000)), wtv::PreconditionError);
  CHECK_THROWS_AS(wtv::extract_features(nullptr, tone), wtv::ConfigError);

  const auto registry = wtv::ExtractorRegistry::with_builtins();
  CHECK(registry.contains("mock"));
  CHECK_THROWS_AS(registry.create("wav2vec2"), wtv::ConfigError);
  const auto made = registry.create("mock", {.seed = 3});
  CHECK((wtv::extract_features(made.get(), tone).values.array() == a.values.array()).all());
}

TEST_CASE("matrix files and hashes") {
  CHECK(wtv::sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");

  std::mt19937_64 rng(5);
  const Eigen::MatrixXf m = random_matrix(7, 768, rng).cast<float>();
  const std::string bytes = wtv::encode_matrix(wtv::kFeatureMagic, m);
  CHECK(bytes.size() == 16 + 4 * 7 * 768);
  CHECK(bytes.substr(0, 4) == "WTV1");
  CHECK(static_cast<unsigned char>(bytes[4]) == 7);
  // Row-major: the second stored float is m(0, 1).
  float second = 0;
  std::memcpy(&second, bytes.data() + 20, 4);
  CHECK(second == m(0, 1));

  const auto dir = scratch_dir("matrix");
  wtv::write_matrix_file(dir / "u.wtv", wtv::kFeatureMagic, m);
  const Eigen::MatrixXf back = wtv::read_matrix_file(dir / "u.wtv", wtv::kFeatureMagic);
  CHECK((back.array() == m.array()).all());
  CHECK_THROWS_AS(wtv::read_matrix_file(dir / "u.wtv", wtv::kAlignmentMagic), wtv::FormatError);

  wtv::write_file_atomic(dir / "u.wtv", bytes.substr(0, bytes.size() - 4));
  CHECK_THROWS_AS(wtv::read_matrix_file(dir / "u.wtv", wtv::kFeatureMagic), wtv::FormatError);
  std::filesystem::remove(dir / "u.wtv.sha256");
  CHECK_THROWS_AS(wtv::read_matrix_file(dir / "u.wtv", wtv::kFeatureMagic), wtv::FormatError);
  CHECK_THROWS_AS(wtv::read_matrix_file(dir / "none.wtv", wtv::kFeatureMagic), wtv::MissingArtifactError);
}
