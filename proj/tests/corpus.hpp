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

// Small synthetic corpora for tests: harmonic tones, mock features.

#ifndef WTV_TESTS_CORPUS_HPP_
#define WTV_TESTS_CORPUS_HPP_

#include <cmath>
#include <string>
#include <vector>

#include "wtv/audio.hpp"
#include "wtv/features.hpp"
#include "wtv/text2vec.hpp"
#include "wtv/training.hpp"

namespace wtv::testing {

// Two-partial tone with a slow amplitude wobble so the mel has structure.
inline Waveform voiced_tone(double f0, double seconds, int rate) {
  const auto n = static_cast<Eigen::Index>(std::llround(seconds * rate));
  Waveform w;
  w.sample_rate = rate;
  w.samples.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / rate;
    const double env = 0.6 + 0.4 * std::sin(2 * M_PI * 3.0 * t);
    w.samples[i] = static_cast<float>(env * (0.3 * std::sin(2 * M_PI * f0 * t) + 0.15 * std::sin(2 * M_PI * 2 * f0 * t)));
  }
  return w;
}

// Vowel-like signal: band-limited harmonics with a 1/k tilt, three formant
// bumps, slight vibrato and a syllable-rate envelope. Peak is about 0.5.
inline Waveform vowel(double f0, double seconds, int rate) {
  const auto n = static_cast<Eigen::Index>(std::llround(seconds * rate));
  const double formants[3][2] = {{700, 130}, {1220, 170}, {2600, 250}};
  const int harmonics = static_cast<int>(std::min(15000.0, 0.45 * rate) / (f0 * 1.03));
  std::vector<double> gain(static_cast<std::size_t>(harmonics) + 1, 0.0);
  for (int k = 1; k <= harmonics; ++k) {
    const double f = k * f0;
    double g = 0.15;
    for (const auto& fm : formants) g += std::exp(-0.5 * std::pow((f - fm[0]) / fm[1], 2));
    gain[static_cast<std::size_t>(k)] = g / k;
  }
  Waveform w;
  w.sample_rate = rate;
  w.samples.resize(n);
  double phase = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / rate;
    phase += 2 * M_PI * f0 * (1 + 0.02 * std::sin(2 * M_PI * 5.0 * t)) / rate;
    double v = 0;
    for (int k = 1; k <= harmonics; ++k) v += gain[static_cast<std::size_t>(k)] * std::sin(k * phase);
    w.samples[i] = static_cast<float>((0.55 + 0.45 * std::sin(2 * M_PI * 3.0 * t)) * 0.25 * v);
  }
  return w;
}

inline Text2VecExample text2vec_example(const std::string& text, double f0, double seconds) {
  return {tokenize(text), mock_extract_features(voiced_tone(f0, seconds, kExtractorRate))};
}

inline Vec2WavExample vec2wav_example(const std::string& id, double f0, double seconds) {
  return make_vec2wav_example(id, mock_extract_features(voiced_tone(f0, seconds, kExtractorRate)),
                              voiced_tone(f0, seconds, kOutputRate));
}

}  // namespace wtv::testing

#endif  // WTV_TESTS_CORPUS_HPP_
