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

#ifndef WTV_AUDIO_HPP_
#define WTV_AUDIO_HPP_

#include <filesystem>
#include <vector>

#include "wtv/core.hpp"

namespace wtv {

// Reads a mono RIFF/WAVE file holding 16-bit PCM or 32-bit float samples.
Waveform read_wav(const std::filesystem::path& path);
// Writes 16-bit PCM mono; samples are clipped to [-1, 1] and rounded.
void write_wav(const std::filesystem::path& path, const Waveform& w);

// Throws ValidationError unless `w` is at `rate`.
void require_sample_rate(const Waveform& w, int rate);

double peak_dbfs(const Waveform& w);
// Scales so that the absolute peak sits at `target_db` dBFS.
Waveform normalize_dbfs(const Waveform& w, double target_db);

struct TrimResult {
  Waveform audio;
  Eigen::Index start = 0;   // first kept sample
  Eigen::Index length = 0;  // kept samples
  bool fully_silent = false;
};

// Removes leading and trailing 10 ms frames whose RMS is below `threshold_db`
// dBFS. A fully silent input keeps a single sample and sets `fully_silent`.
TrimResult trim_silence(const Waveform& w, double threshold_db = -40.0);

// Linear-interpolation resampler for test fixtures and conversions between
// the 16 kHz and 32 kHz domains.
Waveform resample_linear(const Waveform& w, int target_rate);

// Deterministic test signals.
Waveform sine_wave(double frequency_hz, double seconds, int sample_rate, double amplitude = 0.5);
Waveform silence(double seconds, int sample_rate);

}  // namespace wtv

#endif  // WTV_AUDIO_HPP_
