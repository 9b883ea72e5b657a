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

#ifndef WTV_F0_HPP_
#define WTV_F0_HPP_

#include <string>
#include <vector>

#include "wtv/core.hpp"

namespace wtv {

struct F0Config {
  double hop_ms = 10.0;
  double window_ms = 40.0;
  double fmin_hz = 50.0;
  double fmax_hz = 500.0;
  // Minimum normalized autocorrelation peak for a voiced frame.
  double voicing_threshold = 0.5;
  // Frames quieter than this RMS level are unvoiced regardless of periodicity.
  double silence_db = -50.0;
};

struct F0Track {
  double hop_seconds = 0.01;
  std::vector<double> f0_hz;  // 0 for unvoiced frames
  std::vector<bool> voiced;

  std::size_t size() const { return f0_hz.size(); }
};

// Normalized-autocorrelation pitch tracker. Frame t analyses the window that
// starts at t * hop; the track has floor(duration / hop) frames.
F0Track estimate_f0(const Waveform& w, const F0Config& config = {});

// Median over voiced frames; 0 when nothing is voiced.
double median_voiced_f0(const F0Track& track);

// One JSON object per line: {"frame", "time_s", "f0_hz", "voiced"}.
std::string f0_to_jsonl(const F0Track& track);

}  // namespace wtv

#endif  // WTV_F0_HPP_
