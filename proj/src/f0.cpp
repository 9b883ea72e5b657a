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

#include "wtv/f0.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"

namespace wtv {

F0Track estimate_f0(const Waveform& w, const F0Config& config) {
  validate(w);
  if (!(config.fmin_hz > 0) || !(config.fmax_hz > config.fmin_hz) || !(config.hop_ms > 0))
    throw ConfigError("invalid f0 configuration");
  const double sr = w.sample_rate;
  const auto hop = static_cast<Eigen::Index>(std::llround(sr * config.hop_ms / 1000.0));
  const auto win = static_cast<Eigen::Index>(std::llround(sr * config.window_ms / 1000.0));
  const auto min_lag = std::max<Eigen::Index>(2, static_cast<Eigen::Index>(std::floor(sr / config.fmax_hz)));
  const auto max_lag = static_cast<Eigen::Index>(std::ceil(sr / config.fmin_hz));
  if (max_lag >= win) throw ConfigError("f0 window too short for the lowest searched frequency");

  const Eigen::Index L = w.samples.size();
  const Eigen::Index frames = L / hop;
  const double silence = std::pow(10.0, config.silence_db / 20.0);

  F0Track track;
  track.hop_seconds = static_cast<double>(hop) / sr;
  track.f0_hz.assign(static_cast<std::size_t>(frames), 0.0);
  track.voiced.assign(static_cast<std::size_t>(frames), false);

  Eigen::VectorXd x(win);
  std::vector<double> r(static_cast<std::size_t>(max_lag + 2), 0.0);
  for (Eigen::Index f = 0; f < frames; ++f) {
    const Eigen::Index start = f * hop;
    x.setZero();
    const Eigen::Index n = std::min(win, L - start);
    x.head(n) = w.samples.segment(start, n).cast<double>();
    x.head(n).array() -= x.head(n).mean();
    if (std::sqrt(x.head(n).squaredNorm() / static_cast<double>(n)) < silence) continue;

    for (Eigen::Index lag = min_lag - 1; lag <= max_lag + 1; ++lag) {
      const Eigen::Index m = win - lag;
      const auto a = x.head(m), b = x.segment(lag, m);
      const double denom = std::sqrt(a.squaredNorm() * b.squaredNorm());
      r[static_cast<std::size_t>(lag)] = denom > 0 ? a.dot(b) / denom : 0.0;
    }
    double best = -1.0;
    for (Eigen::Index lag = min_lag; lag <= max_lag; ++lag) best = std::max(best, r[static_cast<std::size_t>(lag)]);
    if (best < config.voicing_threshold) continue;
    // The first local peak close to the global maximum avoids octave-down errors.
    Eigen::Index pick = -1;
    for (Eigen::Index lag = min_lag; lag <= max_lag; ++lag) {
      const double v = r[static_cast<std::size_t>(lag)];
      if (v >= 0.9 * best && v >= r[static_cast<std::size_t>(lag - 1)] && v >= r[static_cast<std::size_t>(lag + 1)]) {
        pick = lag;
        break;
      }
    }
    if (pick < 0) continue;
    const double y0 = r[static_cast<std::size_t>(pick - 1)], y1 = r[static_cast<std::size_t>(pick)],
                 y2 = r[static_cast<std::size_t>(pick + 1)];
    const double curv = y0 - 2 * y1 + y2;
    const double shift = curv < 0 ? std::clamp(0.5 * (y0 - y2) / curv, -0.5, 0.5) : 0.0;
    const double f0 = sr / (static_cast<double>(pick) + shift);
    if (f0 < config.fmin_hz || f0 > config.fmax_hz) continue;
    track.f0_hz[static_cast<std::size_t>(f)] = f0;
    track.voiced[static_cast<std::size_t>(f)] = true;
  }
  return track;
}

double median_voiced_f0(const F0Track& track) {
  std::vector<double> v;
  for (std::size_t i = 0; i < track.size(); ++i)
    if (track.voiced[i]) v.push_back(track.f0_hz[i]);
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

std::string f0_to_jsonl(const F0Track& track) {
  std::string out;
  for (std::size_t i = 0; i < track.size(); ++i) {
    nlohmann::ordered_json j;
    j["frame"] = i;
    j["time_s"] = static_cast<double>(i) * track.hop_seconds;
    j["f0_hz"] = track.f0_hz[i];
    j["voiced"] = static_cast<bool>(track.voiced[i]);
    out += j.dump();
    out += '\n';
  }
  return out;
}

}  // namespace wtv
