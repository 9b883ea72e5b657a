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

#include "wtv/alignment.hpp"

#include <numeric>

namespace wtv::align {

std::vector<int> HardAlignment::path() const {
  std::vector<int> out(static_cast<std::size_t>(values.cols()), -1);
  for (Index t = 0; t < values.cols(); ++t)
    for (Index n = 0; n < values.rows(); ++n)
      if (values(n, t) != 0) {
        out[static_cast<std::size_t>(t)] = static_cast<int>(n);
        break;
      }
  return out;
}

HardAlignment HardAlignment::from_path(const std::vector<int>& path, Index num_tokens) {
  HardAlignment hard;
  hard.values = Eigen::MatrixXi::Zero(num_tokens, static_cast<Index>(path.size()));
  for (std::size_t t = 0; t < path.size(); ++t) {
    if (path[t] < 0 || path[t] >= num_tokens) throw InvariantError("path token out of range");
    hard.values(path[t], static_cast<Index>(t)) = 1;
  }
  return hard;
}

int DurationVector::total() const { return std::accumulate(durations.begin(), durations.end(), 0); }

void validate(const HardAlignment& hard) {
  const Index N = hard.num_tokens(), T = hard.num_frames();
  if (N < 1 || T < 1) throw InvariantError("hard alignment is empty");
  int prev = -1;
  for (Index t = 0; t < T; ++t) {
    int selected = -1;
    for (Index n = 0; n < N; ++n) {
      const int v = hard.values(n, t);
      if (v != 0 && v != 1) throw InvariantError("hard alignment is not binary");
      if (v == 1) {
        if (selected >= 0)
          throw InvariantError("frame " + std::to_string(t) + " selects more than one token");
        selected = static_cast<int>(n);
      }
    }
    if (selected < 0) throw InvariantError("frame " + std::to_string(t) + " selects no token");
    if (t == 0 && selected != 0) throw InvariantError("hard alignment must start at token 0");
    if (t > 0 && (selected < prev || selected > prev + 1))
      throw InvariantError("hard alignment is not monotonic at frame " + std::to_string(t));
    prev = selected;
  }
  if (prev != N - 1) throw InvariantError("hard alignment must end at the last token");
}

void validate(const DurationVector& d) {
  if (d.durations.empty()) throw InvariantError("empty duration vector");
  for (int v : d.durations)
    if (v < 1) throw InvariantError("duration below 1");
}

DurationVector durations_from_hard(const HardAlignment& hard) {
  validate(hard);
  DurationVector out;
  out.durations.assign(static_cast<std::size_t>(hard.num_tokens()), 0);
  for (Index t = 0; t < hard.num_frames(); ++t)
    for (Index n = 0; n < hard.num_tokens(); ++n)
      out.durations[static_cast<std::size_t>(n)] += hard.values(n, t);
  return out;
}

}  // namespace wtv::align
