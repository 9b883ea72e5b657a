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

// Every tunable constant of the pipeline in one struct, with a flat
// key = value text form used by config files and checkpoint headers.

#ifndef WTV_CONFIG_HPP_
#define WTV_CONFIG_HPP_

#include <cstdint>
#include <map>
#include <string>

#include "wtv/optim.hpp"
#include "wtv/text2vec.hpp"
#include "wtv/vec2wav.hpp"

namespace wtv {

inline constexpr int kConfigVersion = 1;

using KeyValues = std::map<std::string, std::string>;

struct TrainingConfig {
  int config_version = kConfigVersion;
  std::uint64_t seed = 1234;

  Text2VecConfig text2vec;
  Vec2WavConfig vec2wav;
  OptimizerSpec text2vec_optim = text2vec_optimizer();
  OptimizerSpec vec2wav_optim = vec2wav_optimizer();

  // text2vec loss weights and binarization ramp.
  double lambda_duration = 1.0;
  double lambda_align = 1.0;
  double lambda_bin_max = 1.0;
  std::int64_t bin_ramp_start = 1000;
  std::int64_t bin_ramp_end = 10000;

  // Desk-scale run lengths. The full-scale recipe used 800k text2vec
  // iterations and 80k finetuning iterations on four GPUs.
  std::int64_t text2vec_steps = 5000;
  std::int64_t vec2wav_steps = 10000;
  int text2vec_batch = 4;
  int vec2wav_batch = 2;
  std::int64_t epoch_steps = 1000;
  int window_frames = 32;
  std::int64_t checkpoint_every = 1000;

  std::string extractor = "mock";
  std::uint64_t extractor_seed = 0;
  double normalize_target_db = -3.0;
  double trim_threshold_db = -40.0;
  double min_reference_seconds = 1.0;

  void validate() const;
};

// Narrow models and short runs that train on one CPU core in minutes.
// Architecture constants that fix the interfaces (feature, speaker and
// noise widths, upsampling factor) keep their defaults.
TrainingConfig smoke_config();

KeyValues to_key_values(const TrainingConfig& config);
// Unknown keys and version mismatches are ConfigErrors; absent keys keep
// their defaults.
TrainingConfig from_key_values(const KeyValues& kv);

// "key = value" lines; '#' starts a comment.
std::string format_config_file(const TrainingConfig& config);
TrainingConfig parse_config_file(const std::string& text);
TrainingConfig load_config_file(const std::string& path);
KeyValues parse_key_values(const std::string& text);

// Round-trip decimal form of a double.
std::string format_double(double v);

}  // namespace wtv

#endif  // WTV_CONFIG_HPP_
