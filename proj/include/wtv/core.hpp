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

// Domain value types shared by both synthesis stages and the frame/sample
// arithmetic that ties the 50 Hz feature rate to waveform sample rates.

#ifndef WTV_CORE_HPP_
#define WTV_CORE_HPP_

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace wtv {

// Error hierarchy. Each class maps to one failure category of the pipeline;
// the CLI turns them into exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class ConfigError : public Error { using Error::Error; };
class PreconditionError : public Error { using Error::Error; };
class ShapeError : public Error { using Error::Error; };
class InfeasibleError : public Error { using Error::Error; };
class VocabularyError : public Error { using Error::Error; };
class InvariantError : public Error { using Error::Error; };
class FormatError : public Error { using Error::Error; };
class ValidationError : public Error { using Error::Error; };
class MissingArtifactError : public Error { using Error::Error; };
class DivergenceError : public Error { using Error::Error; };

inline constexpr int kFeatureDim = 768;
inline constexpr int kFrameRateHz = 50;
inline constexpr int kSpeakerDim = 192;
inline constexpr int kExtractorRate = 16000;
inline constexpr int kOutputRate = 32000;
// Samples per feature frame at the extractor input rate (16 kHz / 50 Hz).
inline constexpr int kExtractorHop = kExtractorRate / kFrameRateHz;

using FeatureMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic>;

struct Waveform {
  Eigen::VectorXf samples;
  int sample_rate = kOutputRate;

  Eigen::Index size() const { return samples.size(); }
  double duration_seconds() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

// T x 768 matrix of intermediate speech features at 50 Hz.
struct FeatureSequence {
  FeatureMatrix values;

  Eigen::Index num_frames() const { return values.rows(); }
  Eigen::Index dim() const { return values.cols(); }
};

struct TokenSequence {
  std::vector<int> ids;
  int vocab_size = 0;

  Eigen::Index length() const { return static_cast<Eigen::Index>(ids.size()); }
};

enum class SpeakerStage { kText2Vec, kVec2Wav, kExternal };

struct SpeakerEmbedding {
  Eigen::VectorXf vector;
  SpeakerStage source_stage = SpeakerStage::kExternal;
};

std::string to_string(SpeakerStage stage);
SpeakerStage speaker_stage_from_string(const std::string& name);

// Number of waveform samples covered by `frames` feature frames.
std::int64_t frames_to_samples(std::int64_t frames, int sample_rate);

void validate(const Waveform& w);
void validate(const FeatureSequence& f);
void validate(const TokenSequence& tokens);
void validate(const SpeakerEmbedding& e);

// Scales to unit L2 norm in place of a copy; zero vectors are rejected.
SpeakerEmbedding normalized(SpeakerEmbedding e);

double cosine_similarity(const SpeakerEmbedding& a, const SpeakerEmbedding& b);

}  // namespace wtv

#endif  // WTV_CORE_HPP_
