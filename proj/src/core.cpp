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

#include "wtv/core.hpp"

#include <algorithm>
#include <cmath>

namespace wtv {

std::string to_string(SpeakerStage stage) {
  switch (stage) {
    case SpeakerStage::kText2Vec: return "text2vec";
    case SpeakerStage::kVec2Wav: return "vec2wav";
    case SpeakerStage::kExternal: return "external";
  }
  return "external";
}

SpeakerStage speaker_stage_from_string(const std::string& name) {
  if (name == "text2vec" || name == "t2v") return SpeakerStage::kText2Vec;
  if (name == "vec2wav" || name == "v2w") return SpeakerStage::kVec2Wav;
  if (name == "external") return SpeakerStage::kExternal;
  throw ConfigError("unknown speaker stage '" + name + "'");
}

std::int64_t frames_to_samples(std::int64_t frames, int sample_rate) {
  if (sample_rate != kExtractorRate && sample_rate != kOutputRate)
    throw ConfigError("unsupported sample rate " + std::to_string(sample_rate));
  if (frames < 0) throw PreconditionError("negative frame count");
  return frames * (sample_rate / kFrameRateHz);
}

void validate(const Waveform& w) {
  if (w.sample_rate <= 0) throw ValidationError("non-positive sample rate");
  if (!w.samples.allFinite()) throw ValidationError("waveform has non-finite samples");
}

void validate(const FeatureSequence& f) {
  if (f.dim() != kFeatureDim)
    throw ShapeError("feature dimension " + std::to_string(f.dim()) + " != 768");
  if (!f.values.allFinite()) throw ValidationError("feature sequence has non-finite entries");
}

void validate(const TokenSequence& tokens) {
  if (tokens.ids.empty()) throw PreconditionError("empty token sequence");
  for (int id : tokens.ids)
    if (id < 0 || id >= tokens.vocab_size)
      throw VocabularyError("token id " + std::to_string(id) + " outside vocabulary of size " +
                            std::to_string(tokens.vocab_size));
}

void validate(const SpeakerEmbedding& e) {
  if (e.vector.size() != kSpeakerDim)
    throw ShapeError("speaker embedding must have 192 entries, got " +
                     std::to_string(e.vector.size()));
  if (!e.vector.allFinite()) throw ValidationError("speaker embedding has non-finite entries");
}

SpeakerEmbedding normalized(SpeakerEmbedding e) {
  const float n = e.vector.norm();
  if (!(n > 0.0f)) throw PreconditionError("cannot normalize a zero speaker embedding");
  e.vector /= n;
  return e;
}

double cosine_similarity(const SpeakerEmbedding& a, const SpeakerEmbedding& b) {
  if (a.vector.size() != b.vector.size()) throw ShapeError("embedding size mismatch");
  const Eigen::VectorXd x = a.vector.cast<double>();
  const Eigen::VectorXd y = b.vector.cast<double>();
  const double denom = x.norm() * y.norm();
  if (!(denom > 0.0)) throw PreconditionError("cosine similarity of a zero vector");
  return std::clamp(x.dot(y) / denom, -1.0, 1.0);
}

}  // namespace wtv
