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

#include "wtv/features.hpp"

#include <cmath>
#include <random>

namespace wtv {
namespace {

// Log-mel values span roughly [-11.5, 3]; this affine map centers them.
constexpr float kMelShift = 5.0f;
constexpr float kMelScale = 0.25f;

}  // namespace

MockFeatureExtractor::MockFeatureExtractor(std::uint64_t seed)
    : seed_(seed), analyzer_(extractor_mel_config()) {
  const int bands = analyzer_.config().n_mels;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd p(kFeatureDim, bands);
  for (Eigen::Index j = 0; j < p.cols(); ++j)
    for (Eigen::Index i = 0; i < p.rows(); ++i) p(i, j) = normal(rng);
  projection_ = (p / std::sqrt(static_cast<double>(bands))).cast<float>();
}

std::string MockFeatureExtractor::fingerprint() const { return "mock-v1-seed" + std::to_string(seed_); }

FeatureSequence MockFeatureExtractor::extract(const Waveform& w) const {
  if (w.sample_rate != kExtractorRate)
    throw PreconditionError("feature extraction needs 16000 Hz audio, got " + std::to_string(w.sample_rate));
  validate(w);
  if (expected_feature_frames(w.size()) < 1)
    throw PreconditionError("waveform of " + std::to_string(w.size()) +
                            " samples is shorter than one 320-sample frame");
  const Eigen::MatrixXf mel = analyzer_.log_mel(w.samples);  // 80 x T
  const Eigen::MatrixXf centered = (mel.array() + kMelShift) * kMelScale;
  FeatureSequence out;
  out.values = (projection_ * centered).transpose();
  return out;
}

Eigen::Index expected_feature_frames(Eigen::Index num_samples) {
  return num_samples < 0 ? 0 : num_samples / kExtractorHop;
}

FeatureSequence mock_extract_features(const Waveform& w, std::uint64_t seed) {
  return MockFeatureExtractor(seed).extract(w);
}

ExtractorRegistry ExtractorRegistry::with_builtins() {
  ExtractorRegistry r;
  r.add("mock", [](const ExtractorOptions& o) { return std::make_unique<MockFeatureExtractor>(o.seed); });
  return r;
}

void ExtractorRegistry::add(const std::string& name, Factory factory) {
  if (name.empty() || !factory) throw ConfigError("extractor registration needs a name and a factory");
  factories_[name] = std::move(factory);
}

bool ExtractorRegistry::contains(const std::string& name) const { return factories_.count(name) > 0; }

std::vector<std::string> ExtractorRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : factories_) out.push_back(k);
  return out;
}

std::unique_ptr<FeatureExtractor> ExtractorRegistry::create(const std::string& name,
                                                            const ExtractorOptions& options) const {
  const auto it = factories_.find(name);
  if (it == factories_.end()) throw ConfigError("no feature extractor registered under '" + name + "'");
  return it->second(options);
}

FeatureSequence extract_features(const FeatureExtractor* extractor, const Waveform& w) {
  if (extractor == nullptr) throw ConfigError("no feature extractor configured");
  if (w.sample_rate != kExtractorRate)
    throw PreconditionError("feature extraction needs 16000 Hz audio, got " + std::to_string(w.sample_rate));
  const Eigen::Index expected = expected_feature_frames(w.size());
  if (expected < 1)
    throw PreconditionError("waveform of " + std::to_string(w.size()) +
                            " samples is shorter than one 320-sample frame");
  FeatureSequence f = extractor->extract(w);
  validate(f);
  if (f.num_frames() != expected)
    throw InvariantError(extractor->name() + " produced " + std::to_string(f.num_frames()) +
                         " frames, expected " + std::to_string(expected));
  return f;
}

}  // namespace wtv
