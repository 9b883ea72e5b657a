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

// Speech feature extraction behind a small interface. The pipeline only needs
// a deterministic map from 16 kHz audio to a T x 768 matrix at 50 Hz; the
// bundled mock projects log-mel frames through a fixed random matrix.

#ifndef WTV_FEATURES_HPP_
#define WTV_FEATURES_HPP_

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "wtv/core.hpp"
#include "wtv/mel.hpp"

namespace wtv {

class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::string name() const = 0;
  // Identifies the exact mapping (name plus parameters); cache keys include it.
  virtual std::string fingerprint() const = 0;
  virtual FeatureSequence extract(const Waveform& w) const = 0;
};

class MockFeatureExtractor final : public FeatureExtractor {
 public:
  explicit MockFeatureExtractor(std::uint64_t seed = 0);

  std::string name() const override { return "mock"; }
  std::string fingerprint() const override;
  FeatureSequence extract(const Waveform& w) const override;

 private:
  std::uint64_t seed_;
  MelAnalyzer<float> analyzer_;
  Eigen::MatrixXf projection_;  // 768 x 80
};

// Frame count the extractor contract prescribes for `num_samples` at 16 kHz.
Eigen::Index expected_feature_frames(Eigen::Index num_samples);

FeatureSequence mock_extract_features(const Waveform& w, std::uint64_t seed = 0);

struct ExtractorOptions {
  std::uint64_t seed = 0;
  // Free-form settings for plugin extractors (checkpoint path and the like).
  std::map<std::string, std::string> settings;
};

class ExtractorRegistry {
 public:
  using Factory = std::function<std::unique_ptr<FeatureExtractor>(const ExtractorOptions&)>;

  // Registry preloaded with the "mock" extractor.
  static ExtractorRegistry with_builtins();

  void add(const std::string& name, Factory factory);
  bool contains(const std::string& name) const;
  std::vector<std::string> names() const;
  // Throws ConfigError when `name` was never registered.
  std::unique_ptr<FeatureExtractor> create(const std::string& name,
                                           const ExtractorOptions& options = {}) const;

 private:
  std::map<std::string, Factory> factories_;
};

// Runs `extractor` and checks the contract: 16 kHz input, at least one frame,
// T = floor(len / 320), 768 finite columns.
FeatureSequence extract_features(const FeatureExtractor* extractor, const Waveform& w);

}  // namespace wtv

#endif  // WTV_FEATURES_HPP_
