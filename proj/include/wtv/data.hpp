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

// Corpus manifests, the on-disk feature cache and dataset assembly.
//
// A manifest is one JSON object per line:
//   {"utterance_id": "p225_001", "audio_path": "wav32/p225_001.wav",
//    "audio_16k_path": "wav16/p225_001.wav", "transcript": "Please call Stella.",
//    "speaker_id": "p225", "duration_s": 2.1}
// Relative paths resolve against the manifest's directory. Entries without a
// transcript only feed the vocoder. audio_path is the 32 kHz target; the
// extractor reads audio_16k_path, or audio_path itself when that is already
// 16 kHz. Nothing is resampled implicitly.

#ifndef WTV_DATA_HPP_
#define WTV_DATA_HPP_

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "wtv/core.hpp"
#include "wtv/features.hpp"
#include "wtv/text2vec.hpp"
#include "wtv/training.hpp"

namespace wtv {

struct ManifestEntry {
  std::string utterance_id;
  std::string audio_path;
  std::optional<std::string> transcript;
  std::optional<std::string> speaker_id;
  double duration_s = 0;
  std::optional<std::string> audio_16k_path;

  bool text2vec_usable() const { return transcript.has_value() && !transcript->empty(); }
  const std::string& extractor_audio_path() const { return audio_16k_path ? *audio_16k_path : audio_path; }
  bool operator==(const ManifestEntry&) const = default;
};

struct ManifestIssue {
  int line = 0;
  std::string message;
};

struct Manifest {
  std::vector<ManifestEntry> entries;  // paths already resolved
  std::vector<ManifestIssue> issues;   // rejected lines

  std::size_t text2vec_count() const;
};

// Malformed lines, duplicate ids and unreadable audio go to `issues`. A
// manifest with no valid entry is a ValidationError; a missing file is a
// MissingArtifactError.
Manifest load_manifest(const std::filesystem::path& path);
// Paths are written as given.
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);
std::string manifest_line(const ManifestEntry& entry);

struct CacheOptions {
  // Peak normalization applied before extraction; empty disables it.
  std::optional<double> normalize_db = -3.0;
};

struct CacheFailure {
  std::string utterance_id;
  std::string message;
};

struct CacheReport {
  std::size_t processed = 0;  // files written
  std::size_t skipped = 0;    // valid and up to date
  std::size_t failed = 0;
  std::vector<CacheFailure> failures;

  std::size_t total() const { return processed + skipped + failed; }
};

std::filesystem::path feature_cache_path(const std::filesystem::path& cache_dir, const std::string& utterance_id);

// Writes "<id>.wtv1" (plus its digest sidecar) and "<id>.wtv1.key", the hash
// of the extractor fingerprint, options and input audio bytes. An entry is
// skipped when its key matches and the cached file decodes; anything else is
// recomputed. Per-entry failures are reported and the batch continues.
CacheReport cache_features(const std::vector<ManifestEntry>& entries, const FeatureExtractor& extractor,
                           const std::filesystem::path& cache_dir, const CacheOptions& options = {});

FeatureSequence load_cached_features(const std::filesystem::path& cache_dir, const std::string& utterance_id);

// Transcribed entries with their cached features.
std::vector<Text2VecExample> load_text2vec_dataset(const std::vector<ManifestEntry>& entries,
                                                   const std::filesystem::path& cache_dir);
// Every entry, paired with its 32 kHz audio (peak-normalized as configured).
std::vector<Vec2WavExample> load_vec2wav_dataset(const std::vector<ManifestEntry>& entries,
                                                 const std::filesystem::path& cache_dir,
                                                 const CacheOptions& options = {});

}  // namespace wtv

#endif  // WTV_DATA_HPP_
