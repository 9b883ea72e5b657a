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

// The operations behind the `wtv` command line tool. Each one takes explicit
// inputs and returns its result, so tests can drive them without a process
// boundary; the tool only parses flags, calls these and maps exceptions to
// exit codes.

#ifndef WTV_COMMANDS_HPP_
#define WTV_COMMANDS_HPP_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "wtv/config.hpp"
#include "wtv/data.hpp"
#include "wtv/features.hpp"
#include "wtv/text2vec.hpp"
#include "wtv/training.hpp"
#include "wtv/vec2wav.hpp"

namespace wtv {

// 0 success, 2 invalid input or configuration, 3 missing file,
// 4 training divergence, 1 anything else.
int exit_code_for(const std::exception& e);

std::unique_ptr<FeatureExtractor> make_extractor(const TrainingConfig& config);

// ---------------------------------------------------------------------------
// Training

struct TrainOptions {
  std::filesystem::path manifest;
  std::filesystem::path cache_dir;
  std::filesystem::path output_dir;
  // Steps to run; empty runs up to the configured total.
  std::optional<std::int64_t> steps;
  // Continue from this checkpoint (resume) or start from it (finetune).
  std::optional<std::filesystem::path> checkpoint;
  bool finetune = false;
};

struct TrainSummary {
  std::int64_t first_step = 0;
  std::int64_t last_step = 0;  // state.step after the run
  std::filesystem::path final_checkpoint;
  std::vector<std::filesystem::path> checkpoints;  // every file written
  CacheReport cache;
};

// Both stages write "<stage>_step<N>.ckpt" every checkpoint_every steps,
// "<stage>_final.ckpt" at the end, "<stage>_metrics.jsonl" and, on
// divergence, "<stage>_diverged.ckpt".
TrainSummary train_text2vec_command(const TrainingConfig& config, const TrainOptions& options,
                                    std::ostream* progress = nullptr);
TrainSummary train_vec2wav_command(const TrainingConfig& config, const TrainOptions& options,
                                   std::ostream* progress = nullptr);

CacheReport cache_command(const TrainingConfig& config, const std::filesystem::path& manifest,
                          const std::filesystem::path& cache_dir);

// ---------------------------------------------------------------------------
// Inference

// A speaker reference in both sample-rate domains.
struct SpeakerReference {
  Waveform audio_32k;
  Waveform audio_16k;
};

SpeakerReference load_reference(const std::filesystem::path& audio_32k, const std::filesystem::path& audio_16k);
// First manifest entry of `speaker_id`.
SpeakerReference reference_for_speaker(const Manifest& manifest, const std::string& speaker_id);

struct SynthesisRequest {
  std::string text;
  double pace = 1.0;
  std::uint64_t seed = 0;
};

struct SynthesisResult {
  Waveform audio;
  align::DurationVector durations;
  FeatureSequence features;
};

// text -> tokens -> text2vec (speaker from the reference's features) ->
// vec2wav (speaker from the reference's mel) -> 32 kHz audio of 640 T samples.
SynthesisResult synthesize(const Text2Vec<float>& t2v, const Vec2Wav<float>& v2w, const FeatureExtractor& extractor,
                           const SpeakerReference& reference, const SynthesisRequest& request);

// Features of the 16 kHz source rendered with the target's vec2wav speaker
// embedding; the text stage is bypassed.
Waveform convert_voice(const Vec2Wav<float>& v2w, const FeatureExtractor& extractor, const Waveform& source_16k,
                       const Waveform& target_32k, std::uint64_t seed = 0);

struct EmbedOptions {
  SpeakerStage stage = SpeakerStage::kVec2Wav;  // kExternal is rejected
  // Crop length in seconds (1, 3, 10 or 30); empty uses the whole file.
  std::optional<double> window_seconds;
  std::uint64_t seed = 0;
  double min_seconds = 1.0;
};

struct EmbedResult {
  SpeakerEmbedding embedding;
  Eigen::Index offset = 0;  // crop start in samples
  Eigen::Index length = 0;  // crop length in samples
};

// Crops `audio` (32 kHz for vec2wav, 16 kHz for text2vec) at a seeded
// uniform offset and embeds the crop.
EmbedResult speaker_embed_command(const Text2Vec<float>* t2v, const Vec2Wav<float>* v2w,
                                  const FeatureExtractor* extractor, const Waveform& audio,
                                  const EmbedOptions& options);
std::string embedding_json(const EmbedResult& result, const EmbedOptions& options);

struct SimilarityPair {
  std::string id;
  double score = 0;
};

struct SimilarityReport {
  std::vector<SimilarityPair> pairs;
  std::vector<std::string> unpaired;
  double mean = 0;
  double ci95 = 0;  // half-width of the normal-approximation interval
  double min = 0;
  double max = 0;
};

SimilarityReport summarize_similarity(std::vector<SimilarityPair> pairs, std::vector<std::string> unpaired);
// Pairs "<id>.wav" files across the two directories and scores each pair by
// the cosine of their vec2wav speaker embeddings.
SimilarityReport eval_similarity_command(const Vec2Wav<float>& v2w, const std::filesystem::path& generated_dir,
                                         const std::filesystem::path& reference_dir);
std::string similarity_jsonl(const SimilarityReport& report);

}  // namespace wtv

#endif  // WTV_COMMANDS_HPP_
