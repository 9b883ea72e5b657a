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

// Training loops for both stages.
//
// All randomness inside a step is drawn from generators seeded by
// (run seed, step, purpose), so a run resumed from a checkpoint replays the
// same batches, windows and noise as an uninterrupted one. Parameters,
// optimizer moments and running statistics are kept in float32, which the
// checkpoint stores losslessly.

#ifndef WTV_TRAINING_HPP_
#define WTV_TRAINING_HPP_

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "wtv/checkpoint.hpp"
#include "wtv/config.hpp"
#include "wtv/optim.hpp"
#include "wtv/text2vec.hpp"
#include "wtv/vec2wav.hpp"

namespace wtv {

std::uint64_t derive_seed(std::uint64_t seed, std::int64_t step, std::string_view purpose);
nn::Rng step_rng(std::uint64_t seed, std::int64_t step, std::string_view purpose);

struct WindowSample {
  std::int64_t frame_offset = 0;
  int frames = 32;
  std::int64_t samples = 20480;
  // Frames backed by real data; less than `frames` only on the padding path.
  std::int64_t valid_frames = 32;
  bool padded = false;

  std::int64_t sample_offset() const { return frames_to_samples(frame_offset, kOutputRate); }
  std::int64_t valid_samples() const { return frames_to_samples(valid_frames, kOutputRate); }
};

// Uniform offset in [0, utterance_frames - frames]. Shorter utterances take
// offset 0 and are zero-padded up to the window by the caller.
WindowSample sample_window(std::int64_t utterance_frames, nn::Rng& rng, int frames = 32);

// Linear ramp of the binarization weight between the configured steps.
double bin_weight(std::int64_t step, const TrainingConfig& config);

struct TrainState {
  std::int64_t step = 0;
  std::int64_t epoch = 0;
  std::int64_t total_steps = 0;  // horizon of the mel-weight schedule
  std::uint64_t rng_seed = 0;
  double base_lr = 0;
  double lr = 0;
  double lambda_bin = 0;
  double lambda_mel = 0;
};

void write_state(KeyValues& header, const TrainState& state);
TrainState read_state(const Checkpoint& ck);

struct MetricRecord {
  std::string stage;
  std::int64_t step = 0;
  std::vector<std::pair<std::string, double>> values;
};

std::string to_jsonl(const MetricRecord& record);

// Append-only line-delimited metrics. An empty path keeps records in memory
// only.
class MetricsLog {
 public:
  explicit MetricsLog(const std::filesystem::path& path = {});
  void append(const MetricRecord& record);
  const std::vector<std::string>& lines() const { return lines_; }

 private:
  std::filesystem::path path_;
  std::unique_ptr<std::ofstream> out_;
  std::vector<std::string> lines_;
};

struct Text2VecStepRecord {
  std::int64_t step = 0;
  double total = 0;
  double feature = 0;
  double duration = 0;
  double align = 0;
  double bin = 0;
  double lr = 0;
  double lambda_bin = 0;
  double grad_norm = 0;
  std::size_t used = 0;
  std::size_t skipped = 0;
  std::vector<align::DurationVector> durations;  // per used example
  std::vector<Eigen::Index> frames;              // T per used example

  MetricRecord metrics() const;
};

using StepCallback = std::function<void(const TrainState&)>;

class Text2VecTrainer {
 public:
  explicit Text2VecTrainer(const TrainingConfig& config);
  // Continues a run exactly where the checkpoint left it.
  static Text2VecTrainer resume(const Checkpoint& ck);
  // Starts a new schedule from checkpointed weights with the learning rate
  // divided by ten. `expected` (optional) must match the stored model shape.
  static Text2VecTrainer finetune(const Checkpoint& ck, const TrainingConfig* expected = nullptr);

  const TrainingConfig& config() const { return config_; }
  const TrainState& state() const { return state_; }
  Text2Vec<float>& model() { return model_; }
  const Text2Vec<float>& model() const { return model_; }

  // Stores per-dimension feature mean and standard deviation.
  void set_feature_statistics(std::span<const Text2VecExample> dataset);
  Text2VecStepRecord step(std::span<const Text2VecExample> dataset);
  std::vector<Text2VecStepRecord> train(std::span<const Text2VecExample> dataset, std::int64_t steps,
                                        MetricsLog* log = nullptr, const StepCallback& after_step = {});
  Checkpoint checkpoint() const;
  // Written before a DivergenceError is raised, if set.
  void set_snapshot_path(std::filesystem::path p) { snapshot_path_ = std::move(p); }

 private:
  Text2VecTrainer(const TrainingConfig& config, const OptimizerSpec& spec);

  TrainingConfig config_;
  Text2Vec<float> model_;
  Optimizer<float> optimizer_;
  TrainState state_;
  std::filesystem::path snapshot_path_;
};

// Paired training example; audio is exactly 640 samples per feature frame.
struct Vec2WavExample {
  std::string id;
  FeatureSequence features;
  Waveform audio;
  Eigen::MatrixXf reference_mel;  // decoder log-mel of the whole utterance
};

// Checks |640 T - L| <= 640, crops or zero-pads the audio to 640 T and
// computes the reference mel.
Vec2WavExample make_vec2wav_example(std::string id, FeatureSequence features, Waveform audio);

struct Vec2WavStepRecord {
  std::int64_t step = 0;
  double d_loss = 0;
  double g_loss = 0;
  double adv = 0;
  double fm = 0;
  double mel = 0;
  double lambda_mel = 0;
  double lr = 0;
  int padded = 0;  // windows that took the padding path

  MetricRecord metrics() const;
};

class Vec2WavTrainer {
 public:
  explicit Vec2WavTrainer(const TrainingConfig& config);
  static Vec2WavTrainer resume(const Checkpoint& ck);
  static Vec2WavTrainer finetune(const Checkpoint& ck, const TrainingConfig* expected = nullptr);

  const TrainingConfig& config() const { return config_; }
  const TrainState& state() const { return state_; }
  Vec2Wav<float>& model() { return model_; }
  const Vec2Wav<float>& model() const { return model_; }

  // Sets the mel-weight horizon; train() sets it to the requested step
  // count when it is still zero.
  void set_total_steps(std::int64_t total) { state_.total_steps = total; }
  Vec2WavStepRecord step(std::span<const Vec2WavExample> dataset);
  std::vector<Vec2WavStepRecord> train(std::span<const Vec2WavExample> dataset, std::int64_t steps,
                                       MetricsLog* log = nullptr, const StepCallback& after_step = {});
  Checkpoint checkpoint() const;
  void set_snapshot_path(std::filesystem::path p) { snapshot_path_ = std::move(p); }

 private:
  Vec2WavTrainer(const TrainingConfig& config, const OptimizerSpec& spec);

  TrainingConfig config_;
  Vec2Wav<float> model_;
  Optimizer<float> gen_optimizer_;
  Optimizer<float> disc_optimizer_;
  MelAnalyzer<float> mel_;
  TrainState state_;
  std::filesystem::path snapshot_path_;
};

// Reads the "stage" header entry ("text2vec" or "vec2wav").
std::string checkpoint_stage(const Checkpoint& ck);
TrainingConfig checkpoint_config(const Checkpoint& ck);
// Inference-only loaders.
Text2Vec<float> load_text2vec(const Checkpoint& ck);
Vec2Wav<float> load_vec2wav(const Checkpoint& ck);

}  // namespace wtv

#endif  // WTV_TRAINING_HPP_
