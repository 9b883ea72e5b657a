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

#include "wtv/commands.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <random>

#include "json.hpp"
#include "wtv/audio.hpp"
#include "wtv/checkpoint.hpp"
#include "wtv/io.hpp"

namespace wtv {

namespace fs = std::filesystem;

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const MissingArtifactError*>(&e)) return 3;
  if (dynamic_cast<const DivergenceError*>(&e)) return 4;
  if (dynamic_cast<const ValidationError*>(&e) || dynamic_cast<const ConfigError*>(&e) ||
      dynamic_cast<const PreconditionError*>(&e) || dynamic_cast<const FormatError*>(&e) ||
      dynamic_cast<const VocabularyError*>(&e) || dynamic_cast<const ShapeError*>(&e) ||
      dynamic_cast<const InfeasibleError*>(&e))
    return 2;
  return 1;
}

std::unique_ptr<FeatureExtractor> make_extractor(const TrainingConfig& config) {
  ExtractorOptions options;
  options.seed = config.extractor_seed;
  return ExtractorRegistry::with_builtins().create(config.extractor, options);
}

namespace {

CacheOptions cache_options(const TrainingConfig& config) {
  CacheOptions o;
  o.normalize_db = config.normalize_target_db;
  return o;
}

CacheReport prepare_cache(const TrainingConfig& config, const Manifest& manifest, const fs::path& cache_dir,
                          std::ostream* progress) {
  const auto extractor = make_extractor(config);
  CacheReport r = cache_features(manifest.entries, *extractor, cache_dir, cache_options(config));
  if (progress)
    *progress << "cache: " << r.processed << " written, " << r.skipped << " up to date, " << r.failed << " failed\n";
  if (r.failed) {
    std::string msg = std::to_string(r.failed) + " utterances failed feature extraction; first: " +
                      r.failures[0].utterance_id + ": " + r.failures[0].message;
    throw ValidationError(msg);
  }
  return r;
}

Manifest checked_manifest(const fs::path& path, std::ostream* progress) {
  Manifest m = load_manifest(path);
  if (progress)
    for (const auto& issue : m.issues) *progress << path.string() << ":" << issue.line << ": " << issue.message << "\n";
  return m;
}

template <typename Trainer, typename Dataset>
TrainSummary run_training(Trainer& trainer, const Dataset& data, const std::string& stage, std::int64_t steps,
                          const TrainOptions& options, std::ostream* progress) {
  fs::create_directories(options.output_dir);
  TrainSummary summary;
  summary.first_step = trainer.state().step;
  trainer.set_snapshot_path(options.output_dir / (stage + "_diverged.ckpt"));
  MetricsLog log(options.output_dir / (stage + "_metrics.jsonl"));
  const std::int64_t every = trainer.config().checkpoint_every;
  trainer.train(data, steps, &log, [&](const TrainState& s) {
    if (every > 0 && s.step % every == 0) {
      const fs::path p = options.output_dir / (stage + "_step" + std::to_string(s.step) + ".ckpt");
      save_checkpoint(p, trainer.checkpoint());
      summary.checkpoints.push_back(p);
    }
    if (progress && (s.step % 10 == 0)) *progress << stage << " step " << s.step << ": " << log.lines().back() << "\n";
  });
  summary.last_step = trainer.state().step;
  summary.final_checkpoint = options.output_dir / (stage + "_final.ckpt");
  save_checkpoint(summary.final_checkpoint, trainer.checkpoint());
  summary.checkpoints.push_back(summary.final_checkpoint);
  return summary;
}

std::int64_t steps_to_run(const std::optional<std::int64_t>& requested, std::int64_t configured,
                          std::int64_t done) {
  if (requested) {
    if (*requested < 0) throw ValidationError("--steps must be non-negative");
    return *requested;
  }
  return std::max<std::int64_t>(configured - done, 0);
}

}  // namespace

CacheReport cache_command(const TrainingConfig& config, const fs::path& manifest, const fs::path& cache_dir) {
  return prepare_cache(config, checked_manifest(manifest, nullptr), cache_dir, nullptr);
}

TrainSummary train_text2vec_command(const TrainingConfig& config, const TrainOptions& options,
                                    std::ostream* progress) {
  const Manifest manifest = checked_manifest(options.manifest, progress);
  const CacheReport cache = prepare_cache(config, manifest, options.cache_dir, progress);
  const auto data = load_text2vec_dataset(manifest.entries, options.cache_dir);

  std::optional<Text2VecTrainer> trainer;
  if (options.checkpoint) {
    const Checkpoint ck = load_checkpoint(*options.checkpoint);
    trainer.emplace(options.finetune ? Text2VecTrainer::finetune(ck, &config) : Text2VecTrainer::resume(ck));
  } else {
    trainer.emplace(config);
    trainer->set_feature_statistics(data);
  }
  const std::int64_t steps = steps_to_run(options.steps, config.text2vec_steps, trainer->state().step);
  TrainSummary s = run_training(*trainer, data, "text2vec", steps, options, progress);
  s.cache = cache;
  return s;
}

TrainSummary train_vec2wav_command(const TrainingConfig& config, const TrainOptions& options,
                                   std::ostream* progress) {
  const Manifest manifest = checked_manifest(options.manifest, progress);
  const CacheReport cache = prepare_cache(config, manifest, options.cache_dir, progress);
  const auto data = load_vec2wav_dataset(manifest.entries, options.cache_dir, cache_options(config));

  std::optional<Vec2WavTrainer> trainer;
  if (options.checkpoint) {
    const Checkpoint ck = load_checkpoint(*options.checkpoint);
    trainer.emplace(options.finetune ? Vec2WavTrainer::finetune(ck, &config) : Vec2WavTrainer::resume(ck));
  } else {
    trainer.emplace(config);
  }
  const std::int64_t steps = steps_to_run(options.steps, config.vec2wav_steps, trainer->state().step);
  if (trainer->state().total_steps == 0) trainer->set_total_steps(trainer->state().step + steps);
  TrainSummary s = run_training(*trainer, data, "vec2wav", steps, options, progress);
  s.cache = cache;
  return s;
}

// ---------------------------------------------------------------------------

SpeakerReference load_reference(const fs::path& audio_32k, const fs::path& audio_16k) {
  SpeakerReference r{read_wav(audio_32k), read_wav(audio_16k)};
  require_sample_rate(r.audio_32k, kOutputRate);
  require_sample_rate(r.audio_16k, kExtractorRate);
  return r;
}

SpeakerReference reference_for_speaker(const Manifest& manifest, const std::string& speaker_id) {
  for (const auto& e : manifest.entries)
    if (e.speaker_id == speaker_id) {
      if (!e.audio_16k_path) throw ValidationError("entry " + e.utterance_id + " has no audio_16k_path");
      return load_reference(e.audio_path, *e.audio_16k_path);
    }
  throw ValidationError("speaker '" + speaker_id + "' does not occur in the manifest");
}

namespace {

NoiseVector seeded_noise(const Vec2Wav<float>& v2w, std::uint64_t seed, std::string_view purpose) {
  nn::Rng rng = step_rng(seed, 0, purpose);
  return sample_noise(v2w.config().noise_dim, rng);
}

void check_length(const Waveform& w, const FeatureSequence& f) {
  if (w.size() != frames_to_samples(f.num_frames(), kOutputRate))
    throw InvariantError("output length " + std::to_string(w.size()) + " differs from 640 x " +
                         std::to_string(f.num_frames()));
}

}  // namespace

SynthesisResult synthesize(const Text2Vec<float>& t2v, const Vec2Wav<float>& v2w, const FeatureExtractor& extractor,
                           const SpeakerReference& reference, const SynthesisRequest& request) {
  if (request.text.empty()) throw ValidationError("text is empty");
  if (!(request.pace > 0) || !std::isfinite(request.pace)) throw ValidationError("pace must be positive");
  const TokenSequence tokens = tokenize(request.text);
  const SpeakerEmbedding t2v_spk = t2v.speaker_embed(extract_features(&extractor, reference.audio_16k));
  SynthesisResult r;
  r.features = t2v.infer(tokens, t2v_spk, request.pace, &r.durations);
  r.audio = v2w.generate(r.features, v2w.speaker_embed(reference.audio_32k),
                         seeded_noise(v2w, request.seed, "synthesize.noise"));
  check_length(r.audio, r.features);
  return r;
}

Waveform convert_voice(const Vec2Wav<float>& v2w, const FeatureExtractor& extractor, const Waveform& source_16k,
                       const Waveform& target_32k, std::uint64_t seed) {
  require_sample_rate(source_16k, kExtractorRate);
  require_sample_rate(target_32k, kOutputRate);
  const FeatureSequence features = extract_features(&extractor, source_16k);
  Waveform out = v2w.generate(features, v2w.speaker_embed(target_32k), seeded_noise(v2w, seed, "convert.noise"));
  check_length(out, features);
  return out;
}

EmbedResult speaker_embed_command(const Text2Vec<float>* t2v, const Vec2Wav<float>* v2w,
                                  const FeatureExtractor* extractor, const Waveform& audio,
                                  const EmbedOptions& options) {
  if (options.stage == SpeakerStage::kExternal) throw ValidationError("stage must be text2vec or vec2wav");
  const bool text = options.stage == SpeakerStage::kText2Vec;
  require_sample_rate(audio, text ? kExtractorRate : kOutputRate);
  if ((text && (!t2v || !extractor)) || (!text && !v2w))
    throw PreconditionError("model for the " + to_string(options.stage) + " stage not supplied");
  if (audio.duration_seconds() < options.min_seconds)
    throw PreconditionError("reference is " + std::to_string(audio.duration_seconds()) + " s, at least " +
                            std::to_string(options.min_seconds) + " s is required");

  EmbedResult r;
  r.length = audio.size();
  if (options.window_seconds) {
    const double w = *options.window_seconds;
    if (w != 1 && w != 3 && w != 10 && w != 30) throw ValidationError("window must be 1, 3, 10 or 30 seconds");
    r.length = static_cast<Eigen::Index>(std::llround(w * audio.sample_rate));
    if (r.length > audio.size())
      throw PreconditionError("reference is " + std::to_string(audio.duration_seconds()) + " s, shorter than the " +
                              std::to_string(static_cast<int>(w)) + " s window");
    nn::Rng rng = step_rng(options.seed, 0, "speaker_embed.crop");
    r.offset = std::uniform_int_distribution<Eigen::Index>(0, audio.size() - r.length)(rng);
  }
  Waveform crop;
  crop.sample_rate = audio.sample_rate;
  crop.samples = audio.samples.segment(r.offset, r.length);
  r.embedding = text ? t2v->speaker_embed(extract_features(extractor, crop)) : v2w->speaker_embed(crop);
  return r;
}

std::string embedding_json(const EmbedResult& result, const EmbedOptions& options) {
  nlohmann::ordered_json j;
  j["stage"] = to_string(options.stage);
  j["dim"] = result.embedding.vector.size();
  j["window_s"] = options.window_seconds ? nlohmann::ordered_json(*options.window_seconds) : nullptr;
  j["offset_samples"] = result.offset;
  j["length_samples"] = result.length;
  j["seed"] = options.seed;
  j["vector"] = result.embedding.vector;
  return j.dump();
}

SimilarityReport summarize_similarity(std::vector<SimilarityPair> pairs, std::vector<std::string> unpaired) {
  SimilarityReport r;
  r.pairs = std::move(pairs);
  r.unpaired = std::move(unpaired);
  if (r.pairs.empty()) return r;
  double sum = 0, sq = 0;
  r.min = r.max = r.pairs[0].score;
  for (const auto& p : r.pairs) {
    if (!(p.score >= -1.0 - 1e-9 && p.score <= 1.0 + 1e-9)) throw InvariantError("similarity outside [-1, 1]");
    sum += p.score;
    r.min = std::min(r.min, p.score);
    r.max = std::max(r.max, p.score);
  }
  const double n = static_cast<double>(r.pairs.size());
  r.mean = sum / n;
  for (const auto& p : r.pairs) sq += (p.score - r.mean) * (p.score - r.mean);
  r.ci95 = r.pairs.size() > 1 ? 1.96 * std::sqrt(sq / (n - 1) / n) : 0.0;
  return r;
}

SimilarityReport eval_similarity_command(const Vec2Wav<float>& v2w, const fs::path& generated_dir,
                                         const fs::path& reference_dir) {
  auto list = [](const fs::path& dir) {
    if (!fs::is_directory(dir)) throw MissingArtifactError("no such directory: " + dir.string());
    std::map<std::string, fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_regular_file() && e.path().extension() == ".wav") files[e.path().stem().string()] = e.path();
    return files;
  };
  const auto gen = list(generated_dir), ref = list(reference_dir);
  std::vector<SimilarityPair> pairs;
  std::vector<std::string> unpaired;
  for (const auto& [id, path] : gen) {
    auto it = ref.find(id);
    if (it == ref.end()) {
      unpaired.push_back(path.string());
      continue;
    }
    const auto a = v2w.speaker_embed(read_wav(path));
    const auto b = v2w.speaker_embed(read_wav(it->second));
    pairs.push_back({id, std::clamp(cosine_similarity(a, b), -1.0, 1.0)});
  }
  for (const auto& [id, path] : ref)
    if (!gen.count(id)) unpaired.push_back(path.string());
  return summarize_similarity(std::move(pairs), std::move(unpaired));
}

std::string similarity_jsonl(const SimilarityReport& r) {
  std::string out;
  for (const auto& p : r.pairs) out += nlohmann::ordered_json{{"id", p.id}, {"cosine", p.score}}.dump() + "\n";
  for (const auto& u : r.unpaired) out += nlohmann::ordered_json{{"unpaired", u}}.dump() + "\n";
  nlohmann::ordered_json s;
  s["pairs"] = r.pairs.size();
  s["mean"] = r.mean;
  s["ci95"] = r.ci95;
  s["min"] = r.min;
  s["max"] = r.max;
  s["scorer"] = "vec2wav speaker encoder";
  out += nlohmann::ordered_json{{"summary", s}}.dump() + "\n";
  return out;
}

}  // namespace wtv
