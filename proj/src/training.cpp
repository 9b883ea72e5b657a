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

#include "wtv/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "json.hpp"
#include "wtv/audio.hpp"

namespace wtv {

using Eigen::Index;

std::uint64_t derive_seed(std::uint64_t seed, std::int64_t step, std::string_view purpose) {
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a
  for (unsigned char c : purpose) {
    h ^= c;
    h *= 1099511628211ull;
  }
  const auto s = static_cast<std::uint64_t>(step);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(s >> 32),
                    static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
}

nn::Rng step_rng(std::uint64_t seed, std::int64_t step, std::string_view purpose) {
  return nn::Rng(derive_seed(seed, step, purpose));
}

WindowSample sample_window(std::int64_t utterance_frames, nn::Rng& rng, int frames) {
  if (frames < 1) throw PreconditionError("window must hold at least one frame");
  if (utterance_frames < 1) throw PreconditionError("utterance has no frames");
  WindowSample w;
  w.frames = frames;
  w.samples = frames_to_samples(frames, kOutputRate);
  if (utterance_frames < frames) {
    w.frame_offset = 0;
    w.valid_frames = utterance_frames;
    w.padded = true;
    return w;
  }
  std::uniform_int_distribution<std::int64_t> pick(0, utterance_frames - frames);
  w.frame_offset = pick(rng);
  w.valid_frames = frames;
  return w;
}

double bin_weight(std::int64_t step, const TrainingConfig& config) {
  if (step < config.bin_ramp_start) return 0.0;
  if (config.bin_ramp_end <= config.bin_ramp_start || step >= config.bin_ramp_end) return config.lambda_bin_max;
  return config.lambda_bin_max * static_cast<double>(step - config.bin_ramp_start) /
         static_cast<double>(config.bin_ramp_end - config.bin_ramp_start);
}

void write_state(KeyValues& h, const TrainState& s) {
  h["state.step"] = std::to_string(s.step);
  h["state.epoch"] = std::to_string(s.epoch);
  h["state.total_steps"] = std::to_string(s.total_steps);
  h["state.rng_seed"] = std::to_string(s.rng_seed);
  h["state.base_lr"] = format_double(s.base_lr);
  h["state.lr"] = format_double(s.lr);
  h["state.lambda_bin"] = format_double(s.lambda_bin);
  h["state.lambda_mel"] = format_double(s.lambda_mel);
}

TrainState read_state(const Checkpoint& ck) {
  TrainState s;
  try {
    s.step = std::stoll(ck.get("state.step"));
    s.epoch = std::stoll(ck.get("state.epoch"));
    s.total_steps = std::stoll(ck.get("state.total_steps"));
    s.rng_seed = std::stoull(ck.get("state.rng_seed"));
    s.base_lr = std::stod(ck.get("state.base_lr"));
    s.lr = std::stod(ck.get("state.lr"));
    s.lambda_bin = std::stod(ck.get("state.lambda_bin"));
    s.lambda_mel = std::stod(ck.get("state.lambda_mel"));
  } catch (const std::logic_error& e) {
    throw FormatError(std::string("malformed training state: ") + e.what());
  }
  return s;
}

std::string to_jsonl(const MetricRecord& r) {
  nlohmann::ordered_json j;
  j["stage"] = r.stage;
  j["step"] = r.step;
  for (const auto& [k, v] : r.values) {
    if (std::isfinite(v))
      j[k] = v;
    else
      j[k] = nullptr;
  }
  return j.dump();
}

MetricsLog::MetricsLog(const std::filesystem::path& path) : path_(path) {
  if (path_.empty()) return;
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  out_ = std::make_unique<std::ofstream>(path_, std::ios::app);
  if (!*out_) throw MissingArtifactError("cannot open metrics log " + path_.string());
}

void MetricsLog::append(const MetricRecord& record) {
  lines_.push_back(to_jsonl(record));
  if (out_) {
    *out_ << lines_.back() << '\n';
    out_->flush();
  }
}

MetricRecord Text2VecStepRecord::metrics() const {
  return {"text2vec",
          step,
          {{"total", total},
           {"feature", feature},
           {"duration", duration},
           {"align", align},
           {"bin", bin},
           {"lr", lr},
           {"lambda_bin", lambda_bin},
           {"grad_norm", grad_norm},
           {"used", static_cast<double>(used)},
           {"skipped", static_cast<double>(skipped)}}};
}

MetricRecord Vec2WavStepRecord::metrics() const {
  return {"vec2wav",
          step,
          {{"d_loss", d_loss},
           {"g_loss", g_loss},
           {"adv", adv},
           {"fm", fm},
           {"mel", mel},
           {"lambda_mel", lambda_mel},
           {"lr", lr},
           {"padded", static_cast<double>(padded)}}};
}

namespace {

double lr_for_step(const TrainState& s, const OptimizerSpec& spec, std::int64_t epoch_steps) {
  return s.base_lr * std::pow(spec.per_epoch_decay, static_cast<double>(s.step / epoch_steps)) *
         spec.warmup_scale(s.step);
}

void require_stage(const Checkpoint& ck, const std::string& stage) {
  const std::string found = checkpoint_stage(ck);
  if (found != stage) throw ConfigError("expected a " + stage + " checkpoint, found " + found);
}

// Model-shape keys must agree between the checkpoint and an expected config.
void require_same_model(const TrainingConfig& stored, const TrainingConfig& expected, const std::string& section) {
  const KeyValues a = to_key_values(stored), b = to_key_values(expected);
  for (const auto& [k, v] : a)
    if (k.rfind(section + ".", 0) == 0 && b.at(k) != v)
      throw ConfigError("config mismatch with checkpoint at " + k + ": checkpoint has " + v + ", config has " + b.at(k));
}

[[noreturn]] void diverge(const std::string& what, std::int64_t step, const std::filesystem::path& snapshot,
                          const Checkpoint& ck) {
  std::string msg = "non-finite " + what + " at step " + std::to_string(step);
  if (!snapshot.empty()) {
    save_checkpoint(snapshot, ck);
    msg += "; snapshot written to " + snapshot.string();
  }
  throw DivergenceError(msg);
}

KeyValues base_header(const TrainingConfig& config, const std::string& stage, const TrainState& state) {
  KeyValues h = to_key_values(config);
  h["stage"] = stage;
  h["checkpoint.upsample_padding"] = "crop (kernel - rate) / 2, output rate * T";
  write_state(h, state);
  return h;
}

}  // namespace

std::string checkpoint_stage(const Checkpoint& ck) { return ck.get("stage"); }

TrainingConfig checkpoint_config(const Checkpoint& ck) {
  KeyValues kv;
  const KeyValues known = to_key_values(TrainingConfig{});
  for (const auto& [k, v] : ck.header)
    if (known.count(k)) kv[k] = v;
  return from_key_values(kv);
}

// ---------------------------------------------------------------------------
// text2vec

Text2VecTrainer::Text2VecTrainer(const TrainingConfig& config) : Text2VecTrainer(config, config.text2vec_optim) {}

Text2VecTrainer::Text2VecTrainer(const TrainingConfig& config, const OptimizerSpec& spec)
    : config_(config),
      model_((config.validate(), config.text2vec), derive_seed(config.seed, 0, "text2vec.init")),
      optimizer_(spec) {
  state_.rng_seed = config.seed;
  state_.base_lr = spec.lr;
  state_.lr = spec.lr;
}

Text2VecTrainer Text2VecTrainer::resume(const Checkpoint& ck) {
  require_stage(ck, "text2vec");
  const TrainingConfig config = checkpoint_config(ck);
  const TrainState state = read_state(ck);
  OptimizerSpec spec = config.text2vec_optim;
  spec.lr = state.base_lr;
  Text2VecTrainer t(config, spec);
  load_parameters(ck, "model", t.model_.params());
  load_optimizer(ck, "opt", t.optimizer_);
  t.state_ = state;
  return t;
}

Text2VecTrainer Text2VecTrainer::finetune(const Checkpoint& ck, const TrainingConfig* expected) {
  require_stage(ck, "text2vec");
  const TrainingConfig stored = checkpoint_config(ck);
  if (expected) require_same_model(stored, *expected, "text2vec");
  const TrainingConfig& config = expected ? *expected : stored;
  Text2VecTrainer t(config, finetune_spec(config.text2vec_optim));
  load_parameters(ck, "model", t.model_.params());
  return t;
}

void Text2VecTrainer::set_feature_statistics(std::span<const Text2VecExample> dataset) {
  const Index D = config_.text2vec.feature_dim;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(D), sq = Eigen::VectorXd::Zero(D);
  double n = 0;
  for (const auto& ex : dataset) {
    if (ex.target.dim() != D) throw ShapeError("feature dimension mismatch");
    const Eigen::MatrixXd v = ex.target.values.cast<double>();
    sum += v.colwise().sum().transpose();
    sq += v.array().square().matrix().colwise().sum().transpose();
    n += static_cast<double>(v.rows());
  }
  if (n == 0) throw PreconditionError("no frames to compute feature statistics");
  const Eigen::VectorXd mean = sum / n;
  const Eigen::VectorXd var = (sq / n - mean.cwiseProduct(mean)).cwiseMax(0.0);
  model_.params().buffer("stats.feature_mean") = mean.cast<float>();
  model_.params().buffer("stats.feature_std") = var.cwiseSqrt().cast<float>();
}

Text2VecStepRecord Text2VecTrainer::step(std::span<const Text2VecExample> dataset) {
  if (dataset.empty()) throw PreconditionError("text2vec training needs at least one example");
  const std::int64_t s = state_.step;
  Text2VecStepRecord rec;
  rec.step = s;

  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t B = static_cast<std::size_t>(config_.text2vec_batch);
  if (order.size() > B) {
    nn::Rng rng = step_rng(state_.rng_seed, s, "text2vec.batch");
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(B);
  }
  std::vector<Text2VecExample> batch;
  for (std::size_t i : order) batch.push_back(dataset[i]);

  rec.lambda_bin = bin_weight(s, config_);
  rec.lr = lr_for_step(state_, optimizer_.spec(), config_.epoch_steps);
  const Text2VecLossWeights weights{config_.lambda_duration, config_.lambda_align, rec.lambda_bin};

  ad::Tape<float> tape;
  nn::Scope<float> scope(tape, model_.params());
  const auto result = model_.forward_train(scope, batch, weights);
  rec.used = result.used.size();
  rec.skipped = result.skipped.size();

  if (!result.used.empty()) {
    for (const auto& item : result.items) {
      rec.feature += item.feature_loss;
      rec.duration += item.duration_loss;
      rec.align += item.align_loss;
      rec.bin += item.bin_loss;
      rec.durations.push_back(item.alignment.durations);
      rec.frames.push_back(item.predicted_features.num_frames());
    }
    const double u = static_cast<double>(rec.used);
    rec.feature /= u;
    rec.duration /= u;
    rec.align /= u;
    rec.bin /= u;
    rec.total = result.total.value()(0, 0);
    if (!std::isfinite(rec.total)) diverge("text2vec loss", s, snapshot_path_, checkpoint());

    model_.params().zero_grad();
    tape.backward(result.total);
    rec.grad_norm = global_grad_norm(model_.params());
    if (!std::isfinite(rec.grad_norm)) diverge("text2vec gradient", s, snapshot_path_, checkpoint());
    optimizer_.step(model_.params(), rec.lr);
    if (!model_.params().all_finite()) diverge("text2vec parameters", s, snapshot_path_, checkpoint());
  }

  state_.step = s + 1;
  state_.epoch = state_.step / config_.epoch_steps;
  state_.lr = rec.lr;
  state_.lambda_bin = rec.lambda_bin;
  return rec;
}

std::vector<Text2VecStepRecord> Text2VecTrainer::train(std::span<const Text2VecExample> dataset, std::int64_t steps,
                                                       MetricsLog* log, const StepCallback& after_step) {
  if (steps < 0) throw PreconditionError("steps must be non-negative");
  std::vector<Text2VecStepRecord> records;
  if (steps > 0 && dataset.empty()) throw PreconditionError("text2vec training needs at least one example");
  for (std::int64_t i = 0; i < steps; ++i) {
    records.push_back(step(dataset));
    if (log) log->append(records.back().metrics());
    if (after_step) after_step(state_);
  }
  return records;
}

Checkpoint Text2VecTrainer::checkpoint() const {
  Checkpoint ck;
  ck.header = base_header(config_, "text2vec", state_);
  store_parameters(ck, "model", model_.params());
  store_optimizer(ck, "opt", optimizer_);
  return ck;
}

Text2Vec<float> load_text2vec(const Checkpoint& ck) {
  require_stage(ck, "text2vec");
  const TrainingConfig config = checkpoint_config(ck);
  Text2Vec<float> model(config.text2vec, 0);
  load_parameters(ck, "model", model.params());
  return model;
}

// ---------------------------------------------------------------------------
// vec2wav

Vec2WavExample make_vec2wav_example(std::string id, FeatureSequence features, Waveform audio) {
  validate(features);
  validate(audio);
  require_sample_rate(audio, kOutputRate);
  if (features.num_frames() < 1) throw ValidationError(id + ": no feature frames");
  const std::int64_t target = frames_to_samples(features.num_frames(), kOutputRate);
  const std::int64_t per_frame = frames_to_samples(1, kOutputRate);
  if (std::abs(target - static_cast<std::int64_t>(audio.size())) > per_frame)
    throw ValidationError(id + ": " + std::to_string(features.num_frames()) + " feature frames need about " +
                          std::to_string(target) + " samples, audio has " + std::to_string(audio.size()));
  const Index old = audio.size();
  audio.samples.conservativeResize(target);
  if (target > old) audio.samples.tail(target - old).setZero();
  Vec2WavExample ex;
  ex.id = std::move(id);
  ex.features = std::move(features);
  ex.reference_mel = compute_mel(audio);
  ex.audio = std::move(audio);
  return ex;
}

Vec2WavTrainer::Vec2WavTrainer(const TrainingConfig& config) : Vec2WavTrainer(config, config.vec2wav_optim) {}

Vec2WavTrainer::Vec2WavTrainer(const TrainingConfig& config, const OptimizerSpec& spec)
    : config_(config),
      model_((config.validate(), config.vec2wav), derive_seed(config.seed, 0, "vec2wav.init")),
      gen_optimizer_(spec),
      disc_optimizer_(spec),
      mel_(decoder_mel_config()) {
  state_.rng_seed = config.seed;
  state_.base_lr = spec.lr;
  state_.lr = spec.lr;
  state_.lambda_mel = config.vec2wav.lambda_mel;
}

Vec2WavTrainer Vec2WavTrainer::resume(const Checkpoint& ck) {
  require_stage(ck, "vec2wav");
  const TrainingConfig config = checkpoint_config(ck);
  const TrainState state = read_state(ck);
  OptimizerSpec spec = config.vec2wav_optim;
  spec.lr = state.base_lr;
  Vec2WavTrainer t(config, spec);
  load_parameters(ck, "gen", t.model_.generator_params());
  load_parameters(ck, "disc", t.model_.discriminator_params());
  load_optimizer(ck, "opt_g", t.gen_optimizer_);
  load_optimizer(ck, "opt_d", t.disc_optimizer_);
  t.state_ = state;
  return t;
}

Vec2WavTrainer Vec2WavTrainer::finetune(const Checkpoint& ck, const TrainingConfig* expected) {
  require_stage(ck, "vec2wav");
  const TrainingConfig stored = checkpoint_config(ck);
  if (expected) require_same_model(stored, *expected, "vec2wav");
  const TrainingConfig& config = expected ? *expected : stored;
  Vec2WavTrainer t(config, finetune_spec(config.vec2wav_optim));
  load_parameters(ck, "gen", t.model_.generator_params());
  load_parameters(ck, "disc", t.model_.discriminator_params());
  return t;
}

Vec2WavStepRecord Vec2WavTrainer::step(std::span<const Vec2WavExample> dataset) {
  if (dataset.empty()) throw PreconditionError("vec2wav training needs at least one example");
  const std::int64_t s = state_.step;
  const Index B = config_.vec2wav_batch;
  const int W = config_.window_frames;
  const Index Lw = frames_to_samples(W, kOutputRate);
  const Index F = config_.vec2wav.feature_dim;
  Vec2WavStepRecord rec;
  rec.step = s;
  rec.lr = lr_for_step(state_, gen_optimizer_.spec(), config_.epoch_steps);
  const std::int64_t horizon = state_.total_steps > 0 ? state_.total_steps : config_.vec2wav_steps;
  rec.lambda_mel = mel_weight_schedule(s, std::max<std::int64_t>(horizon - 1, 1), config_.vec2wav.lambda_mel);

  nn::Rng batch_rng = step_rng(state_.rng_seed, s, "vec2wav.batch");
  nn::Rng window_rng = step_rng(state_.rng_seed, s, "vec2wav.window");
  nn::Rng noise_rng = step_rng(state_.rng_seed, s, "vec2wav.noise");
  std::uniform_int_distribution<std::size_t> pick(0, dataset.size() - 1);

  Eigen::MatrixXf feats = Eigen::MatrixXf::Zero(F, B * W);
  Eigen::MatrixXf real = Eigen::MatrixXf::Zero(1, B * Lw);
  Eigen::MatrixXf noise(config_.vec2wav.noise_dim, B);
  std::vector<Index> valid_samples, ref_frames;
  std::vector<const Vec2WavExample*> chosen;
  for (Index b = 0; b < B; ++b) {
    const Vec2WavExample& ex = dataset[pick(batch_rng)];
    chosen.push_back(&ex);
    const WindowSample w = sample_window(ex.features.num_frames(), window_rng, W);
    rec.padded += w.padded;
    feats.middleCols(b * W, w.valid_frames) = ex.features.values.middleRows(w.frame_offset, w.valid_frames).transpose();
    real.middleCols(b * Lw, w.valid_samples()) = ex.audio.samples.segment(w.sample_offset(), w.valid_samples()).transpose();
    valid_samples.push_back(w.valid_samples());
    noise.col(b) = sample_noise(config_.vec2wav.noise_dim, noise_rng).values;
    ref_frames.push_back(ex.reference_mel.cols());
  }
  const Index max_ref = *std::max_element(ref_frames.begin(), ref_frames.end());
  Eigen::MatrixXf ref_mel = Eigen::MatrixXf::Zero(chosen[0]->reference_mel.rows(), B * max_ref);
  for (Index b = 0; b < B; ++b) ref_mel.middleCols(b * max_ref, ref_frames[b]) = chosen[b]->reference_mel;
  std::vector<Eigen::MatrixXf> window_mels;
  Index mel_cols = 0;
  for (Index b = 0; b < B; ++b) {
    window_mels.push_back(mel_.log_mel(real.row(0).segment(b * Lw, Lw).transpose()));
    mel_cols += window_mels.back().cols();
  }
  Eigen::MatrixXf real_mel(window_mels[0].rows(), mel_cols);
  for (Index b = 0, c = 0; b < B; c += window_mels[b].cols(), ++b) real_mel.middleCols(c, window_mels[b].cols()) = window_mels[b];

  auto& gen = model_.generator_params();
  auto& disc = model_.discriminator_params();
  ad::Tape<float> gt;
  nn::Scope<float> g(gt, gen);
  const auto spk = model_.speaker_encoder(g, gt.constant(ref_mel, B), ref_frames);
  auto fake = model_.generator(g, gt.constant(feats, B), spk, gt.constant(noise));
  if (rec.padded) fake = ad::mask_time(fake, valid_samples);

  {
    ad::Tape<float> dt;
    nn::Scope<float> d(dt, disc);
    const auto d_loss = discriminator_loss(model_.discriminate(d, dt.constant(real, B)),
                                           model_.discriminate(d, dt.constant(fake.value(), B)));
    rec.d_loss = d_loss.value()(0, 0);
    if (!std::isfinite(rec.d_loss)) diverge("discriminator loss", s, snapshot_path_, checkpoint());
    disc.zero_grad();
    dt.backward(d_loss);
    disc_optimizer_.step(disc, rec.lr);
  }

  nn::Scope<float> frozen(gt, disc, false);
  gt.set_grad_enabled(false);
  const auto real_scores = model_.discriminate(frozen, gt.constant(real, B));
  gt.set_grad_enabled(true);
  const auto fake_scores = model_.discriminate(frozen, fake);
  const auto adv = generator_adv_loss(fake_scores);
  const auto fm = feature_matching_loss(real_scores, fake_scores, static_cast<float>(config_.vec2wav.lambda_fm));
  const auto mel = mel_reconstruction_loss(mel_, fake, real_mel);
  const std::vector<ad::Var<float>> terms{adv, fm, mel};
  const std::vector<float> weights{1.0f, 1.0f, static_cast<float>(rec.lambda_mel)};
  const auto g_loss = ad::weighted_sum<float>(terms, weights);
  rec.adv = adv.value()(0, 0);
  rec.fm = fm.value()(0, 0);
  rec.mel = mel.value()(0, 0);
  rec.g_loss = g_loss.value()(0, 0);
  if (!std::isfinite(rec.g_loss) || !std::isfinite(rec.mel))
    diverge("generator loss", s, snapshot_path_, checkpoint());
  gen.zero_grad();
  gt.backward(g_loss);
  gen_optimizer_.step(gen, rec.lr);
  if (!gen.all_finite() || !disc.all_finite()) diverge("vec2wav parameters", s, snapshot_path_, checkpoint());

  state_.step = s + 1;
  state_.epoch = state_.step / config_.epoch_steps;
  state_.lr = rec.lr;
  state_.lambda_mel = rec.lambda_mel;
  return rec;
}

std::vector<Vec2WavStepRecord> Vec2WavTrainer::train(std::span<const Vec2WavExample> dataset, std::int64_t steps,
                                                     MetricsLog* log, const StepCallback& after_step) {
  if (steps < 0) throw PreconditionError("steps must be non-negative");
  std::vector<Vec2WavStepRecord> records;
  if (steps == 0) return records;
  if (dataset.empty()) throw PreconditionError("vec2wav training needs at least one example");
  if (state_.total_steps == 0) state_.total_steps = state_.step + steps;
  for (std::int64_t i = 0; i < steps; ++i) {
    records.push_back(step(dataset));
    if (log) log->append(records.back().metrics());
    if (after_step) after_step(state_);
  }
  return records;
}

Checkpoint Vec2WavTrainer::checkpoint() const {
  Checkpoint ck;
  ck.header = base_header(config_, "vec2wav", state_);
  store_parameters(ck, "gen", model_.generator_params());
  store_parameters(ck, "disc", model_.discriminator_params());
  store_optimizer(ck, "opt_g", gen_optimizer_);
  store_optimizer(ck, "opt_d", disc_optimizer_);
  return ck;
}

Vec2Wav<float> load_vec2wav(const Checkpoint& ck) {
  require_stage(ck, "vec2wav");
  const TrainingConfig config = checkpoint_config(ck);
  Vec2Wav<float> model(config.vec2wav, 0);
  load_parameters(ck, "gen", model.generator_params());
  load_parameters(ck, "disc", model.discriminator_params());
  return model;
}

}  // namespace wtv
