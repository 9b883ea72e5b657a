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

// wtv: command line front end. Exit codes: 0 success, 2 invalid input,
// 3 missing file, 4 training divergence.

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "wtv/audio.hpp"
#include "wtv/checkpoint.hpp"
#include "wtv/commands.hpp"
#include "wtv/f0.hpp"
#include "wtv/io.hpp"

namespace {

namespace fs = std::filesystem;

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;

  wtv::TrainingConfig load() const {
    wtv::TrainingConfig c = config_path.empty() ? wtv::TrainingConfig{} : wtv::load_config_file(config_path);
    if (seed) c.seed = *seed;
    return c;
  }
};

void add_common(CLI::App* cmd, Common& common) {
  cmd->add_option("--config", common.config_path, "Configuration file (key = value)")->check(CLI::ExistingFile);
  cmd->add_option("--seed", common.seed, "Overrides the configured seed");
}

void add_train_paths(CLI::App* cmd, wtv::TrainOptions& o, std::optional<std::int64_t>& steps) {
  cmd->add_option("--manifest", o.manifest, "Corpus manifest (JSON lines)")->required();
  cmd->add_option("--cache", o.cache_dir, "Feature cache directory")->required();
  cmd->add_option("--output", o.output_dir, "Directory for checkpoints and metrics")->required();
  cmd->add_option("--steps", steps, "Steps to run (default: up to the configured total)");
}

void report_summary(const wtv::TrainSummary& s) {
  std::cout << "steps " << s.first_step << " -> " << s.last_step << "; final checkpoint " << s.final_checkpoint.string()
            << "\n";
}

wtv::Checkpoint stage_checkpoint(const std::string& path, const std::string& stage) {
  wtv::Checkpoint ck = wtv::load_checkpoint(path);
  if (wtv::checkpoint_stage(ck) != stage)
    throw wtv::ValidationError(path + " is a " + wtv::checkpoint_stage(ck) + " checkpoint, expected " + stage);
  return ck;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"wtv: two-stage speech synthesis through self-supervised features"};
  app.require_subcommand(1);

  Common common;

  // config
  std::string preset = "default";
  std::string config_out;
  auto* config_cmd = app.add_subcommand("config", "Write a configuration file");
  config_cmd->add_option("--preset", preset, "default or smoke")->check(CLI::IsMember({"default", "smoke"}));
  config_cmd->add_option("--output", config_out, "Destination file")->required();

  // cache
  fs::path manifest_path, cache_dir;
  auto* cache_cmd = app.add_subcommand("cache", "Extract and cache features for a manifest");
  add_common(cache_cmd, common);
  cache_cmd->add_option("--manifest", manifest_path)->required();
  cache_cmd->add_option("--cache", cache_dir)->required();

  // training
  wtv::TrainOptions train;
  std::optional<std::int64_t> steps;
  std::string resume;
  auto* t2v_cmd = app.add_subcommand("train-text2vec", "Train the text-to-features model");
  auto* v2w_cmd = app.add_subcommand("train-vec2wav", "Train the features-to-waveform model");
  for (auto* cmd : {t2v_cmd, v2w_cmd}) {
    add_common(cmd, common);
    add_train_paths(cmd, train, steps);
    cmd->add_option("--checkpoint", resume, "Resume from this checkpoint")->check(CLI::ExistingFile);
  }
  std::string finetune_stage;
  auto* ft_cmd = app.add_subcommand("finetune", "Continue from a checkpoint with a ten times smaller learning rate");
  add_common(ft_cmd, common);
  add_train_paths(ft_cmd, train, steps);
  ft_cmd->add_option("--stage", finetune_stage)->required()->check(CLI::IsMember({"text2vec", "vec2wav"}));
  ft_cmd->add_option("--checkpoint", resume)->required();

  // synthesize
  std::string text, t2v_ckpt, v2w_ckpt, reference, reference_16k, speaker_id, output;
  double pace = 1.0;
  std::uint64_t seed = 0;
  auto* syn_cmd = app.add_subcommand("synthesize", "Text to 32 kHz speech in a reference voice");
  syn_cmd->add_option("--text", text)->required();
  syn_cmd->add_option("--text2vec", t2v_ckpt, "text2vec checkpoint")->required();
  syn_cmd->add_option("--checkpoint,--vec2wav", v2w_ckpt, "vec2wav checkpoint")->required();
  syn_cmd->add_option("--reference", reference, "32 kHz reference recording");
  syn_cmd->add_option("--reference-16k", reference_16k, "The same reference at 16 kHz");
  syn_cmd->add_option("--manifest", manifest_path, "Manifest to look up --speaker-id");
  syn_cmd->add_option("--speaker-id", speaker_id);
  syn_cmd->add_option("--pace", pace, "Duration multiplier")->check(CLI::PositiveNumber);
  syn_cmd->add_option("--seed", seed);
  syn_cmd->add_option("--output", output)->required();

  // convert-voice
  std::string source, target;
  auto* vc_cmd = app.add_subcommand("convert-voice", "Resynthesize 16 kHz speech in a target voice");
  vc_cmd->add_option("--checkpoint", v2w_ckpt, "vec2wav checkpoint")->required();
  vc_cmd->add_option("--source", source, "16 kHz source recording")->required();
  vc_cmd->add_option("--target", target, "32 kHz target-speaker reference")->required();
  vc_cmd->add_option("--seed", seed);
  vc_cmd->add_option("--output", output)->required();

  // speaker-embed
  std::string audio_path, stage_name = "vec2wav", checkpoint;
  std::optional<double> window;
  double min_seconds = 1.0;
  auto* emb_cmd = app.add_subcommand("speaker-embed", "Speaker embedding of a reference recording");
  emb_cmd->add_option("--checkpoint", checkpoint)->required();
  emb_cmd->add_option("--audio", audio_path, "32 kHz for vec2wav, 16 kHz for text2vec")->required();
  emb_cmd->add_option("--stage", stage_name)->check(CLI::IsMember({"text2vec", "vec2wav"}));
  emb_cmd->add_option("--window", window, "Crop length in seconds: 1, 3, 10 or 30");
  emb_cmd->add_option("--min-seconds", min_seconds);
  emb_cmd->add_option("--seed", seed);
  emb_cmd->add_option("--output", output, "JSON file (default: stdout)");

  // eval-similarity
  fs::path generated_dir, reference_dir;
  auto* sim_cmd = app.add_subcommand("eval-similarity", "Speaker similarity of paired recordings");
  sim_cmd->add_option("--checkpoint", checkpoint, "vec2wav checkpoint")->required();
  sim_cmd->add_option("--generated", generated_dir)->required();
  sim_cmd->add_option("--reference", reference_dir)->required();
  sim_cmd->add_option("--output", output, "JSON lines report (default: stdout)");

  // export-f0
  auto* f0_cmd = app.add_subcommand("export-f0", "Pitch trajectory at 10 ms hops");
  f0_cmd->add_option("--audio", audio_path)->required();
  f0_cmd->add_option("--output", output, "JSON lines (default: stdout)");

  // preprocess
  std::string input;
  std::optional<double> normalize_db = -3.0;
  bool trim = false;
  double threshold_db = -40.0;
  auto* pre_cmd = app.add_subcommand("preprocess", "Peak normalization and optional silence trimming");
  pre_cmd->add_option("--input", input)->required();
  pre_cmd->add_option("--output", output)->required();
  pre_cmd->add_option("--normalize-db", normalize_db, "Target peak in dBFS");
  pre_cmd->add_flag("--trim", trim, "Trim leading and trailing silence");
  pre_cmd->add_option("--threshold-db", threshold_db, "Silence threshold in dBFS");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  auto write_or_print = [&](const std::string& text_out) {
    if (output.empty())
      std::cout << text_out;
    else
      wtv::write_file_atomic(output, text_out);
  };

  try {
    if (config_cmd->parsed()) {
      wtv::write_file_atomic(config_out, wtv::format_config_file(preset == "smoke" ? wtv::smoke_config()
                                                                                    : wtv::TrainingConfig{}));
    } else if (cache_cmd->parsed()) {
      const auto r = wtv::cache_command(common.load(), manifest_path, cache_dir);
      std::cout << "processed " << r.processed << ", skipped " << r.skipped << ", failed " << r.failed << ", total "
                << r.total() << "\n";
    } else if (t2v_cmd->parsed() || v2w_cmd->parsed() || ft_cmd->parsed()) {
      train.steps = steps;
      if (!resume.empty()) train.checkpoint = resume;
      train.finetune = ft_cmd->parsed();
      const bool text_stage = t2v_cmd->parsed() || (ft_cmd->parsed() && finetune_stage == "text2vec");
      const auto config = common.load();
      report_summary(text_stage ? wtv::train_text2vec_command(config, train, &std::cerr)
                                : wtv::train_vec2wav_command(config, train, &std::cerr));
    } else if (syn_cmd->parsed()) {
      const auto t2v_ck = stage_checkpoint(t2v_ckpt, "text2vec");
      const auto v2w_ck = stage_checkpoint(v2w_ckpt, "vec2wav");
      wtv::SpeakerReference ref;
      if (!speaker_id.empty()) {
        if (manifest_path.empty()) throw wtv::ValidationError("--speaker-id needs --manifest");
        ref = wtv::reference_for_speaker(wtv::load_manifest(manifest_path), speaker_id);
      } else {
        if (reference.empty() || reference_16k.empty())
          throw wtv::ValidationError("give --reference and --reference-16k, or --manifest with --speaker-id");
        ref = wtv::load_reference(reference, reference_16k);
      }
      const auto extractor = wtv::make_extractor(wtv::checkpoint_config(t2v_ck));
      const auto result = wtv::synthesize(wtv::load_text2vec(t2v_ck), wtv::load_vec2wav(v2w_ck), *extractor, ref,
                                          {text, pace, seed});
      wtv::write_wav(output, result.audio);
      std::cout << result.features.num_frames() << " frames, " << result.audio.size() << " samples\n";
    } else if (vc_cmd->parsed()) {
      const auto ck = stage_checkpoint(v2w_ckpt, "vec2wav");
      const auto extractor = wtv::make_extractor(wtv::checkpoint_config(ck));
      const auto out = wtv::convert_voice(wtv::load_vec2wav(ck), *extractor, wtv::read_wav(source),
                                          wtv::read_wav(target), seed);
      wtv::write_wav(output, out);
      std::cout << out.size() << " samples\n";
    } else if (emb_cmd->parsed()) {
      wtv::EmbedOptions o;
      o.stage = wtv::speaker_stage_from_string(stage_name);
      o.window_seconds = window;
      o.seed = seed;
      o.min_seconds = min_seconds;
      const auto ck = stage_checkpoint(checkpoint, stage_name);
      const auto audio = wtv::read_wav(audio_path);
      wtv::EmbedResult r;
      if (o.stage == wtv::SpeakerStage::kText2Vec) {
        const auto model = wtv::load_text2vec(ck);
        const auto extractor = wtv::make_extractor(wtv::checkpoint_config(ck));
        r = wtv::speaker_embed_command(&model, nullptr, extractor.get(), audio, o);
      } else {
        const auto model = wtv::load_vec2wav(ck);
        r = wtv::speaker_embed_command(nullptr, &model, nullptr, audio, o);
      }
      write_or_print(wtv::embedding_json(r, o) + "\n");
    } else if (sim_cmd->parsed()) {
      const auto model = wtv::load_vec2wav(stage_checkpoint(checkpoint, "vec2wav"));
      write_or_print(wtv::similarity_jsonl(wtv::eval_similarity_command(model, generated_dir, reference_dir)));
    } else if (f0_cmd->parsed()) {
      write_or_print(wtv::f0_to_jsonl(wtv::estimate_f0(wtv::read_wav(audio_path))));
    } else if (pre_cmd->parsed()) {
      wtv::Waveform w = wtv::read_wav(input);
      if (trim) {
        const auto t = wtv::trim_silence(w, threshold_db);
        if (t.fully_silent) std::cerr << "warning: " << input << " is silent; kept one sample\n";
        w = t.audio;
      }
      if (normalize_db) w = wtv::normalize_dbfs(w, *normalize_db);
      wtv::write_wav(output, w);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return wtv::exit_code_for(e);
  }
  return 0;
}
