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

#include "wtv/config.hpp"

#include <charconv>
#include <sstream>

#include "wtv/io.hpp"

namespace wtv {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(trim(cur));
  return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ConfigError("invalid value '" + text + "' for " + key);
  return v;
}

// visit() hands every field to one of these together with its key.
struct Writer {
  KeyValues& kv;
  void operator()(const std::string& k, const int& v) { kv[k] = std::to_string(v); }
  void operator()(const std::string& k, const std::int64_t& v) { kv[k] = std::to_string(v); }
  void operator()(const std::string& k, const std::uint64_t& v) { kv[k] = std::to_string(v); }
  void operator()(const std::string& k, const double& v) { kv[k] = format_double(v); }
  void operator()(const std::string& k, const std::string& v) { kv[k] = v; }
  void operator()(const std::string& k, const OptimizerKind& v) { kv[k] = to_string(v); }
  void operator()(const std::string& k, const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    kv[k] = s;
  }
  void operator()(const std::string& k, const std::vector<std::vector<int>>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) s += ";";
      for (std::size_t j = 0; j < v[i].size(); ++j) s += (j ? "," : "") + std::to_string(v[i][j]);
    }
    kv[k] = s;
  }
};

struct Reader {
  const KeyValues& kv;
  std::size_t consumed = 0;

  const std::string* find(const std::string& k) {
    auto it = kv.find(k);
    if (it == kv.end()) return nullptr;
    ++consumed;
    return &it->second;
  }
  void operator()(const std::string& k, int& v) {
    if (auto* s = find(k)) v = parse_number<int>(k, *s);
  }
  void operator()(const std::string& k, std::int64_t& v) {
    if (auto* s = find(k)) v = parse_number<std::int64_t>(k, *s);
  }
  void operator()(const std::string& k, std::uint64_t& v) {
    if (auto* s = find(k)) v = parse_number<std::uint64_t>(k, *s);
  }
  void operator()(const std::string& k, double& v) {
    if (auto* s = find(k)) v = parse_number<double>(k, *s);
  }
  void operator()(const std::string& k, std::string& v) {
    if (auto* s = find(k)) v = *s;
  }
  void operator()(const std::string& k, OptimizerKind& v) {
    if (auto* s = find(k)) v = optimizer_kind_from_string(*s);
  }
  void operator()(const std::string& k, std::vector<int>& v) {
    if (auto* s = find(k)) {
      v.clear();
      if (!s->empty())
        for (const auto& part : split(*s, ',')) v.push_back(parse_number<int>(k, part));
    }
  }
  void operator()(const std::string& k, std::vector<std::vector<int>>& v) {
    if (auto* s = find(k)) {
      v.clear();
      for (const auto& group : split(*s, ';')) {
        std::vector<int> g;
        for (const auto& part : split(group, ',')) g.push_back(parse_number<int>(k, part));
        v.push_back(g);
      }
    }
  }
};

template <typename C, typename F>
void visit_optimizer(const std::string& p, C& o, F& f) {
  f(p + ".algorithm", o.algorithm);
  f(p + ".lr", o.lr);
  f(p + ".beta1", o.beta1);
  f(p + ".beta2", o.beta2);
  f(p + ".eps", o.eps);
  f(p + ".weight_decay", o.weight_decay);
  f(p + ".per_epoch_decay", o.per_epoch_decay);
  f(p + ".clip_norm", o.clip_norm);
  f(p + ".warmup_steps", o.warmup_steps);
}

template <typename C, typename F>
void visit(C& c, F& f) {
  f("config_version", c.config_version);
  f("seed", c.seed);

  auto& t = c.text2vec;
  f("text2vec.vocab_size", t.vocab_size);
  f("text2vec.hidden_dim", t.hidden_dim);
  f("text2vec.fft_layers_per_block", t.fft_layers_per_block);
  f("text2vec.attention_heads", t.attention_heads);
  f("text2vec.conv_kernel", t.conv_kernel);
  f("text2vec.conv_filter", t.conv_filter);
  f("text2vec.duration_hidden", t.duration_hidden);
  f("text2vec.duration_kernel", t.duration_kernel);
  f("text2vec.speaker_dim", t.speaker_dim);
  f("text2vec.feature_dim", t.feature_dim);
  f("text2vec.align_dim", t.align_dim);
  f("text2vec.speaker_channels", t.speaker_channels);
  f("text2vec.speaker_attention", t.speaker_attention);
  f("text2vec.prior_strength", t.prior_strength);

  auto& v = c.vec2wav;
  f("vec2wav.upsample_rates", v.upsample_rates);
  f("vec2wav.upsample_kernels", v.upsample_kernels);
  f("vec2wav.resblock_kernels", v.resblock_kernels);
  f("vec2wav.resblock_dilations", v.resblock_dilations);
  f("vec2wav.base_channels", v.base_channels);
  f("vec2wav.min_channels", v.min_channels);
  f("vec2wav.mpd_periods", v.mpd_periods);
  f("vec2wav.msd_scales", v.msd_scales);
  f("vec2wav.mpd_channels", v.mpd_channels);
  f("vec2wav.msd_channels", v.msd_channels);
  f("vec2wav.noise_dim", v.noise_dim);
  f("vec2wav.speaker_dim", v.speaker_dim);
  f("vec2wav.feature_dim", v.feature_dim);
  f("vec2wav.output_rate", v.output_rate);
  f("vec2wav.speaker_channels", v.speaker_channels);
  f("vec2wav.speaker_attention", v.speaker_attention);
  f("vec2wav.cbn_momentum", v.cbn_momentum);
  f("vec2wav.cbn_eps", v.cbn_eps);
  f("vec2wav.leaky_slope", v.leaky_slope);
  f("vec2wav.lambda_fm", v.lambda_fm);
  f("vec2wav.lambda_mel", v.lambda_mel);

  visit_optimizer("optim.text2vec", c.text2vec_optim, f);
  visit_optimizer("optim.vec2wav", c.vec2wav_optim, f);

  f("schedule.lambda_duration", c.lambda_duration);
  f("schedule.lambda_align", c.lambda_align);
  f("schedule.lambda_bin_max", c.lambda_bin_max);
  f("schedule.bin_ramp_start", c.bin_ramp_start);
  f("schedule.bin_ramp_end", c.bin_ramp_end);
  f("schedule.epoch_steps", c.epoch_steps);

  f("train.text2vec_steps", c.text2vec_steps);
  f("train.vec2wav_steps", c.vec2wav_steps);
  f("train.text2vec_batch", c.text2vec_batch);
  f("train.vec2wav_batch", c.vec2wav_batch);
  f("train.window_frames", c.window_frames);
  f("train.checkpoint_every", c.checkpoint_every);

  f("data.extractor", c.extractor);
  f("data.extractor_seed", c.extractor_seed);
  f("data.normalize_target_db", c.normalize_target_db);
  f("data.trim_threshold_db", c.trim_threshold_db);
  f("data.min_reference_seconds", c.min_reference_seconds);
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw ConfigError("cannot format number");
  return std::string(buf, ptr);
}

void TrainingConfig::validate() const {
  if (config_version != kConfigVersion)
    throw ConfigError("unsupported config_version " + std::to_string(config_version));
  text2vec.validate();
  vec2wav.validate();
  text2vec_optim.validate();
  vec2wav_optim.validate();
  if (!(lambda_duration >= 0 && lambda_align >= 0 && lambda_bin_max >= 0))
    throw ConfigError("loss weights must be non-negative");
  if (bin_ramp_start < 0 || bin_ramp_end < bin_ramp_start) throw ConfigError("invalid binarization ramp");
  if (text2vec_steps < 0 || vec2wav_steps < 0) throw ConfigError("step counts must be non-negative");
  if (text2vec_batch < 1 || vec2wav_batch < 1) throw ConfigError("batch sizes must be positive");
  if (epoch_steps < 1) throw ConfigError("epoch_steps must be positive");
  if (window_frames < 1) throw ConfigError("window_frames must be positive");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be non-negative");
  if (!(normalize_target_db <= 0)) throw ConfigError("normalize_target_db must be <= 0");
  if (!(trim_threshold_db < 0)) throw ConfigError("trim_threshold_db must be negative");
  if (!(min_reference_seconds > 0)) throw ConfigError("min_reference_seconds must be positive");
}

TrainingConfig smoke_config() {
  TrainingConfig c;
  c.text2vec.hidden_dim = 32;
  c.text2vec.fft_layers_per_block = 1;
  c.text2vec.attention_heads = 2;
  c.text2vec.conv_filter = 64;
  c.text2vec.duration_hidden = 32;
  c.text2vec.align_dim = 16;
  c.text2vec.speaker_channels = 32;
  c.text2vec.speaker_attention = 16;

  c.vec2wav.base_channels = 32;
  c.vec2wav.min_channels = 8;
  c.vec2wav.mpd_channels = {8, 16, 16, 16, 16};
  c.vec2wav.msd_channels = {8, 8, 16, 16, 16, 16, 16};
  c.vec2wav.speaker_channels = 16;
  c.vec2wav.speaker_attention = 8;

  c.bin_ramp_start = 50;
  c.bin_ramp_end = 150;
  c.text2vec_steps = 200;
  c.vec2wav_steps = 2000;
  c.text2vec_batch = 2;
  c.vec2wav_batch = 1;
  c.checkpoint_every = 100;
  c.text2vec_optim.warmup_steps = 50;
  return c;
}

KeyValues to_key_values(const TrainingConfig& config) {
  KeyValues kv;
  Writer w{kv};
  visit(config, w);
  return kv;
}

TrainingConfig from_key_values(const KeyValues& kv) {
  TrainingConfig c;
  auto version = kv.find("config_version");
  if (version != kv.end() && parse_number<int>("config_version", version->second) != kConfigVersion)
    throw ConfigError("unsupported config_version " + version->second);
  Reader r{kv};
  visit(c, r);
  if (r.consumed != kv.size()) {
    const KeyValues known = to_key_values(c);
    for (const auto& [k, v] : kv)
      if (!known.count(k)) throw ConfigError("unknown config key '" + k + "'");
  }
  c.validate();
  return c;
}

KeyValues parse_key_values(const std::string& text) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    if (kv.count(key)) throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    kv[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

std::string format_config_file(const TrainingConfig& config) {
  std::string out =
      "# wtv training configuration\n"
      "# Desk-scale defaults. The full-scale recipe ran 800k text2vec iterations\n"
      "# and 80k finetuning iterations on four GPUs.\n";
  for (const auto& [k, v] : to_key_values(config)) out += k + " = " + v + "\n";
  return out;
}

TrainingConfig parse_config_file(const std::string& text) { return from_key_values(parse_key_values(text)); }

TrainingConfig load_config_file(const std::string& path) { return parse_config_file(read_file(path)); }

}  // namespace wtv
