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

#include "wtv/data.hpp"

#include <cctype>
#include <set>
#include <sstream>

#include "json.hpp"
#include "wtv/audio.hpp"
#include "wtv/io.hpp"

namespace wtv {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

bool valid_id(const std::string& id) {
  if (id.empty() || id == "." || id == "..") return false;
  for (unsigned char c : id)
    if (!(std::isalnum(c) || c == '_' || c == '-' || c == '.')) return false;
  return true;
}

std::optional<std::string> optional_string(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  if (!j[key].is_string()) throw ValidationError(std::string("'") + key + "' must be a string");
  return j[key].get<std::string>();
}

std::string resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return (path.is_absolute() ? path : base / path).lexically_normal().string();
}

ManifestEntry parse_entry(const std::string& line, const fs::path& base) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ValidationError("record is not an object");
  static const std::set<std::string> known{"utterance_id", "audio_path",     "transcript",
                                           "speaker_id",   "duration_s",     "audio_16k_path"};
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) throw ValidationError("unknown field '" + k + "'");

  ManifestEntry e;
  const auto id = optional_string(j, "utterance_id");
  const auto audio = optional_string(j, "audio_path");
  if (!id || !valid_id(*id)) throw ValidationError("utterance_id missing or not of [A-Za-z0-9_.-]");
  if (!audio || audio->empty()) throw ValidationError("audio_path missing");
  e.utterance_id = *id;
  e.audio_path = resolve(base, *audio);
  e.transcript = optional_string(j, "transcript");
  e.speaker_id = optional_string(j, "speaker_id");
  if (auto p = optional_string(j, "audio_16k_path")) e.audio_16k_path = resolve(base, *p);
  if (j.contains("duration_s") && !j["duration_s"].is_null()) {
    if (!j["duration_s"].is_number()) throw ValidationError("duration_s must be a number");
    e.duration_s = j["duration_s"].get<double>();
  }

  const Waveform w = read_wav(e.audio_path);
  if (w.size() == 0) throw ValidationError("audio is empty");
  if (e.duration_s <= 0) e.duration_s = w.duration_seconds();
  if (e.audio_16k_path) read_wav(*e.audio_16k_path);
  return e;
}

std::string cache_key(const FeatureExtractor& extractor, const CacheOptions& options, const std::string& audio) {
  std::string material = extractor.fingerprint() + "\n";
  material += options.normalize_db ? "normalize=" + format_double(*options.normalize_db) : "normalize=off";
  material += "\n" + sha256_hex(audio);
  return sha256_hex(material);
}

Waveform prepare(Waveform w, const CacheOptions& options) {
  if (options.normalize_db) w = normalize_dbfs(w, *options.normalize_db);
  return w;
}

}  // namespace

std::size_t Manifest::text2vec_count() const {
  std::size_t n = 0;
  for (const auto& e : entries) n += e.text2vec_usable();
  return n;
}

Manifest load_manifest(const fs::path& path) {
  const std::string text = read_file(path);
  const fs::path base = path.parent_path();
  Manifest m;
  std::set<std::string> ids;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      ManifestEntry e = parse_entry(line, base);
      if (!ids.insert(e.utterance_id).second) throw ValidationError("duplicate utterance_id '" + e.utterance_id + "'");
      m.entries.push_back(std::move(e));
    } catch (const Error& e) {
      m.issues.push_back({lineno, e.what()});
    }
  }
  if (m.entries.empty()) {
    std::string msg = path.string() + ": 0 valid manifest entries";
    if (!m.issues.empty())
      msg += " (" + std::to_string(m.issues.size()) + " rejected; line " + std::to_string(m.issues[0].line) + ": " +
             m.issues[0].message + ")";
    throw ValidationError(msg);
  }
  return m;
}

std::string manifest_line(const ManifestEntry& e) {
  json j;
  j["utterance_id"] = e.utterance_id;
  j["audio_path"] = e.audio_path;
  if (e.audio_16k_path) j["audio_16k_path"] = *e.audio_16k_path;
  if (e.transcript) j["transcript"] = *e.transcript;
  if (e.speaker_id) j["speaker_id"] = *e.speaker_id;
  j["duration_s"] = e.duration_s;
  return j.dump();
}

void write_manifest(const fs::path& path, const std::vector<ManifestEntry>& entries) {
  std::string out;
  for (const auto& e : entries) out += manifest_line(e) + "\n";
  write_file_atomic(path, out);
}

fs::path feature_cache_path(const fs::path& cache_dir, const std::string& utterance_id) {
  if (!valid_id(utterance_id)) throw ValidationError("invalid utterance id '" + utterance_id + "'");
  return cache_dir / (utterance_id + ".wtv1");
}

CacheReport cache_features(const std::vector<ManifestEntry>& entries, const FeatureExtractor& extractor,
                           const fs::path& cache_dir, const CacheOptions& options) {
  fs::create_directories(cache_dir);
  CacheReport report;
  for (const auto& e : entries) {
    try {
      const fs::path out = feature_cache_path(cache_dir, e.utterance_id);
      const fs::path key_path = out.string() + ".key";
      const std::string audio_bytes = read_file(e.extractor_audio_path());
      const std::string key = cache_key(extractor, options, audio_bytes);

      if (fs::exists(out) && fs::exists(key_path)) {
        bool fresh = false;
        try {
          const Eigen::MatrixXf cached = read_matrix_file(out, kFeatureMagic);
          fresh = read_file(key_path) == key && cached.cols() == kFeatureDim && cached.rows() > 0;
        } catch (const Error&) {
          fresh = false;
        }
        if (fresh) {
          ++report.skipped;
          continue;
        }
      }
      const Waveform w = prepare(read_wav(e.extractor_audio_path()), options);
      const FeatureSequence f = extract_features(&extractor, w);
      write_matrix_file(out, kFeatureMagic, f.values);
      write_file_atomic(key_path, key);
      ++report.processed;
    } catch (const Error& err) {
      ++report.failed;
      report.failures.push_back({e.utterance_id, err.what()});
    }
  }
  return report;
}

FeatureSequence load_cached_features(const fs::path& cache_dir, const std::string& utterance_id) {
  FeatureSequence f;
  f.values = read_matrix_file(feature_cache_path(cache_dir, utterance_id), kFeatureMagic);
  if (f.dim() != kFeatureDim) throw FormatError("cached features for " + utterance_id + " are not 768-wide");
  validate(f);
  return f;
}

std::vector<Text2VecExample> load_text2vec_dataset(const std::vector<ManifestEntry>& entries,
                                                   const fs::path& cache_dir) {
  std::vector<Text2VecExample> out;
  for (const auto& e : entries)
    if (e.text2vec_usable()) out.push_back({tokenize(*e.transcript), load_cached_features(cache_dir, e.utterance_id)});
  if (out.empty()) throw ValidationError("no transcribed entries for text2vec training");
  return out;
}

std::vector<Vec2WavExample> load_vec2wav_dataset(const std::vector<ManifestEntry>& entries, const fs::path& cache_dir,
                                                 const CacheOptions& options) {
  std::vector<Vec2WavExample> out;
  for (const auto& e : entries) {
    Waveform audio = read_wav(e.audio_path);
    require_sample_rate(audio, kOutputRate);
    out.push_back(make_vec2wav_example(e.utterance_id, load_cached_features(cache_dir, e.utterance_id),
                                       prepare(std::move(audio), options)));
  }
  if (out.empty()) throw ValidationError("no entries for vec2wav training");
  return out;
}

}  // namespace wtv
