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

#include <filesystem>
#include <fstream>
#include <string>

#include "corpus.hpp"
#include "doctest.h"
#include "wtv/audio.hpp"
#include "wtv/data.hpp"
#include "wtv/io.hpp"

namespace fs = std::filesystem;

namespace {

struct Corpus {
  fs::path dir;
  std::vector<wtv::ManifestEntry> entries;
};

// Three utterances at both rates; the last has no transcript.
Corpus make_corpus(const std::string& name) {
  Corpus c;
  c.dir = fs::temp_directory_path() / ("wtv_test_data_" + name);
  fs::remove_all(c.dir);
  fs::create_directories(c.dir / "wav16");
  fs::create_directories(c.dir / "wav32");
  const std::vector<std::pair<std::string, double>> utts{{"u1", 150}, {"u2", 200}, {"u3", 250}};
  for (const auto& [id, f0] : utts) {
    wtv::write_wav(c.dir / "wav16" / (id + ".wav"), wtv::testing::voiced_tone(f0, 0.4, 16000));
    wtv::write_wav(c.dir / "wav32" / (id + ".wav"), wtv::testing::voiced_tone(f0, 0.4, 32000));
    wtv::ManifestEntry e;
    e.utterance_id = id;
    e.audio_path = (c.dir / "wav32" / (id + ".wav")).string();
    e.audio_16k_path = (c.dir / "wav16" / (id + ".wav")).string();
    if (id != "u3") e.transcript = "text " + id;
    e.speaker_id = "spk" + id;
    e.duration_s = 0.4;
    c.entries.push_back(e);
  }
  return c;
}

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

}  // namespace

TEST_CASE("manifest round trip") {
  const auto c = make_corpus("manifest");
  wtv::write_manifest(c.dir / "m.jsonl", c.entries);
  const auto m = wtv::load_manifest(c.dir / "m.jsonl");
  CHECK(m.issues.empty());
  CHECK(m.entries == c.entries);
  CHECK(m.text2vec_count() == 2);
  CHECK_FALSE(m.entries[2].text2vec_usable());
  fs::remove_all(c.dir);
}

TEST_CASE("manifest paths resolve against the manifest directory") {
  const auto c = make_corpus("relative");
  write_text(c.dir / "m.jsonl", R"({"utterance_id": "u1", "audio_path": "wav32/u1.wav", "audio_16k_path": "wav16/u1.wav"})"
                                "\n");
  const auto m = wtv::load_manifest(c.dir / "m.jsonl");
  REQUIRE(m.entries.size() == 1);
  CHECK(fs::path(m.entries[0].audio_path) == (c.dir / "wav32/u1.wav").lexically_normal());
  CHECK(m.entries[0].duration_s == doctest::Approx(0.4));
  CHECK_FALSE(m.entries[0].transcript.has_value());
  fs::remove_all(c.dir);
}

TEST_CASE("manifest errors are collected") {
  const auto c = make_corpus("errors");
  const std::string good = wtv::manifest_line(c.entries[0]);
  write_text(c.dir / "m.jsonl", good + "\n" +
                                    "{not json\n"
                                    "{\"utterance_id\": \"x\"}\n"
                                    "{\"utterance_id\": \"bad id\", \"audio_path\": \"wav32/u1.wav\"}\n"
                                    "{\"utterance_id\": \"y\", \"audio_path\": \"missing.wav\"}\n"
                                    "{\"utterance_id\": \"z\", \"audio_path\": \"wav32/u1.wav\", \"extra\": 1}\n"
                                    "\n" +
                                    good + "\n");
  const auto m = wtv::load_manifest(c.dir / "m.jsonl");
  CHECK(m.entries.size() == 1);
  REQUIRE(m.issues.size() == 6);
  CHECK(m.issues[0].line == 2);
  CHECK(m.issues[5].line == 8);
  CHECK(m.issues[5].message.find("duplicate") != std::string::npos);

  write_text(c.dir / "empty.jsonl", "");
  try {
    wtv::load_manifest(c.dir / "empty.jsonl");
    FAIL("expected a ValidationError");
  } catch (const wtv::ValidationError& e) {
    CHECK(std::string(e.what()).find("0 valid") != std::string::npos);
  }
  CHECK_THROWS_AS(wtv::load_manifest(c.dir / "absent.jsonl"), wtv::MissingArtifactError);
  fs::remove_all(c.dir);
}

TEST_CASE("feature cache") {
  auto c = make_corpus("cache");
  const wtv::MockFeatureExtractor extractor(0);
  const fs::path cache = c.dir / "cache";

  const auto first = wtv::cache_features(c.entries, extractor, cache);
  CHECK(first.processed == 3);
  CHECK(first.total() == 3);

  SUBCASE("cached features reproduce extraction bitwise") {
    const auto expected = extractor.extract(wtv::normalize_dbfs(wtv::read_wav(*c.entries[1].audio_16k_path), -3.0));
    CHECK(wtv::load_cached_features(cache, "u2").values == expected.values);
  }

  SUBCASE("second run writes nothing") {
    const auto stamp = fs::last_write_time(cache / "u1.wtv1");
    const auto again = wtv::cache_features(c.entries, extractor, cache);
    CHECK(again.processed == 0);
    CHECK(again.skipped == 3);
    CHECK(fs::last_write_time(cache / "u1.wtv1") == stamp);
  }

  SUBCASE("corrupt file is rewritten") {
    write_text(cache / "u2.wtv1", "WTV1 garbage");
    const auto again = wtv::cache_features(c.entries, extractor, cache);
    CHECK(again.processed == 1);
    CHECK(again.skipped == 2);
    CHECK(wtv::load_cached_features(cache, "u2").num_frames() == 20);
  }

  SUBCASE("changed options invalidate the cache") {
    wtv::CacheOptions raw;
    raw.normalize_db.reset();
    CHECK(wtv::cache_features(c.entries, extractor, cache, raw).processed == 3);
    CHECK(wtv::cache_features(c.entries, wtv::MockFeatureExtractor(1), cache, raw).processed == 3);
  }

  SUBCASE("failures are reported and the batch continues") {
    auto entries = c.entries;
    entries[0].audio_16k_path.reset();  // 32 kHz input to the extractor
    entries[1].audio_16k_path = (c.dir / "gone.wav").string();
    const auto r = wtv::cache_features(entries, extractor, c.dir / "cache2");
    CHECK(r.failed == 2);
    CHECK(r.processed == 1);
    CHECK(r.total() == 3);
    REQUIRE(r.failures.size() == 2);
    CHECK(r.failures[0].utterance_id == "u1");
  }

  SUBCASE("datasets") {
    const auto t2v = wtv::load_text2vec_dataset(c.entries, cache);
    CHECK(t2v.size() == 2);
    CHECK(t2v[0].tokens.ids == wtv::tokenize("text u1").ids);
    const auto v2w = wtv::load_vec2wav_dataset(c.entries, cache);
    REQUIRE(v2w.size() == 3);
    for (const auto& ex : v2w) CHECK(ex.audio.size() == 640 * ex.features.num_frames());
    CHECK(wtv::peak_dbfs(v2w[0].audio) == doctest::Approx(-3.0).epsilon(1e-4));
    CHECK_THROWS_AS(wtv::load_cached_features(cache, "nope"), wtv::MissingArtifactError);
  }
  fs::remove_all(c.dir);
}
