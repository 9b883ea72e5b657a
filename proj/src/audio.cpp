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

#include "wtv/audio.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <numbers>
#include <string>

#include "wtv/io.hpp"

namespace wtv {
namespace {

std::uint32_t read_u32(const std::vector<char>& b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(b[at + static_cast<std::size_t>(i)]);
  return v;
}

std::uint16_t read_u16(const std::vector<char>& b, std::size_t at) {
  return static_cast<std::uint16_t>(static_cast<unsigned char>(b[at]) |
                                    (static_cast<unsigned char>(b[at + 1]) << 8));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}

}  // namespace

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("cannot open audio file " + path.string());
  std::vector<char> b((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (b.size() < 12 || std::memcmp(b.data(), "RIFF", 4) != 0 || std::memcmp(b.data() + 8, "WAVE", 4) != 0)
    throw FormatError(path.string() + " is not a RIFF/WAVE file");

  int format = 0, channels = 0, rate = 0, bits = 0;
  std::size_t data_at = 0, data_size = 0;
  bool have_fmt = false, have_data = false;
  for (std::size_t at = 12; at + 8 <= b.size();) {
    const std::uint32_t size = read_u32(b, at + 4);
    const std::size_t body = at + 8;
    if (std::memcmp(b.data() + at, "fmt ", 4) == 0) {
      if (size < 16 || body + 16 > b.size()) throw FormatError("truncated fmt chunk in " + path.string());
      format = read_u16(b, body);
      channels = read_u16(b, body + 2);
      rate = static_cast<int>(read_u32(b, body + 4));
      bits = read_u16(b, body + 14);
      if (format == 0xFFFE && size >= 26) format = read_u16(b, body + 24);
      have_fmt = true;
    } else if (std::memcmp(b.data() + at, "data", 4) == 0) {
      data_at = body;
      data_size = std::min<std::size_t>(size, b.size() - body);
      have_data = true;
    }
    at = body + size + (size & 1u);
  }
  if (!have_fmt || !have_data) throw FormatError(path.string() + " lacks fmt or data chunk");
  if (channels != 1)
    throw ValidationError(path.string() + " has " + std::to_string(channels) + " channels; mono is required");

  Waveform w;
  w.sample_rate = rate;
  if (format == 1 && bits == 16) {
    const std::size_t n = data_size / 2;
    w.samples.resize(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i)
      w.samples(static_cast<Eigen::Index>(i)) =
          static_cast<float>(static_cast<std::int16_t>(read_u16(b, data_at + 2 * i))) / 32768.0f;
  } else if (format == 3 && bits == 32) {
    const std::size_t n = data_size / 4;
    w.samples.resize(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i)
      w.samples(static_cast<Eigen::Index>(i)) = std::bit_cast<float>(read_u32(b, data_at + 4 * i));
  } else {
    throw FormatError(path.string() + ": unsupported sample format " + std::to_string(format) + "/" +
                      std::to_string(bits) + " bit");
  }
  return w;
}

void write_wav(const std::filesystem::path& path, const Waveform& w) {
  if (w.sample_rate <= 0) throw PreconditionError("invalid sample rate");
  const auto n = static_cast<std::uint32_t>(w.samples.size());
  std::string out;
  out.reserve(44 + 2 * static_cast<std::size_t>(n));
  out.append("RIFF");
  put_u32(out, 36 + 2 * n);
  out.append("WAVEfmt ");
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out.append("data");
  put_u32(out, 2 * n);
  for (Eigen::Index i = 0; i < w.samples.size(); ++i) {
    const float x = std::clamp(w.samples(i), -1.0f, 1.0f);
    const auto q = static_cast<std::int16_t>(std::lround(std::clamp(x * 32768.0f, -32768.0f, 32767.0f)));
    put_u16(out, static_cast<std::uint16_t>(q));
  }
  write_file_atomic(path, out);
}

void require_sample_rate(const Waveform& w, int rate) {
  if (w.sample_rate != rate)
    throw ValidationError("expected " + std::to_string(rate) + " Hz audio, got " +
                          std::to_string(w.sample_rate) + " Hz");
}

double peak_dbfs(const Waveform& w) {
  const double peak = w.samples.size() ? static_cast<double>(w.samples.cwiseAbs().maxCoeff()) : 0.0;
  return peak > 0 ? 20.0 * std::log10(peak) : -std::numeric_limits<double>::infinity();
}

Waveform normalize_dbfs(const Waveform& w, double target_db) {
  validate(w);
  const double peak = static_cast<double>(w.samples.cwiseAbs().maxCoeff());
  if (!(peak > 0)) throw PreconditionError("cannot normalize a silent waveform");
  const double gain = std::pow(10.0, target_db / 20.0) / peak;
  Waveform out = w;
  out.samples = (w.samples.cast<double>() * gain).cast<float>();
  return out;
}

TrimResult trim_silence(const Waveform& w, double threshold_db) {
  validate(w);
  if (w.samples.size() == 0) throw PreconditionError("cannot trim an empty waveform");
  const Eigen::Index frame = std::max<Eigen::Index>(1, w.sample_rate / 100);
  const Eigen::Index L = w.samples.size();
  const Eigen::Index frames = (L + frame - 1) / frame;
  const double threshold = std::pow(10.0, threshold_db / 20.0);
  auto loud = [&](Eigen::Index f) {
    const Eigen::Index s = f * frame;
    const Eigen::Index n = std::min(frame, L - s);
    const double rms = std::sqrt(w.samples.segment(s, n).cast<double>().squaredNorm() / static_cast<double>(n));
    return rms >= threshold;
  };
  Eigen::Index first = 0;
  while (first < frames && !loud(first)) ++first;
  TrimResult r;
  if (first == frames) {
    r.fully_silent = true;
    r.start = 0;
    r.length = 1;
    r.audio.sample_rate = w.sample_rate;
    r.audio.samples = w.samples.head(1);
    return r;
  }
  Eigen::Index last = frames - 1;
  while (last > first && !loud(last)) --last;
  r.start = first * frame;
  r.length = std::min(L, (last + 1) * frame) - r.start;
  r.audio.sample_rate = w.sample_rate;
  r.audio.samples = w.samples.segment(r.start, r.length);
  return r;
}

Waveform resample_linear(const Waveform& w, int target_rate) {
  validate(w);
  if (target_rate <= 0) throw PreconditionError("invalid target rate");
  if (target_rate == w.sample_rate) return w;
  const Eigen::Index L = w.samples.size();
  const auto n = static_cast<Eigen::Index>(
      (static_cast<std::int64_t>(L) * target_rate) / w.sample_rate);
  Waveform out;
  out.sample_rate = target_rate;
  out.samples.resize(std::max<Eigen::Index>(n, 1));
  const double ratio = static_cast<double>(w.sample_rate) / target_rate;
  for (Eigen::Index i = 0; i < out.samples.size(); ++i) {
    const double pos = i * ratio;
    const auto j = static_cast<Eigen::Index>(pos);
    const double frac = pos - static_cast<double>(j);
    const float a = w.samples(std::min(j, L - 1));
    const float b = w.samples(std::min(j + 1, L - 1));
    out.samples(i) = static_cast<float>(a + (b - a) * frac);
  }
  return out;
}

Waveform sine_wave(double frequency_hz, double seconds, int sample_rate, double amplitude) {
  Waveform w;
  w.sample_rate = sample_rate;
  const auto n = static_cast<Eigen::Index>(std::llround(seconds * sample_rate));
  w.samples.resize(n);
  for (Eigen::Index i = 0; i < n; ++i)
    w.samples(i) = static_cast<float>(
        amplitude * std::sin(2.0 * std::numbers::pi * frequency_hz * static_cast<double>(i) / sample_rate));
  return w;
}

Waveform silence(double seconds, int sample_rate) {
  Waveform w;
  w.sample_rate = sample_rate;
  w.samples = Eigen::VectorXf::Zero(static_cast<Eigen::Index>(std::llround(seconds * sample_rate)));
  return w;
}

}  // namespace wtv
