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

#include "wtv/io.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <random>

#include "wtv/core.hpp"

namespace wtv {
namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(std::string_view b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(b[at + static_cast<std::size_t>(i)]);
  return v;
}

}  // namespace

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("cannot open " + path.string());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::random_device rd;
  auto tmp = path;
  tmp += ".tmp" + std::to_string(rd());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw MissingArtifactError("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) throw MissingArtifactError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw MissingArtifactError("cannot rename into " + path.string() + ": " + ec.message());
  }
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 computation failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 15]);
  }
  return out;
}

std::string encode_matrix(std::string_view magic, const Eigen::MatrixXf& m) {
  if (magic.size() != 4) throw PreconditionError("magic must be 4 bytes");
  std::string out(magic);
  put_u32(out, static_cast<std::uint32_t>(m.rows()));
  put_u32(out, static_cast<std::uint32_t>(m.cols()));
  put_u32(out, 0);
  out.reserve(out.size() + 4 * static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) put_u32(out, std::bit_cast<std::uint32_t>(m(r, c)));
  return out;
}

Eigen::MatrixXf decode_matrix(std::string_view magic, std::string_view bytes, const std::string& what) {
  if (bytes.size() < 16) throw FormatError(what + ": truncated header");
  if (bytes.substr(0, 4) != magic)
    throw FormatError(what + ": bad magic, expected " + std::string(magic));
  const std::uint32_t rows = get_u32(bytes, 4), cols = get_u32(bytes, 8);
  if (get_u32(bytes, 12) != 0) throw FormatError(what + ": reserved header field is not zero");
  const std::uint64_t expected = 16 + 4ull * rows * cols;
  if (bytes.size() != expected)
    throw FormatError(what + ": size " + std::to_string(bytes.size()) + " does not match header (" +
                      std::to_string(expected) + ")");
  Eigen::MatrixXf m(rows, cols);
  std::size_t at = 16;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c, at += 4) m(r, c) = std::bit_cast<float>(get_u32(bytes, at));
  return m;
}

void write_matrix_file(const std::filesystem::path& path, std::string_view magic,
                       const Eigen::MatrixXf& m) {
  const std::string bytes = encode_matrix(magic, m);
  write_file_atomic(path, bytes);
  auto sidecar = path;
  sidecar += ".sha256";
  write_file_atomic(sidecar, sha256_hex(bytes) + "\n");
}

Eigen::MatrixXf read_matrix_file(const std::filesystem::path& path, std::string_view magic) {
  const std::string bytes = read_file(path);
  auto sidecar = path;
  sidecar += ".sha256";
  if (std::filesystem::exists(sidecar)) {
    std::string want = read_file(sidecar);
    while (!want.empty() && (want.back() == '\n' || want.back() == ' ')) want.pop_back();
    if (want != sha256_hex(bytes)) throw FormatError(path.string() + ": content hash mismatch");
  }
  return decode_matrix(magic, bytes, path.string());
}

}  // namespace wtv
