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

// Binary file helpers: atomic writes, content hashes and the float32 matrix
// container used for cached features and alignment dumps.
//
// Matrix file layout (little-endian):
//   bytes 0..3   magic ("WTV1" for features, "WTVA" for alignments)
//   bytes 4..7   uint32 rows
//   bytes 8..11  uint32 cols
//   bytes 12..15 uint32 reserved, zero
//   then rows * cols float32 values in row-major order.

#ifndef WTV_IO_HPP_
#define WTV_IO_HPP_

#include <Eigen/Dense>

#include <filesystem>
#include <string>
#include <string_view>

namespace wtv {

inline constexpr std::string_view kFeatureMagic = "WTV1";
inline constexpr std::string_view kAlignmentMagic = "WTVA";

std::string read_file(const std::filesystem::path& path);
// Writes to a sibling temporary file and renames it over `path`, so readers
// never see a partially written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

std::string sha256_hex(std::string_view bytes);

std::string encode_matrix(std::string_view magic, const Eigen::MatrixXf& m);
Eigen::MatrixXf decode_matrix(std::string_view magic, std::string_view bytes, const std::string& what);

// Writes the matrix file and a "<path>.sha256" sidecar holding the hex digest.
void write_matrix_file(const std::filesystem::path& path, std::string_view magic,
                       const Eigen::MatrixXf& m);
// Reads a matrix file. When a sidecar exists its digest must match.
Eigen::MatrixXf read_matrix_file(const std::filesystem::path& path, std::string_view magic);

}  // namespace wtv

#endif  // WTV_IO_HPP_
