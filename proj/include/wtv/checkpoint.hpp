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

// Single-file archive shared by both stages.
//
// Layout (little endian):
//   "WTVC" u32 version
//   u32 header_bytes, then "key=value\n" lines sorted by key
//   u32 tensor_count, then per tensor in name order:
//     u32 name_bytes, name, u32 rows, u32 cols, rows*cols float32 column-major
//
// Both maps are ordered, so encoding is a pure function of the contents and
// a save -> load -> save cycle reproduces the file byte for byte.

#ifndef WTV_CHECKPOINT_HPP_
#define WTV_CHECKPOINT_HPP_

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "wtv/config.hpp"
#include "wtv/nn.hpp"
#include "wtv/optim.hpp"

namespace wtv {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  KeyValues header;
  std::map<std::string, Eigen::MatrixXf> tensors;

  const std::string& get(const std::string& key) const;
};

std::string encode_checkpoint(const Checkpoint& ck);
Checkpoint decode_checkpoint(std::string_view bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Parameters go under "<prefix>/<name>", buffers under "<prefix>.buffer/<name>".
template <typename Scalar>
void store_parameters(Checkpoint& ck, const std::string& prefix, const nn::ParameterSet<Scalar>& params);
// Every parameter and buffer of `params` must be present with its shape.
template <typename Scalar>
void load_parameters(const Checkpoint& ck, const std::string& prefix, nn::ParameterSet<Scalar>& params);

template <typename Scalar>
void store_optimizer(Checkpoint& ck, const std::string& prefix, const Optimizer<Scalar>& opt);
template <typename Scalar>
void load_optimizer(const Checkpoint& ck, const std::string& prefix, Optimizer<Scalar>& opt);

}  // namespace wtv

#endif  // WTV_CHECKPOINT_HPP_
