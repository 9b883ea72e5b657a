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

#include "wtv/checkpoint.hpp"

#include <cstring>
#include <limits>

#include "wtv/io.hpp"

namespace wtv {

namespace {

constexpr char kMagic[4] = {'W', 'T', 'V', 'C'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > std::numeric_limits<std::uint32_t>::max()) throw FormatError(std::string(what) + " too large");
  return static_cast<std::uint32_t>(v);
}

class Cursor {
 public:
  explicit Cursor(std::string_view bytes) : bytes_(bytes) {}

  std::string_view take(std::size_t n) {
    if (bytes_.size() - pos_ < n) throw FormatError("checkpoint truncated");
    const auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint32_t u32() {
    const auto s = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(s[i])) << (8 * i);
    return v;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const std::string& Checkpoint::get(const std::string& key) const {
  auto it = header.find(key);
  if (it == header.end()) throw FormatError("checkpoint header lacks '" + key + "'");
  return it->second;
}

std::string encode_checkpoint(const Checkpoint& ck) {
  std::string header;
  for (const auto& [k, v] : ck.header) {
    if (k.empty() || k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos)
      throw FormatError("checkpoint header entry '" + k + "' is not encodable");
    header += k + "=" + v + "\n";
  }
  std::string out(kMagic, 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, checked_u32(header.size(), "header"));
  out += header;
  put_u32(out, checked_u32(ck.tensors.size(), "tensor count"));
  for (const auto& [name, m] : ck.tensors) {
    put_u32(out, checked_u32(name.size(), "tensor name"));
    out += name;
    put_u32(out, checked_u32(static_cast<std::size_t>(m.rows()), "rows"));
    put_u32(out, checked_u32(static_cast<std::size_t>(m.cols()), "cols"));
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      std::uint32_t bits;
      const float f = m.data()[i];
      std::memcpy(&bits, &f, 4);
      put_u32(out, bits);
    }
  }
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  Cursor c(bytes);
  if (c.take(4) != std::string_view(kMagic, 4)) throw FormatError("not a checkpoint (bad magic)");
  const std::uint32_t version = c.u32();
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  const std::string header(c.take(c.u32()));
  std::size_t start = 0;
  while (start < header.size()) {
    const auto end = header.find('\n', start);
    if (end == std::string::npos) throw FormatError("checkpoint header line not terminated");
    const std::string line = header.substr(start, end - start);
    const auto eq = line.find('=');
    if (eq == std::string::npos || eq == 0) throw FormatError("malformed checkpoint header line");
    ck.header[line.substr(0, eq)] = line.substr(eq + 1);
    start = end + 1;
  }
  const std::uint32_t count = c.u32();
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::string name(c.take(c.u32()));
    const std::uint32_t rows = c.u32(), cols = c.u32();
    const std::size_t n = static_cast<std::size_t>(rows) * cols;
    if (n > bytes.size() / 4) throw FormatError("tensor '" + name + "' larger than the file");
    const auto data = c.take(n * 4);
    Eigen::MatrixXf m(rows, cols);
    for (std::size_t i = 0; i < n; ++i) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(data[i * 4 + b])) << (8 * b);
      std::memcpy(m.data() + i, &bits, 4);
    }
    if (!ck.tensors.emplace(name, std::move(m)).second) throw FormatError("duplicate tensor '" + name + "'");
  }
  if (!c.done()) throw FormatError("trailing bytes after checkpoint");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  write_file_atomic(path, encode_checkpoint(ck));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

template <typename Scalar>
void store_parameters(Checkpoint& ck, const std::string& prefix, const nn::ParameterSet<Scalar>& params) {
  for (const auto& [name, p] : params.params()) ck.tensors[prefix + "/" + name] = p.value.template cast<float>();
  for (const auto& [name, b] : params.buffers()) ck.tensors[prefix + ".buffer/" + name] = b.template cast<float>();
}

namespace {

template <typename Scalar>
void assign(const Checkpoint& ck, const std::string& key, nn::Matrix<Scalar>& target) {
  auto it = ck.tensors.find(key);
  if (it == ck.tensors.end()) throw FormatError("checkpoint lacks tensor '" + key + "'");
  if (it->second.rows() != target.rows() || it->second.cols() != target.cols())
    throw ConfigError("tensor '" + key + "' has shape " + std::to_string(it->second.rows()) + "x" +
                      std::to_string(it->second.cols()) + ", model expects " + std::to_string(target.rows()) +
                      "x" + std::to_string(target.cols()));
  target = it->second.template cast<Scalar>();
}

}  // namespace

template <typename Scalar>
void load_parameters(const Checkpoint& ck, const std::string& prefix, nn::ParameterSet<Scalar>& params) {
  for (auto& [name, p] : params.params()) {
    assign(ck, prefix + "/" + name, p.value);
    p.zero_grad();
  }
  for (auto& [name, b] : params.buffers()) assign(ck, prefix + ".buffer/" + name, b);
}

template <typename Scalar>
void store_optimizer(Checkpoint& ck, const std::string& prefix, const Optimizer<Scalar>& opt) {
  ck.header[prefix + ".steps"] = std::to_string(opt.steps());
  for (const auto& [name, s] : opt.slots()) {
    ck.tensors[prefix + ".m/" + name] = s.m.template cast<float>();
    ck.tensors[prefix + ".v/" + name] = s.v.template cast<float>();
  }
}

template <typename Scalar>
void load_optimizer(const Checkpoint& ck, const std::string& prefix, Optimizer<Scalar>& opt) {
  opt.reset();
  opt.set_steps(std::stoll(ck.get(prefix + ".steps")));
  const std::string m_prefix = prefix + ".m/";
  for (auto it = ck.tensors.lower_bound(m_prefix); it != ck.tensors.end() && it->first.rfind(m_prefix, 0) == 0; ++it) {
    const std::string name = it->first.substr(m_prefix.size());
    auto v = ck.tensors.find(prefix + ".v/" + name);
    if (v == ck.tensors.end()) throw FormatError("optimizer state for '" + name + "' is incomplete");
    auto& slot = opt.slots()[name];
    slot.m = it->second.template cast<Scalar>();
    slot.v = v->second.template cast<Scalar>();
  }
}

#define WTV_INSTANTIATE_CHECKPOINT(S)                                                             \
  template void store_parameters(Checkpoint&, const std::string&, const nn::ParameterSet<S>&);   \
  template void load_parameters(const Checkpoint&, const std::string&, nn::ParameterSet<S>&);    \
  template void store_optimizer(Checkpoint&, const std::string&, const Optimizer<S>&);           \
  template void load_optimizer(const Checkpoint&, const std::string&, Optimizer<S>&);

WTV_INSTANTIATE_CHECKPOINT(float)
WTV_INSTANTIATE_CHECKPOINT(double)

}  // namespace wtv
