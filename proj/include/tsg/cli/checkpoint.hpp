// Copyright 2026 The TSG Authors.
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

// Checkpoint layout (little endian):
//   "TSCK" | u32 version | u32 n + n bytes of config JSON |
//   u32 tensor count | per tensor: u32 n + n bytes of name, tensor record |
//   u32 CRC-32 of every preceding byte
// Tensor records use the TSG1 tensor format. Names are written in sorted order.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>
#include <zlib.h>

#include "tsg/core/error.hpp"
#include "tsg/core/params.hpp"
#include "tsg/core/tensor_io.hpp"

namespace tsg::cli {

inline constexpr std::array<char, 4> kCheckpointMagic = {'T', 'S', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <Real T>
struct Checkpoint {
  nlohmann::json config = nlohmann::json::object();
  std::map<std::string, Tensor<T>> tensors;

  // Copies every parameter of `store` into the table.
  void add_params(const ParamStore<T>& store) {
    for (const auto& [name, e] : store) {
      if (!tensors.emplace(name, e.value).second) {
        throw CheckpointError(detail::concat("checkpoint: duplicate tensor '", name, "'"));
      }
    }
  }

  // Replaces every parameter of `store` whose name starts with `prefix`;
  // each must be present with the same shape.
  void load_params(ParamStore<T>& store, std::string_view prefix) const {
    for (const auto& name : store.names()) {
      if (name.compare(0, prefix.size(), prefix) != 0) continue;
      auto it = tensors.find(name);
      if (it == tensors.end()) throw CheckpointError(detail::concat("checkpoint has no tensor '", name, "'"));
      if (it->second.shape() != store.value(name).shape()) {
        throw CheckpointError(detail::concat("checkpoint tensor '", name, "' is ", to_string(it->second.shape()),
                                             ", model expects ", to_string(store.value(name).shape())));
      }
      store.set(name, it->second);
    }
  }

  bool has_prefix(std::string_view prefix) const {
    auto it = tensors.lower_bound(std::string(prefix));
    return it != tensors.end() && it->first.compare(0, prefix.size(), prefix) == 0;
  }
};

inline std::uint32_t crc32_of(std::string_view bytes) {
  return static_cast<std::uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

template <Real T>
std::string serialize_checkpoint(const Checkpoint<T>& ck) {
  std::ostringstream os(std::ios::binary);
  os.write(kCheckpointMagic.data(), 4);
  le::put_u32(os, kCheckpointVersion);
  const auto cfg = ck.config.dump();
  le::put_u32(os, static_cast<std::uint32_t>(cfg.size()));
  os.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  le::put_u32(os, static_cast<std::uint32_t>(ck.tensors.size()));
  for (const auto& [name, t] : ck.tensors) {
    le::put_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_tensor(os, t);
  }
  std::string bytes = os.str();
  std::ostringstream tail(std::ios::binary);
  le::put_u32(tail, crc32_of(bytes));
  return bytes + tail.str();
}

template <Real T>
Checkpoint<T> parse_checkpoint(const std::string& bytes) {
  using E = CheckpointError;
  if (bytes.size() < 12) throw E("checkpoint: file is truncated");
  std::istringstream crc_in(bytes.substr(bytes.size() - 4), std::ios::binary);
  const std::uint32_t stored = le::get_u32<E>(crc_in, "checksum");
  const std::string_view body(bytes.data(), bytes.size() - 4);
  std::istringstream is(std::string(body), std::ios::binary);
  std::array<char, 4> magic{};
  le::read_exact<E>(is, magic.data(), 4, "checkpoint magic");
  if (magic != kCheckpointMagic) throw E("checkpoint: bad magic (expected TSCK)");
  const std::uint32_t version = le::get_u32<E>(is, "checkpoint version");
  if (version != kCheckpointVersion) {
    throw E(detail::concat("checkpoint: unsupported version ", version, " (expected ", kCheckpointVersion, ")"));
  }
  if (crc32_of(body) != stored) throw E("checkpoint: checksum mismatch (file is corrupt or truncated)");
  Checkpoint<T> ck;
  const std::uint32_t cfg_len = le::get_u32<E>(is, "config length");
  if (cfg_len > body.size()) throw E("checkpoint: config length exceeds file size");
  std::string cfg(cfg_len, '\0');
  le::read_exact<E>(is, cfg.data(), cfg_len, "config");
  try {
    ck.config = nlohmann::json::parse(cfg);
  } catch (const nlohmann::json::parse_error& e) {
    throw E(detail::concat("checkpoint: config is not valid JSON: ", e.what()));
  }
  const std::uint32_t count = le::get_u32<E>(is, "tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t n = le::get_u32<E>(is, "tensor name length");
    if (n == 0 || n > 4096) throw E("checkpoint: bad tensor name length");
    std::string name(n, '\0');
    le::read_exact<E>(is, name.data(), n, "tensor name");
    if (!ck.tensors.emplace(name, read_tensor<T, E>(is)).second) {
      throw E(detail::concat("checkpoint: duplicate tensor '", name, "'"));
    }
  }
  if (is.peek() != std::char_traits<char>::eof()) throw E("checkpoint: trailing bytes before checksum");
  return ck;
}

template <Real T>
void write_checkpoint(const std::filesystem::path& path, const Checkpoint<T>& ck) {
  const auto bytes = serialize_checkpoint(ck);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw CheckpointError(detail::concat("cannot open ", path.string(), " for writing"));
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw CheckpointError(detail::concat("failed writing ", path.string()));
}

template <Real T>
Checkpoint<T> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError(detail::concat("cannot open checkpoint ", path.string()));
  std::ostringstream buf;
  buf << is.rdbuf();
  try {
    return parse_checkpoint<T>(buf.str());
  } catch (const CheckpointError& e) {
    throw CheckpointError(detail::concat(path.string(), ": ", e.what()));
  }
}

}  // namespace tsg::cli
