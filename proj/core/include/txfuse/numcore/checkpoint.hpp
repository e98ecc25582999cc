// Copyright 2026 The txfuse Authors.
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

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "txfuse/numcore/params.hpp"

// Checkpoint layout, all integers little-endian:
//   magic "TXFCKPT\0" (8 bytes) | u32 version | u32 record count
//   per record: u32 name length | name bytes | u32 rank | u64 dims[rank]
//               | f64 payload (row-major)
namespace txfuse::numcore {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

// Writes to a temporary file next to `path` and renames it into place.
void save_checkpoint(const std::filesystem::path& path, const ParamList& params);
NamedTensors read_checkpoint(const std::filesystem::path& path);
// Copies stored values into `params`, matching by name and shape.
void load_checkpoint(const std::filesystem::path& path, const ParamList& params);

std::string encode_checkpoint(const ParamList& params);
NamedTensors decode_checkpoint(const std::string& bytes);

std::uint64_t file_checksum(const std::filesystem::path& path);

}  // namespace txfuse::numcore
