// Copyright 2026 The avc Authors
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
#include <vector>

#include <json.hpp>

namespace avc::checkpoint {

// Checkpoint container shared by the dense networks and the conv counter:
//
//   "AVCNN1"                          6-byte magic, last byte is the version
//   u64 n, n bytes                    spec as canonical (sorted-key) JSON
//   u32 block count
//   per block: u32 name length, name, u32 rank, rank x u64 dims,
//              prod(dims) x f64 row-major
//
// All integers and floats are little-endian.
struct Block {
  std::string name;
  std::vector<std::uint64_t> shape;
  std::vector<double> values;
};

struct Container {
  nlohmann::json spec;
  std::vector<Block> blocks;

  const Block& block(const std::string& name) const;
};

inline constexpr char kMagic[] = "AVCNN1";

void write(const std::filesystem::path& path, const Container& c);
Container read(const std::filesystem::path& path);

}  // namespace avc::checkpoint
