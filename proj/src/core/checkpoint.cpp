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

#include "checkpoint.hpp"

#include <functional>
#include <numeric>

#include "binary_io.hpp"
#include "common.hpp"

namespace avc::checkpoint {

const Block& Container::block(const std::string& name) const {
  for (const auto& b : blocks)
    if (b.name == name) return b;
  throw DataError("checkpoint has no parameter block '" + name + "'");
}

void write(const std::filesystem::path& path, const Container& c) {
  binio::Writer w;
  w.bytes(std::string_view(kMagic, 6));
  const std::string spec = c.spec.dump();
  w.u64(spec.size());
  w.bytes(spec);
  w.u32(static_cast<std::uint32_t>(c.blocks.size()));
  for (const auto& b : c.blocks) {
    const auto count = std::accumulate(b.shape.begin(), b.shape.end(), std::uint64_t{1}, std::multiplies<>());
    if (count != b.values.size()) throw UsageError("checkpoint block '" + b.name + "' has inconsistent shape");
    w.str(b.name);
    w.u32(static_cast<std::uint32_t>(b.shape.size()));
    for (auto d : b.shape) w.u64(d);
    for (double v : b.values) w.f64(v);
  }
  w.save(path);
}

Container read(const std::filesystem::path& path) {
  auto r = binio::Reader::open(path);
  if (r.remaining() < 6) throw DataError(path.string() + ": truncated file");
  const std::string magic = r.bytes(6);
  if (magic.compare(0, 5, "AVCNN") != 0) throw DataError(path.string() + ": not a checkpoint (bad magic)");
  if (magic != std::string_view(kMagic, 6))
    throw DataError(path.string() + ": unsupported checkpoint version '" + magic.substr(5) + "'");

  Container c;
  const auto spec_len = r.u64();
  if (spec_len > r.remaining()) throw DataError(path.string() + ": truncated file");
  try {
    c.spec = nlohmann::json::parse(r.bytes(spec_len));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": corrupt spec block: " + e.what());
  }
  const auto n_blocks = r.u32();
  for (std::uint32_t i = 0; i < n_blocks; ++i) {
    Block b;
    b.name = r.str();
    const auto rank = r.u32();
    std::uint64_t count = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      b.shape.push_back(r.u64());
      count *= b.shape.back();
    }
    if (count > r.remaining() / 8) throw DataError(path.string() + ": truncated file");
    b.values.resize(count);
    for (auto& v : b.values) v = r.f64();
    c.blocks.push_back(std::move(b));
  }
  if (!r.at_end()) throw DataError(path.string() + ": trailing bytes after last block");
  return c;
}

}  // namespace avc::checkpoint
