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

#include "dataio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <sstream>

namespace avc::dataio {

namespace {

constexpr std::uint16_t kFormatPcm = 0x0001;
constexpr std::uint16_t kFormatFloat = 0x0003;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint32_t read_u32(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
         (std::uint32_t(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>(v >> 8));
}

struct WavFormat {
  std::uint16_t format = 0;
  std::uint16_t channels = 0;
  std::uint32_t sample_rate = 0;
  std::uint16_t block_align = 0;
  std::uint16_t bits = 0;
};

double decode_sample(const unsigned char* p, const WavFormat& fmt) {
  if (fmt.format == kFormatFloat) {
    if (fmt.bits == 32) {
      const std::uint32_t raw = read_u32(p);
      float f;
      std::memcpy(&f, &raw, sizeof f);
      return f;
    }
    std::uint64_t raw = 0;
    for (int i = 0; i < 8; ++i) raw |= std::uint64_t(p[i]) << (8 * i);
    double d;
    std::memcpy(&d, &raw, sizeof d);
    return d;
  }
  switch (fmt.bits) {
    case 8:
      return (static_cast<int>(p[0]) - 128) / 128.0;
    case 16:
      return static_cast<std::int16_t>(read_u16(p)) / 32768.0;
    case 24: {
      std::int32_t v = p[0] | (p[1] << 8) | (p[2] << 16);
      if (v & 0x800000) v -= 0x1000000;
      return v / 8388608.0;
    }
    default:
      return static_cast<std::int32_t>(read_u32(p)) / 2147483648.0;
  }
}

std::string trim(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.pop_back();
  std::size_t b = 0;
  while (b < s.size() && (s[b] == ' ' || s[b] == '\t')) ++b;
  return s.substr(b);
}

}  // namespace

AudioClip load_clip(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open audio file " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* data = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t size = bytes.size();

  if (size < 12 || std::memcmp(data, "RIFF", 4) != 0 || std::memcmp(data + 8, "WAVE", 4) != 0)
    throw DataError(path.string() + ": not a RIFF/WAVE file");

  WavFormat fmt;
  bool have_fmt = false;
  const unsigned char* pcm = nullptr;
  std::size_t pcm_bytes = 0;

  std::size_t pos = 12;
  while (pos + 8 <= size) {
    const unsigned char* chunk = data + pos;
    const std::uint32_t chunk_size = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    const std::size_t available = std::min<std::size_t>(chunk_size, size - body);
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (available < 16) throw DataError(path.string() + ": truncated fmt chunk");
      fmt.format = read_u16(data + body);
      fmt.channels = read_u16(data + body + 2);
      fmt.sample_rate = read_u32(data + body + 4);
      fmt.block_align = read_u16(data + body + 12);
      fmt.bits = read_u16(data + body + 14);
      if (fmt.format == kFormatExtensible) {
        if (available < 26) throw DataError(path.string() + ": truncated extensible fmt chunk");
        fmt.format = read_u16(data + body + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      pcm = data + body;
      pcm_bytes = available;
    }
    pos = body + chunk_size + (chunk_size & 1u);
  }

  if (!have_fmt) throw DataError(path.string() + ": missing fmt chunk");
  if (pcm == nullptr) throw DataError(path.string() + ": missing data chunk");
  const bool int_ok = fmt.format == kFormatPcm &&
                      (fmt.bits == 8 || fmt.bits == 16 || fmt.bits == 24 || fmt.bits == 32);
  const bool float_ok = fmt.format == kFormatFloat && (fmt.bits == 32 || fmt.bits == 64);
  if (!int_ok && !float_ok)
    throw DataError(path.string() + ": unsupported encoding (format " + std::to_string(fmt.format) + ", " +
                    std::to_string(fmt.bits) + " bits)");
  if (fmt.channels == 0 || fmt.sample_rate == 0) throw DataError(path.string() + ": invalid fmt chunk");
  const std::size_t bytes_per_sample = fmt.bits / 8;
  const std::size_t frame_bytes = std::max<std::size_t>(fmt.block_align, bytes_per_sample * fmt.channels);
  const std::size_t n_frames = pcm_bytes / frame_bytes;
  if (n_frames == 0) throw DataError(path.string() + ": zero-length audio");

  AudioClip clip;
  clip.id = path.stem().string();
  clip.sample_rate = fmt.sample_rate;
  clip.samples.resize(n_frames);
  for (std::size_t i = 0; i < n_frames; ++i) {
    const unsigned char* frame = pcm + i * frame_bytes;
    double acc = 0.0;
    for (std::size_t c = 0; c < fmt.channels; ++c) acc += decode_sample(frame + c * bytes_per_sample, fmt);
    const double v = acc / fmt.channels;
    if (!std::isfinite(v)) throw DataError(path.string() + ": non-finite sample");
    clip.samples[i] = v;
  }
  return clip;
}

void write_clip(const std::filesystem::path& path, const AudioClip& clip) {
  if (clip.samples.empty()) throw DataError("refusing to write empty clip " + clip.id);
  const auto n = static_cast<std::uint32_t>(clip.samples.size());
  const auto rate = static_cast<std::uint32_t>(std::lround(clip.sample_rate));
  std::string out;
  out.reserve(44 + 2 * static_cast<std::size_t>(n));
  out += "RIFF";
  put_u32(out, 36 + 2 * n);
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, kFormatPcm);
  put_u16(out, 1);
  put_u32(out, rate);
  put_u32(out, rate * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out += "data";
  put_u32(out, 2 * n);
  for (double s : clip.samples) {
    const double scaled = std::clamp(std::round(s * 32768.0), -32768.0, 32767.0);
    put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(scaled)));
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw DataError("write failed for " + path.string());
}

std::vector<PassByAnnotation> load_annotations(const std::filesystem::path& path,
                                               std::span<const std::string> registered) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open annotation file " + path.string());
  std::string line;
  if (!std::getline(in, line) || trim(line) != "clip_id,instant_s")
    throw DataError(path.string() + ": expected header 'clip_id,instant_s'");

  std::map<std::string, std::vector<double>> rows;
  for (const auto& id : registered) rows[id];
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    const auto where = path.string() + ":" + std::to_string(line_no);
    const auto comma = line.find(',');
    if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos)
      throw DataError(where + ": malformed row");
    const std::string id = trim(line.substr(0, comma));
    const std::string value = trim(line.substr(comma + 1));
    double t = 0.0;
    const auto [end, ec] = std::from_chars(value.data(), value.data() + value.size(), t);
    if (id.empty() || ec != std::errc{} || end != value.data() + value.size() || !std::isfinite(t))
      throw DataError(where + ": malformed row");
    if (t < 0.0) throw DataError(where + ": negative instant");
    rows[id].push_back(t);
  }

  std::vector<PassByAnnotation> out;
  out.reserve(rows.size());
  for (auto& [id, instants] : rows) {
    std::sort(instants.begin(), instants.end());
    if (std::adjacent_find(instants.begin(), instants.end()) != instants.end())
      throw DataError(path.string() + ": duplicate instant for clip " + id);
    out.push_back({id, std::move(instants), 0.0});
  }
  return out;
}

void write_annotations(const std::filesystem::path& path, std::span<const PassByAnnotation> annotations) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write " + path.string());
  f << "clip_id,instant_s\n";
  char buf[64];
  for (const auto& ann : annotations) {
    for (double t : ann.instants) {
      std::snprintf(buf, sizeof buf, "%.3f", t);
      f << ann.clip_id << ',' << buf << '\n';
    }
  }
  if (!f) throw DataError("write failed for " + path.string());
}

DistanceSeries reference_distance(const PassByAnnotation& ann, std::size_t n_frames, double frame_period,
                                  double t_d) {
  if (n_frames == 0) throw UsageError("reference_distance: n_frames must be >= 1");
  if (!(t_d > 0.0)) throw UsageError("reference_distance: t_d must be positive");
  if (!(frame_period > 0.0)) throw UsageError("reference_distance: frame_period must be positive");

  DistanceSeries out{ann.clip_id, std::vector<double>(n_frames, t_d), frame_period, t_d};
  for (std::size_t m = 0; m < n_frames; ++m) {
    const double t = out.time(m);
    double& d = out.values[m];
    for (double instant : ann.instants) d = std::min(d, std::min(std::abs(t - instant), t_d));
  }
  return out;
}

DatasetSplit split_dataset(std::span<const std::string> ids, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw UsageError("split_dataset: ratio must lie in (0, 1)");
  if (ids.size() < 2) throw DataError("split_dataset: need at least 2 ids");
  std::vector<std::string> order(ids.begin(), ids.end());
  Rng rng(seed);
  shuffle(order, rng);
  auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(order.size())));
  n_train = std::clamp<std::size_t>(n_train, 1, order.size() - 1);

  DatasetSplit split;
  split.seed = seed;
  split.train_ids.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  split.val_ids.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  return split;
}

std::vector<std::filesystem::path> list_wav_files(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw DataError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    auto ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".wav") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

std::vector<LabeledClip> load_dataset(const std::filesystem::path& dir) {
  const auto files = list_wav_files(dir);
  if (files.empty()) throw DataError("no .wav files in " + dir.string());
  std::vector<std::string> ids;
  ids.reserve(files.size());
  for (const auto& f : files) ids.push_back(f.stem().string());

  auto annotations = load_annotations(dir / "annotations.csv", ids);
  std::map<std::string, PassByAnnotation> by_id;
  for (auto& a : annotations) by_id.emplace(a.clip_id, std::move(a));
  if (by_id.size() != ids.size()) {
    for (const auto& [id, a] : by_id)
      if (!std::binary_search(ids.begin(), ids.end(), id))
        throw DataError(dir.string() + "/annotations.csv: clip '" + id + "' has no audio file");
  }

  std::vector<LabeledClip> out;
  out.reserve(files.size());
  for (const auto& f : files) {
    LabeledClip lc;
    lc.clip = load_clip(f);
    lc.annotation = std::move(by_id.at(lc.clip.id));
    lc.annotation.duration = lc.clip.duration();
    for (double t : lc.annotation.instants)
      if (t > lc.annotation.duration)
        throw DataError("annotation instant " + std::to_string(t) + " beyond end of clip " + lc.clip.id);
    out.push_back(std::move(lc));
  }
  return out;
}

}  // namespace avc::dataio
