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
#include <span>
#include <string>
#include <vector>

#include "common.hpp"

namespace avc::dataio {

inline constexpr double kSampleRate = 44100.0;

struct AudioClip {
  std::string id;
  std::vector<double> samples;  // mono, [-1, 1]
  double sample_rate = kSampleRate;

  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
};

// Pass-by instants of one clip, seconds, strictly increasing.
struct PassByAnnotation {
  std::string clip_id;
  std::vector<double> instants;
  double duration = 0.0;

  std::size_t count() const { return instants.size(); }
};

// Clipped vehicle-to-microphone distance sampled once per feature frame.
struct DistanceSeries {
  std::string clip_id;
  std::vector<double> values;
  double frame_period = 0.0;
  double t_d = 0.0;

  std::size_t size() const { return values.size(); }
  double time(std::size_t frame) const { return static_cast<double>(frame) * frame_period; }
};

struct DatasetSplit {
  std::vector<std::string> train_ids;
  std::vector<std::string> val_ids;
  std::vector<std::string> test_ids;
  std::uint64_t seed = 0;
};

struct LabeledClip {
  AudioClip clip;
  PassByAnnotation annotation;
};

// Reads a RIFF/WAVE file holding 8/16/24/32-bit integer PCM or 32/64-bit
// float samples. Channels are averaged to mono; integer samples are divided
// by 2^(bits-1). The clip id is the file stem.
AudioClip load_clip(const std::filesystem::path& path);

// Writes a mono 16-bit PCM file. Samples are scaled by 32768, rounded and
// saturated to the int16 range.
void write_clip(const std::filesystem::path& path, const AudioClip& clip);

// Parses a `clip_id,instant_s` CSV. Clips listed in `registered` but absent
// from the file come back with no instants. Durations are left at zero.
std::vector<PassByAnnotation> load_annotations(const std::filesystem::path& path,
                                               std::span<const std::string> registered = {});

void write_annotations(const std::filesystem::path& path, std::span<const PassByAnnotation> annotations);

DistanceSeries reference_distance(const PassByAnnotation& ann, std::size_t n_frames, double frame_period,
                                  double t_d);

// Deterministic shuffle-and-cut. `ratio` is the fraction placed in train_ids,
// the rest go to val_ids.
DatasetSplit split_dataset(std::span<const std::string> ids, double ratio, std::uint64_t seed);

// Loads every *.wav in `dir` (sorted by name) together with
// `dir/annotations.csv`. Annotation durations are taken from the audio.
std::vector<LabeledClip> load_dataset(const std::filesystem::path& dir);

std::vector<std::filesystem::path> list_wav_files(const std::filesystem::path& dir);

}  // namespace avc::dataio
