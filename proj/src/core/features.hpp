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

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "common.hpp"
#include "dataio.hpp"

namespace avc::features {

// High-frequency log-mel spectrogram settings. Setting f_min to 0 gives the
// full-band variant.
struct SpectrogramConfig {
  int window_len = 4096;
  int hop = 1634;
  int n_mel = 48;
  double f_min = 1000.0;
  double f_max = 22050.0;
  double log_floor = 1e-10;
  double sample_rate = dataio::kSampleRate;

  double frame_period() const { return hop / sample_rate; }
  void validate() const;
};

// Context-stacking settings: rows m + j*stride for j in [-q, q].
struct ContextConfig {
  int q = 5;
  int stride = 2;
};

struct FeatureMatrix {
  std::string clip_id;
  Matrix data;  // frames x dim
  double frame_period = 0.0;

  Eigen::Index frames() const { return data.rows(); }
  Eigen::Index dim() const { return data.cols(); }
};

struct FeatureStats {
  Vector mean;
  Vector stddev;
};

std::size_t frame_count(std::size_t n_samples, int hop);

// Centered STFT power. Returns frames x (window_len/2 + 1).
Matrix stft_power(const dataio::AudioClip& clip, const SpectrogramConfig& cfg);

// HTK-mel triangular filters, each scaled to a peak weight of 1.
// Returns n_mel x (window_len/2 + 1).
Matrix mel_filterbank(const SpectrogramConfig& cfg);

// log(filterbank * power + log_floor); frames x n_mel.
Matrix hf_lms(const dataio::AudioClip& clip, const SpectrogramConfig& cfg);
Matrix hf_lms(const dataio::AudioClip& clip, const SpectrogramConfig& cfg, const Matrix& filterbank);

FeatureMatrix stack_context(const Matrix& lms, int q, int stride);

// Full per-clip extraction: hf_lms followed by stack_context.
FeatureMatrix extract(const dataio::AudioClip& clip, const SpectrogramConfig& cfg, const ContextConfig& ctx);

// Z-scores every matrix with `stats`, or with statistics computed over all
// rows of `features` when `stats` is empty.
std::pair<std::vector<FeatureMatrix>, FeatureStats> standardize(std::span<const FeatureMatrix> features,
                                                                const std::optional<FeatureStats>& stats = {});
FeatureMatrix apply_stats(const FeatureMatrix& features, const FeatureStats& stats);

// Feature cache record: u32 id length, id bytes, u64 frames, u64 dim,
// f64 frame_period, then frames*dim row-major f64. Little-endian.
void write_feature_cache(const std::filesystem::path& path, const FeatureMatrix& features);
FeatureMatrix read_feature_cache(const std::filesystem::path& path);

void write_stats(const std::filesystem::path& path, const FeatureStats& stats);
FeatureStats read_stats(const std::filesystem::path& path);

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

}  // namespace avc::features
