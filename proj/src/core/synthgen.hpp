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
#include <optional>
#include <utility>

#include <json.hpp>

#include "dataio.hpp"

// Synthetic road scenes: each vehicle is a burst of band-limited noise whose
// amplitude follows 1 / (1 + (t - t_k)^2 / s^2), on top of broadband and
// low-frequency background noise.
namespace avc::synthgen {

struct BandProfile {
  double low_hz = 1500.0;        // high-pass corner of the vehicle noise
  double high_hz = 9000.0;       // low-pass corner
  double amplitude_min = 0.20;   // RMS at the pass-by instant
  double amplitude_max = 0.30;
  double spread_min = 0.35;      // s, seconds
  double spread_max = 0.50;
};

struct SceneSpec {
  double duration = 20.0;
  // Fixed count when set; otherwise Poisson(vehicle_rate) capped at max_vehicles.
  std::optional<int> n_vehicles;
  double vehicle_rate = 1.5;
  int max_vehicles = 4;
  double min_gap = 2.0;
  double edge_margin = 1.0;      // keep instants this far from both clip ends
  // Probability that an event is a pair of vehicles pair_gap apart.
  double pair_probability = 0.0;
  double pair_gap = 0.8;
  double noise_level = 0.01;     // RMS of the white background
  double rumble_level = 0.05;    // RMS of < 300 Hz background
  BandProfile vehicle;
  double sample_rate = dataio::kSampleRate;
  // Instants are snapped to multiples of this (feature frame period).
  double frame_period = 1634.0 / dataio::kSampleRate;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static SceneSpec from_json(const nlohmann::json& j, SceneSpec base);
};

SceneSpec easy_preset();
SceneSpec close_pairs_preset();

struct Scene {
  dataio::AudioClip clip;
  dataio::PassByAnnotation annotation;
};

Scene generate_scene(const SceneSpec& spec, const std::string& clip_id = "scene");

struct CorpusSummary {
  std::size_t clips = 0;
  std::size_t vehicles = 0;
};

// Writes clip_NNNN.wav, annotations.csv and manifest.csv (`clip_id,n_vehicles`).
// Clip i uses seed splitmix64(spec.seed + i).
CorpusSummary generate_corpus(const SceneSpec& spec, std::size_t n_clips, const std::filesystem::path& out_dir,
                              int jobs = 1);

std::string clip_name(std::size_t index);

}  // namespace avc::synthgen
