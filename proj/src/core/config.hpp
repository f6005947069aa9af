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
#include <string>

#include <json.hpp>

#include "experiments.hpp"
#include "synthgen.hpp"

// The tool's JSON configuration. Every section is optional; unknown keys
// are rejected. The environment variable AVC_SEED overrides "seed".
namespace avc::config {

struct ExperimentSection {
  std::filesystem::path train_dir;
  std::filesystem::path test_dir;  // empty: split train_dir
  std::filesystem::path output_dir = "experiment";
  int runs = 40;
  std::vector<experiments::Variant> variants = {{experiments::VariantKind::Full}};
  bool tune = false;
  bool identical_seeds = false;
  double confidence = 0.95;
};

struct ToolConfig {
  std::uint64_t seed = 0;
  distreg::RegressionConfig regression;
  distreg::TrainOptions train;
  peakdet::DetectorSpec detector = experiments::reference_detector({experiments::VariantKind::Full});
  experiments::GridSpec grid;
  experiments::CounterOptions counter;
  synthgen::SceneSpec scene;
  std::size_t n_clips = 100;
  double train_ratio = 0.8;
  double val_ratio = 0.2;
  ExperimentSection experiment;

  nlohmann::json to_json() const;
  static ToolConfig from_json(const nlohmann::json& j);

  experiments::ExperimentConfig experiment_config(int jobs) const;
};

nlohmann::json to_json(const peakdet::DetectorSpec& d);
peakdet::DetectorSpec detector_from_json(const nlohmann::json& j, peakdet::DetectorSpec base);

// Reads a config file (or defaults when `path` is empty), applies AVC_SEED
// and makes relative experiment paths relative to the file's directory.
ToolConfig load(const std::filesystem::path& path);

// Parses AVC_SEED when set; throws UsageError on a malformed value.
std::optional<std::uint64_t> seed_from_env();

}  // namespace avc::config
