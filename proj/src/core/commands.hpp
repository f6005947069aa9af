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
#include <string>
#include <vector>

#include "config.hpp"

// Subcommand implementations shared by the C API.
namespace avc::commands {

// A trained model directory: the regression pipeline, the detector used for
// counting and, optionally, a direct counter.
struct ModelBundle {
  distreg::RegressionPipeline pipeline;
  peakdet::DetectorSpec detector;
  std::optional<deepcount::ConvCounter> counter;
  bool counter_uses_stage2 = true;

  double t_d() const { return pipeline.config.t_d; }
};

void save_bundle(const std::filesystem::path& dir, const ModelBundle& bundle);
ModelBundle load_bundle(const std::filesystem::path& dir);

synthgen::CorpusSummary synth(const config::ToolConfig& cfg, const std::filesystem::path& out_dir, int jobs);

// One <clip_id>.feat cache per WAV file; returns the number written.
std::size_t extract(const config::ToolConfig& cfg, const std::filesystem::path& audio_dir,
                    const std::filesystem::path& out_dir, int jobs);

ModelBundle train(const config::ToolConfig& cfg, const std::vector<dataio::LabeledClip>& clips, int jobs);

struct ClipPrediction {
  std::string clip_id;
  distreg::Prediction series;
};
std::vector<ClipPrediction> predict_dir(const ModelBundle& model, const std::filesystem::path& audio_dir, int jobs);

// `clip_id,frame,t_s,d_hat_s`, Stage-2 output.
void write_predictions_csv(const std::filesystem::path& path, const std::vector<ClipPrediction>& predictions);

enum class CountMethod { Peaks, Deep };
CountMethod count_method_from_string(const std::string& name);

struct CountResult {
  std::vector<std::pair<std::string, long>> per_clip;
  long total = 0;
};

// t_det defaults to t_d when empty.
CountResult count(const ModelBundle& model, const std::vector<ClipPrediction>& predictions, CountMethod method,
                  std::optional<double> t_det);
std::string format_counts(const CountResult& counts);

struct EvalSummary {
  metrics::MetricsReport peaks;
  std::optional<metrics::MetricsReport> deep;
  double stage1_mse = 0.0;
  double stage2_mse = 0.0;
};

// Writes curve.csv, summary.csv, detections.csv, mse.csv and, with a
// counter, deep_curve.csv and deep_summary.csv.
EvalSummary evaluate(const ModelBundle& model, const std::filesystem::path& data_dir,
                     const std::filesystem::path& report_dir, int jobs);

// Without a model: trains on the train split of `data_dir` and tunes on the
// validation split. With a model: tunes on every clip in `data_dir`.
experiments::GridResult gridsearch(const config::ToolConfig& cfg, const std::filesystem::path& data_dir,
                                   const std::optional<std::filesystem::path>& model_dir, int jobs);
std::string format_grid(const experiments::GridResult& grid);

experiments::MultiRunResult experiment(const config::ToolConfig& cfg, const std::filesystem::path& out_dir, int jobs);
std::string format_experiment(const experiments::MultiRunResult& result);

}  // namespace avc::commands
