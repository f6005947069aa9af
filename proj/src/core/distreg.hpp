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
#include <span>
#include <vector>

#include "dataio.hpp"
#include "features.hpp"
#include "nn.hpp"

// Coarse-to-fine distance regression. Stage 1 maps a stacked HF-LMS vector
// to a distance; Stage 2 refines it from 2k+1 consecutive Stage-1 outputs.
namespace avc::distreg {

struct RegressionConfig {
  features::SpectrogramConfig spectrogram;
  features::ContextConfig context;
  int k = 15;
  double t_d = 0.75;

  int feature_dim() const { return (2 * context.q + 1) * spectrogram.n_mel; }
  int window_dim() const { return 2 * k + 1; }
};

nn::NetworkSpec default_stage1_spec();  // 528-64-64-1, L2 1e-4
nn::NetworkSpec default_stage2_spec();  // 31-31-15-1, L2 5e-6

struct RegressionPipeline {
  RegressionConfig config;
  features::FeatureStats feature_stats;
  nn::TrainedModel stage1;
  nn::TrainedModel stage2;

  void validate() const;
};

// Frames of every clip pooled into one design matrix / target column.
struct Pooled {
  Matrix x;
  Matrix y;
};
Pooled pool(std::span<const features::FeatureMatrix> features, std::span<const dataio::DistanceSeries> targets);

nn::TrainedModel train_stage1(std::span<const features::FeatureMatrix> features,
                              std::span<const dataio::DistanceSeries> targets, const nn::NetworkSpec& spec);

// Per-frame Stage-1 output clamped to [0, t_d].
dataio::DistanceSeries predict_stage1(const nn::TrainedModel& stage1, const features::FeatureMatrix& features,
                                      double t_d);

// Row m holds coarse[m-k .. m+k] with edge replication.
Matrix stage2_windows(const dataio::DistanceSeries& coarse, int k);

nn::TrainedModel train_stage2(std::span<const dataio::DistanceSeries> coarse,
                              std::span<const dataio::DistanceSeries> targets, int k, const nn::NetworkSpec& spec);

dataio::DistanceSeries predict_stage2(const nn::TrainedModel& stage2, const dataio::DistanceSeries& coarse, int k);

struct Prediction {
  dataio::DistanceSeries coarse;  // Stage 1
  dataio::DistanceSeries fine;    // Stage 2
};

// features -> standardize -> stage 1 -> windows -> stage 2, both clamped.
Prediction predict_both(const RegressionPipeline& pipeline, const dataio::AudioClip& clip);
Prediction predict_both(const RegressionPipeline& pipeline, const features::FeatureMatrix& raw_features);
dataio::DistanceSeries predict_distance(const RegressionPipeline& pipeline, const dataio::AudioClip& clip);

struct TrainingData {
  std::vector<features::FeatureMatrix> features;  // raw (unstandardized)
  std::vector<dataio::DistanceSeries> targets;
};

// Extracts features and reference distances for labelled clips.
TrainingData prepare(std::span<const dataio::LabeledClip> clips, const RegressionConfig& config, int jobs = 1);

struct TrainOptions {
  nn::NetworkSpec stage1 = default_stage1_spec();
  nn::NetworkSpec stage2 = default_stage2_spec();
};

// Standardizes with training statistics, trains Stage 1 on all training
// frames, then Stage 2 on windows of Stage-1 predictions of the same clips.
RegressionPipeline train_pipeline(const RegressionConfig& config, const TrainingData& train, const TrainOptions& opts);

double mse(const dataio::DistanceSeries& predicted, const dataio::DistanceSeries& reference);
// Frame-pooled MSE over a set of clips.
double pooled_mse(std::span<const dataio::DistanceSeries> predicted, std::span<const dataio::DistanceSeries> reference);

// Bundle directory: stage1.ckpt, stage2.ckpt, stats.bin, pipeline.json.
void save_pipeline(const std::filesystem::path& dir, const RegressionPipeline& pipeline);
RegressionPipeline load_pipeline(const std::filesystem::path& dir);

nlohmann::json to_json(const RegressionConfig& config);
RegressionConfig regression_config_from_json(const nlohmann::json& j);

}  // namespace avc::distreg
