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

#include "distreg.hpp"

#include <algorithm>

#include "json_util.hpp"
#include "parallel.hpp"

namespace avc::distreg {

namespace {

dataio::DistanceSeries clamped_series(const Matrix& raw, const std::string& id, double frame_period, double t_d) {
  dataio::DistanceSeries s{id, std::vector<double>(static_cast<std::size_t>(raw.rows())), frame_period, t_d};
  for (Eigen::Index i = 0; i < raw.rows(); ++i) s.values[static_cast<std::size_t>(i)] = std::clamp(raw(i, 0), 0.0, t_d);
  return s;
}

void check_targets(const dataio::DistanceSeries& s) {
  for (double v : s.values)
    if (!(v >= 0.0 && v <= s.t_d))
      throw UsageError("target distance " + std::to_string(v) + " outside [0, t_d] for clip " + s.clip_id);
}

}  // namespace

nn::NetworkSpec default_stage1_spec() {
  nn::NetworkSpec s;
  s.layer_sizes = {528, 64, 64, 1};
  s.l2_factor = 1e-4;
  return s;
}

nn::NetworkSpec default_stage2_spec() {
  nn::NetworkSpec s;
  s.layer_sizes = {31, 31, 15, 1};
  s.l2_factor = 5e-6;
  return s;
}

void RegressionPipeline::validate() const {
  if (stage1.dense.empty() || stage2.dense.empty()) throw UsageError("pipeline: untrained stage");
  if (stage1.input_size() != config.feature_dim())
    throw DataError("pipeline: stage 1 expects " + std::to_string(stage1.input_size()) + " inputs but features have " +
                    std::to_string(config.feature_dim()));
  if (stage2.input_size() != config.window_dim())
    throw DataError("pipeline: stage 2 expects " + std::to_string(stage2.input_size()) + " inputs but 2k+1 = " +
                    std::to_string(config.window_dim()));
  if (feature_stats.mean.size() != config.feature_dim())
    throw DataError("pipeline: feature statistics dimension mismatch");
}

Pooled pool(std::span<const features::FeatureMatrix> features, std::span<const dataio::DistanceSeries> targets) {
  if (features.size() != targets.size()) throw UsageError("pool: feature and target clip counts differ");
  if (features.empty()) throw DataError("pool: no training clips");
  Eigen::Index rows = 0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (static_cast<std::size_t>(features[i].frames()) != targets[i].size())
      throw UsageError("misaligned lengths for clip " + features[i].clip_id + ": " +
                       std::to_string(features[i].frames()) + " feature frames vs " +
                       std::to_string(targets[i].size()) + " targets");
    check_targets(targets[i]);
    rows += features[i].frames();
  }
  Pooled p{Matrix(rows, features.front().dim()), Matrix(rows, 1)};
  Eigen::Index at = 0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    const Eigen::Index n = features[i].frames();
    if (features[i].dim() != p.x.cols()) throw UsageError("pool: inconsistent feature dimensions");
    p.x.middleRows(at, n) = features[i].data;
    p.y.middleRows(at, n) = Eigen::Map<const Vector>(targets[i].values.data(), n);
    at += n;
  }
  return p;
}

nn::TrainedModel train_stage1(std::span<const features::FeatureMatrix> features,
                              std::span<const dataio::DistanceSeries> targets, const nn::NetworkSpec& spec) {
  const Pooled p = pool(features, targets);
  return nn::train(spec, p.x, p.y);
}

dataio::DistanceSeries predict_stage1(const nn::TrainedModel& stage1, const features::FeatureMatrix& features,
                                      double t_d) {
  return clamped_series(nn::predict(stage1, features.data), features.clip_id, features.frame_period, t_d);
}

Matrix stage2_windows(const dataio::DistanceSeries& coarse, int k) {
  if (coarse.values.empty()) throw DataError("stage2_windows: empty series");
  if (k < 0) throw UsageError("stage2_windows: k must be >= 0");
  const auto n = static_cast<Eigen::Index>(coarse.size());
  Matrix w(n, 2 * k + 1);
  for (Eigen::Index m = 0; m < n; ++m)
    for (int j = -k; j <= k; ++j)
      w(m, j + k) = coarse.values[static_cast<std::size_t>(std::clamp<Eigen::Index>(m + j, 0, n - 1))];
  return w;
}

nn::TrainedModel train_stage2(std::span<const dataio::DistanceSeries> coarse,
                              std::span<const dataio::DistanceSeries> targets, int k, const nn::NetworkSpec& spec) {
  if (coarse.size() != targets.size()) throw UsageError("train_stage2: clip counts differ");
  if (coarse.empty()) throw DataError("train_stage2: no training clips");
  std::vector<features::FeatureMatrix> windows;
  windows.reserve(coarse.size());
  for (const auto& c : coarse) windows.push_back({c.clip_id, stage2_windows(c, k), c.frame_period});
  const Pooled p = pool(windows, targets);
  return nn::train(spec, p.x, p.y);
}

dataio::DistanceSeries predict_stage2(const nn::TrainedModel& stage2, const dataio::DistanceSeries& coarse, int k) {
  return clamped_series(nn::predict(stage2, stage2_windows(coarse, k)), coarse.clip_id, coarse.frame_period,
                        coarse.t_d);
}

Prediction predict_both(const RegressionPipeline& pipeline, const features::FeatureMatrix& raw_features) {
  const auto standardized = features::apply_stats(raw_features, pipeline.feature_stats);
  Prediction p;
  p.coarse = predict_stage1(pipeline.stage1, standardized, pipeline.config.t_d);
  p.fine = predict_stage2(pipeline.stage2, p.coarse, pipeline.config.k);
  return p;
}

Prediction predict_both(const RegressionPipeline& pipeline, const dataio::AudioClip& clip) {
  return predict_both(pipeline, features::extract(clip, pipeline.config.spectrogram, pipeline.config.context));
}

dataio::DistanceSeries predict_distance(const RegressionPipeline& pipeline, const dataio::AudioClip& clip) {
  return predict_both(pipeline, clip).fine;
}

TrainingData prepare(std::span<const dataio::LabeledClip> clips, const RegressionConfig& config, int jobs) {
  TrainingData d;
  d.features.resize(clips.size());
  d.targets.resize(clips.size());
  const Matrix fb = features::mel_filterbank(config.spectrogram);
  parallel_for(clips.size(), jobs, [&](std::size_t i) {
    const auto& lc = clips[i];
    auto fm = features::stack_context(features::hf_lms(lc.clip, config.spectrogram, fb), config.context.q,
                                      config.context.stride);
    fm.clip_id = lc.clip.id;
    fm.frame_period = config.spectrogram.frame_period();
    d.targets[i] = dataio::reference_distance(lc.annotation, static_cast<std::size_t>(fm.frames()), fm.frame_period,
                                              config.t_d);
    d.features[i] = std::move(fm);
  });
  return d;
}

RegressionPipeline train_pipeline(const RegressionConfig& config, const TrainingData& train, const TrainOptions& opts) {
  opts.stage1.validate();
  opts.stage2.validate();
  if (opts.stage1.input_size() != config.feature_dim())
    throw UsageError("stage 1 input size " + std::to_string(opts.stage1.input_size()) +
                     " does not match feature dimension " + std::to_string(config.feature_dim()));
  if (opts.stage2.input_size() != config.window_dim())
    throw UsageError("stage 2 input size " + std::to_string(opts.stage2.input_size()) + " does not match 2k+1 = " +
                     std::to_string(config.window_dim()));
  RegressionPipeline p;
  p.config = config;
  auto [standardized, stats] = features::standardize(train.features);
  p.feature_stats = std::move(stats);
  p.stage1 = train_stage1(standardized, train.targets, opts.stage1);

  std::vector<dataio::DistanceSeries> coarse;
  coarse.reserve(standardized.size());
  for (const auto& f : standardized) coarse.push_back(predict_stage1(p.stage1, f, config.t_d));
  p.stage2 = train_stage2(coarse, train.targets, config.k, opts.stage2);
  return p;
}

double mse(const dataio::DistanceSeries& predicted, const dataio::DistanceSeries& reference) {
  return pooled_mse(std::span(&predicted, 1), std::span(&reference, 1));
}

double pooled_mse(std::span<const dataio::DistanceSeries> predicted, std::span<const dataio::DistanceSeries> reference) {
  if (predicted.size() != reference.size()) throw UsageError("mse: clip counts differ");
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (predicted[i].size() != reference[i].size()) throw UsageError("mse: series lengths differ");
    for (std::size_t m = 0; m < predicted[i].size(); ++m) {
      const double d = predicted[i].values[m] - reference[i].values[m];
      sum += d * d;
    }
    n += predicted[i].size();
  }
  if (n == 0) throw DataError("mse: no frames");
  return sum / static_cast<double>(n);
}

nlohmann::json to_json(const RegressionConfig& c) {
  const auto& s = c.spectrogram;
  return {{"features",
           {{"window_len", s.window_len},
            {"hop", s.hop},
            {"n_mel", s.n_mel},
            {"f_min", s.f_min},
            {"f_max", s.f_max},
            {"log_floor", s.log_floor},
            {"sample_rate", s.sample_rate},
            {"q", c.context.q},
            {"stride", c.context.stride}}},
          {"regression", {{"t_d", c.t_d}, {"k", c.k}}}};
}

RegressionConfig regression_config_from_json(const nlohmann::json& j) {
  using json_util::read;
  json_util::reject_unknown(j, {"features", "regression"}, "pipeline config");
  RegressionConfig c;
  if (j.contains("features")) {
    const auto& f = j.at("features");
    const std::string where = "features";
    json_util::reject_unknown(f, {"window_len", "hop", "n_mel", "f_min", "f_max", "log_floor", "sample_rate", "q", "stride"},
                              where);
    auto& s = c.spectrogram;
    read(f, "window_len", s.window_len, where);
    read(f, "hop", s.hop, where);
    read(f, "n_mel", s.n_mel, where);
    read(f, "f_min", s.f_min, where);
    read(f, "f_max", s.f_max, where);
    read(f, "log_floor", s.log_floor, where);
    read(f, "sample_rate", s.sample_rate, where);
    read(f, "q", c.context.q, where);
    read(f, "stride", c.context.stride, where);
  }
  if (j.contains("regression")) {
    const auto& r = j.at("regression");
    json_util::reject_unknown(r, {"t_d", "k"}, "regression");
    read(r, "t_d", c.t_d, "regression");
    read(r, "k", c.k, "regression");
  }
  c.spectrogram.validate();
  if (c.context.q < 0 || c.context.stride < 1) throw UsageError("features: need q >= 0 and stride >= 1");
  if (c.k < 0) throw UsageError("regression: k must be >= 0");
  if (!(c.t_d > 0.0)) throw UsageError("regression: t_d must be positive");
  return c;
}

void save_pipeline(const std::filesystem::path& dir, const RegressionPipeline& pipeline) {
  pipeline.validate();
  std::filesystem::create_directories(dir);
  nn::save_model(dir / "stage1.ckpt", pipeline.stage1);
  nn::save_model(dir / "stage2.ckpt", pipeline.stage2);
  features::write_stats(dir / "stats.bin", pipeline.feature_stats);
  json_util::save_file(dir / "pipeline.json", to_json(pipeline.config));
}

RegressionPipeline load_pipeline(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw DataError("model directory not found: " + dir.string());
  RegressionPipeline p;
  try {
    p.config = regression_config_from_json(json_util::load_file(dir / "pipeline.json"));
  } catch (const UsageError& e) {
    throw DataError(std::string("pipeline.json: ") + e.what());
  }
  p.stage1 = nn::load_model(dir / "stage1.ckpt");
  p.stage2 = nn::load_model(dir / "stage2.ckpt");
  p.feature_stats = features::read_stats(dir / "stats.bin");
  p.validate();
  return p;
}

}  // namespace avc::distreg
