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
#include <vector>

#include "deepcount.hpp"
#include "distreg.hpp"
#include "metrics.hpp"
#include "peakdet.hpp"

// Evaluation protocol: detector grid search, method variants and repeated
// seeded runs with confidence bands.
namespace avc::experiments {

struct GridSpec {
  std::vector<peakdet::SmootherSpec> smoothers = {{{5, 3}}, {{7, 3}}, {{7, 5, 3}}};
  std::vector<double> m_fracs = {0.35, 0.40, 0.45, 0.50};
  std::vector<double> p_fracs = {0.10, 0.15, 0.20, 0.25};
  // Objective range as fractions of t_d.
  double objective_lo = 0.5;
  double objective_hi = 1.0;

  std::size_t cells() const { return smoothers.size() * m_fracs.size() * p_fracs.size(); }
  void validate() const;
};

struct GridCell {
  peakdet::DetectorSpec detector;
  double score = 0.0;  // mean |RVCE| over the objective range
};

struct GridResult {
  std::vector<GridCell> table;  // smoother-major, then M, then P
  std::size_t best = 0;

  const peakdet::DetectorSpec& best_detector() const { return table.at(best).detector; }
};

// Predicted distance series paired with its ground truth.
struct EvalClip {
  dataio::DistanceSeries series;
  dataio::PassByAnnotation annotation;
};

metrics::MetricsReport evaluate_detector(std::span<const EvalClip> clips, const peakdet::DetectorSpec& detector,
                                         double t_d);

GridResult grid_search(std::span<const EvalClip> tuning, const GridSpec& grid, double t_d, int jobs = 1);

// Lowest score; ties go to fewer filter taps, then smaller M, then smaller P.
std::size_t select_best(std::span<const GridCell> table);

// `smoother,m_frac,p_frac,score,selected`
void write_grid_csv(const std::filesystem::path& path, const GridResult& result);

enum class VariantKind { Full, Stage1, FullBand, ProminenceOnly, Deep };

struct Variant {
  VariantKind kind = VariantKind::Full;
  double p_frac = 0.0;  // ProminenceOnly only

  std::string name() const;  // VCNN, VCNN_S1, VCNN_f0, VCNN_PP10, VCNN_deep
  static Variant parse(const std::string& name);
};

// Published detector settings per variant.
peakdet::DetectorSpec reference_detector(const Variant& v);

// Count-level report for a direct counter: the same values at every t_det.
metrics::MetricsReport count_report(std::span<const dataio::PassByAnnotation> truth, std::span<const long> estimates,
                                    double t_d);

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt);

// Stage seeds derived from one run seed.
distreg::TrainOptions seeded_options(distreg::TrainOptions opts, std::uint64_t seed);

// Salt for the deep counter seed.
inline constexpr std::uint64_t kCounterSalt = 13;

struct CounterOptions {
  bool enabled = false;
  bool use_stage2 = true;  // input series: Stage-2 (true) or Stage-1 output
  deepcount::ConvCounterSpec spec;
};

struct ExperimentConfig {
  distreg::RegressionConfig regression;
  distreg::TrainOptions train;
  peakdet::DetectorSpec detector = reference_detector({VariantKind::Full});
  GridSpec grid;
  bool tune = false;  // grid-search the VCNN detector on the validation clips
  CounterOptions counter;
  std::vector<Variant> variants = {{VariantKind::Full}};
  double train_ratio = 0.8;  // used when no separate test set is given
  double val_ratio = 0.2;    // fraction of the training pool held out for tuning
  int runs = 40;
  bool identical_seeds = false;
  double confidence = 0.95;
  std::uint64_t seed = 0;
  int jobs = 1;
};

struct RunResult {
  std::uint64_t seed = 0;
  double stage1_mse = 0.0;  // on the test clips
  double stage2_mse = 0.0;
  std::optional<GridResult> grid;
  std::vector<std::pair<std::string, metrics::MetricsReport>> reports;

  const metrics::MetricsReport& report(const std::string& variant) const;
};

struct RunFailure {
  std::uint64_t seed = 0;
  std::string message;
};

struct BandPoint {
  double t_det = 0.0;
  metrics::ConfidenceInterval rvce;
};

struct MultiRunResult {
  std::vector<RunResult> runs;
  std::vector<RunFailure> failures;
  std::vector<std::pair<std::string, std::vector<BandPoint>>> bands;  // empty with fewer than 2 runs
};

// Train and test sets with a fixed split. The validation clips are cut from
// the training pool with the base seed.
struct ExperimentData {
  std::vector<dataio::LabeledClip> train;
  std::vector<dataio::LabeledClip> val;
  std::vector<dataio::LabeledClip> test;
};

ExperimentData split_experiment_data(std::vector<dataio::LabeledClip> pool, std::vector<dataio::LabeledClip> test,
                                     const ExperimentConfig& config);

RunResult run_once(const ExperimentConfig& config, const ExperimentData& data, std::uint64_t seed);

MultiRunResult multi_run(const ExperimentConfig& config, const ExperimentData& data);

// Per run: run_NNN/<variant>_curve.csv and _summary.csv (plus grid.csv when
// tuned); top level: summary.csv and bands.csv.
void write_outputs(const std::filesystem::path& dir, const MultiRunResult& result);

}  // namespace avc::experiments
