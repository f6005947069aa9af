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

#include "dataio.hpp"
#include "peakdet.hpp"

namespace avc::metrics {

inline constexpr int kCurvePoints = 100;

struct PassByInterval {
  std::string clip_id;
  double start = 0.0;
  double end = 0.0;
  double center = 0.0;

  bool contains(double t) const { return t >= start && t <= end; }
};

struct Counts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  Counts& operator+=(const Counts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
};

struct CurvePoint {
  double t_det = 0.0;
  double p_tp = 0.0;
  double p_fp = 0.0;
  double p_fn = 0.0;
  double rvce = 0.0;  // signed percent at this threshold
};

struct EqualFalsePoint {
  double t_det = 0.0;
  double value = 0.0;
};

struct MetricsReport {
  std::vector<CurvePoint> curve;
  double area_ptp = 0.0;
  std::optional<EqualFalsePoint> efp;
  std::size_t n_true = 0;

  // Mean |RVCE| over curve points with t_det in [lo, hi].
  double mean_abs_rvce(double lo, double hi) const;
};

// Everything needed to score one clip.
struct ClipResult {
  std::string clip_id;
  std::vector<PassByInterval> intervals;
  std::vector<peakdet::Peak> detections;
  double t_d = 0.0;
};

// [t_k - t_d, t_k + t_d] clipped to [0, duration]; overlapping neighbours
// meet at the midpoint of their instants.
std::vector<PassByInterval> build_intervals(const dataio::PassByAnnotation& ann, double t_d);

// At most one TP per interval; every other below-threshold detection is FP.
// A detection on a shared boundary belongs to the earlier interval.
Counts classify_detections(std::span<const PassByInterval> intervals, std::span<const peakdet::Peak> detections,
                           double t_det, double t_d);

// Threshold grid: kCurvePoints equidistant values spanning [0, t_d].
std::vector<double> threshold_grid(double t_d);

MetricsReport compute_curve(std::span<const ClipResult> results, double t_d);

// Crossing of p_fp and p_fn, linearly interpolated on the grid.
std::optional<EqualFalsePoint> equal_false_point(std::span<const CurvePoint> curve);

double rvce(std::size_t n_true, std::size_t n_est);

struct ConfidenceInterval {
  double mean = 0.0;
  double low = 0.0;
  double high = 0.0;
};

// Student-t interval for the mean.
ConfidenceInterval confidence_interval(std::span<const double> values, double level = 0.95);

// `t_det,p_tp,p_fp,p_fn,rvce` and `area_ptp,efp_tdet,efp_value`.
void write_curve_csv(const std::filesystem::path& path, const MetricsReport& report);
void write_summary_csv(const std::filesystem::path& path, const MetricsReport& report);

}  // namespace avc::metrics
