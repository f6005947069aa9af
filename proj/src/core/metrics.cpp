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

#include "metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <boost/math/distributions/students_t.hpp>

namespace avc::metrics {

namespace {
constexpr double kGridSlack = 1e-12;
}

double MetricsReport::mean_abs_rvce(double lo, double hi) const {
  double sum = 0.0;
  int n = 0;
  for (const auto& p : curve) {
    if (p.t_det >= lo - kGridSlack && p.t_det <= hi + kGridSlack) {
      sum += std::abs(p.rvce);
      ++n;
    }
  }
  if (n == 0) throw UsageError("mean_abs_rvce: no grid points in range");
  return sum / n;
}

std::vector<PassByInterval> build_intervals(const dataio::PassByAnnotation& ann, double t_d) {
  const auto& t = ann.instants;
  std::vector<PassByInterval> out;
  out.reserve(t.size());
  for (std::size_t k = 0; k < t.size(); ++k) {
    PassByInterval iv{ann.clip_id, std::max(0.0, t[k] - t_d), t[k] + t_d, t[k]};
    if (ann.duration > 0.0) iv.end = std::min(iv.end, ann.duration);
    if (k > 0 && t[k] - t_d < t[k - 1] + t_d) iv.start = 0.5 * (t[k - 1] + t[k]);
    if (k + 1 < t.size() && t[k] + t_d > t[k + 1] - t_d) iv.end = 0.5 * (t[k] + t[k + 1]);
    out.push_back(iv);
  }
  return out;
}

Counts classify_detections(std::span<const PassByInterval> intervals, std::span<const peakdet::Peak> detections,
                           double t_det, double t_d) {
  std::vector<peakdet::Peak> sorted(detections.begin(), detections.end());
  std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.time < b.time; });

  std::vector<std::size_t> hits(intervals.size(), 0);
  Counts c;
  for (const auto& d : sorted) {
    if (!(d.distance(t_d) < t_det)) continue;
    auto it = std::find_if(intervals.begin(), intervals.end(), [&](const auto& iv) { return iv.contains(d.time); });
    if (it == intervals.end())
      ++c.fp;
    else
      ++hits[static_cast<std::size_t>(it - intervals.begin())];
  }
  for (std::size_t h : hits) {
    if (h == 0) {
      ++c.fn;
    } else {
      ++c.tp;
      c.fp += h - 1;
    }
  }
  return c;
}

std::vector<double> threshold_grid(double t_d) {
  std::vector<double> grid(kCurvePoints);
  for (int i = 0; i < kCurvePoints; ++i) grid[static_cast<std::size_t>(i)] = t_d * i / (kCurvePoints - 1);
  return grid;
}

std::optional<EqualFalsePoint> equal_false_point(std::span<const CurvePoint> curve) {
  for (std::size_t i = 0; i < curve.size(); ++i) {
    const double d0 = curve[i].p_fp - curve[i].p_fn;
    if (d0 == 0.0) return EqualFalsePoint{curve[i].t_det, curve[i].p_fp};
    if (i + 1 < curve.size()) {
      const double d1 = curve[i + 1].p_fp - curve[i + 1].p_fn;
      if ((d0 < 0.0 && d1 > 0.0) || (d0 > 0.0 && d1 < 0.0)) {
        const double s = d0 / (d0 - d1);
        return EqualFalsePoint{curve[i].t_det + s * (curve[i + 1].t_det - curve[i].t_det),
                               curve[i].p_fp + s * (curve[i + 1].p_fp - curve[i].p_fp)};
      }
    }
  }
  return std::nullopt;
}

MetricsReport compute_curve(std::span<const ClipResult> results, double t_d) {
  MetricsReport report;
  for (const auto& r : results) report.n_true += r.intervals.size();
  if (report.n_true == 0) throw DataError("compute_curve: no true vehicles in the evaluation set");
  const double n = static_cast<double>(report.n_true);

  double area = 0.0;
  for (double t_det : threshold_grid(t_d)) {
    Counts total;
    for (const auto& r : results) total += classify_detections(r.intervals, r.detections, t_det, r.t_d);
    CurvePoint p{t_det, total.tp / n, total.fp / n, total.fn / n, rvce(report.n_true, total.tp + total.fp)};
    area += p.p_tp;
    report.curve.push_back(p);
  }
  report.area_ptp = area / kCurvePoints;
  report.efp = equal_false_point(report.curve);
  return report;
}

double rvce(std::size_t n_true, std::size_t n_est) {
  if (n_true == 0) throw DataError("rvce: true count is zero");
  return (static_cast<double>(n_true) - static_cast<double>(n_est)) / static_cast<double>(n_true) * 100.0;
}

ConfidenceInterval confidence_interval(std::span<const double> values, double level) {
  if (values.size() < 2) throw UsageError("confidence_interval: need at least 2 values");
  if (!(level > 0.0 && level < 1.0)) throw UsageError("confidence_interval: level must lie in (0, 1)");
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  const boost::math::students_t dist(n - 1.0);
  const double half = boost::math::quantile(dist, 0.5 + level / 2.0) * sd / std::sqrt(n);
  return {mean, mean - half, mean + half};
}

void write_curve_csv(const std::filesystem::path& path, const MetricsReport& report) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "t_det,p_tp,p_fp,p_fn,rvce\n";
  char buf[160];
  for (const auto& p : report.curve) {
    std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f,%.6f,%.6f\n", p.t_det, p.p_tp, p.p_fp, p.p_fn, p.rvce);
    out << buf;
  }
}

void write_summary_csv(const std::filesystem::path& path, const MetricsReport& report) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "area_ptp,efp_tdet,efp_value\n";
  char buf[128];
  if (report.efp)
    std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f\n", report.area_ptp, report.efp->t_det, report.efp->value);
  else
    std::snprintf(buf, sizeof buf, "%.6f,,\n", report.area_ptp);
  out << buf;
}

}  // namespace avc::metrics
