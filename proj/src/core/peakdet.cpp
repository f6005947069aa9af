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

#include "peakdet.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace avc::peakdet {

int SmootherSpec::total_taps() const { return std::accumulate(lengths.begin(), lengths.end(), 0); }

void SmootherSpec::validate() const {
  for (int l : lengths)
    if (l < 1 || l % 2 == 0) throw UsageError("moving average length " + std::to_string(l) + " must be odd and >= 1");
}

void DetectorSpec::validate() const {
  smoother.validate();
  if (!(m_frac >= 0.0 && m_frac <= 1.0)) throw UsageError("m_frac must lie in [0, 1]");
  if (!(p_frac >= 0.0 && p_frac <= 1.0)) throw UsageError("p_frac must lie in [0, 1]");
}

std::vector<double> moving_average(std::span<const double> values, int length) {
  if (length < 1 || length % 2 == 0)
    throw UsageError("moving average length " + std::to_string(length) + " must be odd and >= 1");
  const auto n = static_cast<std::ptrdiff_t>(values.size());
  const std::ptrdiff_t half = length / 2;
  std::vector<double> out(values.size());
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, i - half);
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(n - 1, i + half);
    double sum = 0.0;
    for (std::ptrdiff_t j = lo; j <= hi; ++j) sum += values[static_cast<std::size_t>(j)];
    out[static_cast<std::size_t>(i)] = sum / static_cast<double>(hi - lo + 1);
  }
  return out;
}

dataio::DistanceSeries moving_average_cascade(const dataio::DistanceSeries& series, const SmootherSpec& spec) {
  if (series.values.empty()) throw DataError("moving_average_cascade: empty series");
  spec.validate();
  dataio::DistanceSeries out = series;
  for (int l : spec.lengths) out.values = moving_average(out.values, l);
  return out;
}

std::vector<Peak> find_peaks(std::span<const double> values) {
  std::vector<Peak> peaks;
  const std::size_t n = values.size();
  if (n < 3) return peaks;
  std::size_t i = 1;
  while (i + 1 < n) {
    if (values[i - 1] < values[i]) {
      std::size_t ahead = i + 1;
      while (ahead + 1 < n && values[ahead] == values[i]) ++ahead;
      if (values[ahead] < values[i]) {
        const std::size_t left = i, right = ahead - 1;
        const std::size_t mid = (left + right) / 2;
        peaks.push_back({mid, 0.0, values[mid], 0.0});
        i = ahead;
        continue;
      }
    }
    ++i;
  }
  return peaks;
}

double prominence(std::span<const double> values, std::size_t peak_index) {
  const std::size_t n = values.size();
  if (peak_index == 0 || peak_index + 1 >= n) throw UsageError("prominence: index is not a peak");
  const double height = values[peak_index];
  std::size_t l = peak_index;
  while (l > 0 && values[l - 1] == height) --l;
  std::size_t r = peak_index;
  while (r + 1 < n && values[r + 1] == height) ++r;
  if (l == 0 || r + 1 >= n || !(values[l - 1] < height) || !(values[r + 1] < height))
    throw UsageError("prominence: index is not a peak");

  double left_min = height;
  for (std::size_t i = peak_index + 1; i-- > 0;) {
    if (values[i] > height) break;
    left_min = std::min(left_min, values[i]);
  }
  double right_min = height;
  for (std::size_t i = peak_index; i < n; ++i) {
    if (values[i] > height) break;
    right_min = std::min(right_min, values[i]);
  }
  return height - std::max(left_min, right_min);
}

std::vector<Peak> detect_vehicles(const dataio::DistanceSeries& series, const DetectorSpec& det) {
  det.validate();
  const auto smooth = moving_average_cascade(series, det.smoother);
  std::vector<double> inverted(smooth.size());
  for (std::size_t i = 0; i < smooth.size(); ++i) inverted[i] = series.t_d - smooth.values[i];

  const double m_abs = det.m_frac * series.t_d;
  const double p_abs = det.p_frac * series.t_d;
  std::vector<Peak> kept;
  for (auto peak : find_peaks(inverted)) {
    peak.prominence = prominence(inverted, peak.frame_index);
    peak.time = series.time(peak.frame_index);
    if (peak.magnitude > m_abs || peak.prominence > p_abs) kept.push_back(peak);
  }
  return kept;
}

std::size_t count_at_threshold(std::span<const Peak> detections, double t_det, double t_d) {
  return static_cast<std::size_t>(
      std::count_if(detections.begin(), detections.end(), [&](const Peak& p) { return p.distance(t_d) < t_det; }));
}

void write_detections_csv(const std::filesystem::path& path, std::span<const ClipDetections> detections) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "clip_id,time_s,distance_s,magnitude_s,prominence_s\n";
  char buf[160];
  for (const auto& clip : detections) {
    for (const auto& p : clip.peaks) {
      std::snprintf(buf, sizeof buf, ",%.6f,%.6f,%.6f,%.6f\n", p.time, p.distance(clip.t_d), p.magnitude, p.prominence);
      out << clip.clip_id << buf;
    }
  }
}

}  // namespace avc::peakdet
