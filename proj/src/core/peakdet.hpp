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
#include <string>
#include <vector>

#include "dataio.hpp"

namespace avc::peakdet {

// Cascade of centered moving-average filters, applied in order.
struct SmootherSpec {
  std::vector<int> lengths;

  int total_taps() const;
  void validate() const;
};

struct Peak {
  std::size_t frame_index = 0;
  double time = 0.0;        // seconds
  double magnitude = 0.0;   // t_d - smoothed distance
  double prominence = 0.0;

  double distance(double t_d) const { return t_d - magnitude; }
};

// Vehicle rule: keep a peak when magnitude > m_frac*t_d or
// prominence > p_frac*t_d.
struct DetectorSpec {
  SmootherSpec smoother;
  double m_frac = 0.40;
  double p_frac = 0.20;

  void validate() const;
};

std::vector<double> moving_average(std::span<const double> values, int length);
dataio::DistanceSeries moving_average_cascade(const dataio::DistanceSeries& series, const SmootherSpec& spec);

// Local maxima; plateaus report their (left-)middle index, endpoints never
// qualify. Only frame_index and magnitude (the value) are filled in.
std::vector<Peak> find_peaks(std::span<const double> values);

double prominence(std::span<const double> values, std::size_t peak_index);

std::vector<Peak> detect_vehicles(const dataio::DistanceSeries& series, const DetectorSpec& det);

// Detections whose smoothed distance t_d - magnitude lies strictly below t_det.
std::size_t count_at_threshold(std::span<const Peak> detections, double t_det, double t_d);

// CSV rows `clip_id,time_s,distance_s,magnitude_s,prominence_s`.
struct ClipDetections {
  std::string clip_id;
  double t_d = 0.0;
  std::vector<Peak> peaks;
};
void write_detections_csv(const std::filesystem::path& path, std::span<const ClipDetections> detections);

}  // namespace avc::peakdet
