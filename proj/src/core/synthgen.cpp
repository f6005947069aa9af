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

#include "synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "json_util.hpp"
#include "parallel.hpp"

namespace avc::synthgen {

namespace {

// RBJ cookbook biquad, Butterworth Q.
class Biquad {
public:
  static Biquad lowpass(double hz, double fs) { return make(hz, fs, false); }
  static Biquad highpass(double hz, double fs) { return make(hz, fs, true); }

  void run(std::vector<double>& x) const {
    double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
    for (double& v : x) {
      const double y = b0_ * v + b1_ * x1 + b2_ * x2 - a1_ * y1 - a2_ * y2;
      x2 = x1;
      x1 = v;
      y2 = y1;
      y1 = y;
      v = y;
    }
  }

private:
  static Biquad make(double hz, double fs, bool high) {
    const double w0 = 2.0 * std::numbers::pi * hz / fs;
    const double c = std::cos(w0);
    const double alpha = std::sin(w0) / (2.0 * std::numbers::sqrt2 / 2.0);
    const double a0 = 1.0 + alpha;
    Biquad q;
    if (high) {
      q.b0_ = (1.0 + c) / 2.0 / a0;
      q.b1_ = -(1.0 + c) / a0;
    } else {
      q.b0_ = (1.0 - c) / 2.0 / a0;
      q.b1_ = (1.0 - c) / a0;
    }
    q.b2_ = q.b0_;
    q.a1_ = -2.0 * c / a0;
    q.a2_ = (1.0 - alpha) / a0;
    return q;
  }
  double b0_ = 1, b1_ = 0, b2_ = 0, a1_ = 0, a2_ = 0;
};

// Unit-variance uniform white noise.
std::vector<double> white(std::size_t n, Rng& rng) {
  std::vector<double> x(n);
  const double r = std::sqrt(3.0);
  for (double& v : x) v = uniform(rng, -r, r);
  return x;
}

void normalize_rms(std::vector<double>& x, double target) {
  double ss = 0.0;
  for (double v : x) ss += v * v;
  const double rms = std::sqrt(ss / static_cast<double>(x.size()));
  if (rms > 0.0)
    for (double& v : x) v *= target / rms;
}

int poisson(Rng& rng, double lambda) {
  const double limit = std::exp(-lambda);
  double p = 1.0;
  int k = -1;
  do {
    ++k;
    p *= uniform01(rng);
  } while (p > limit);
  return k;
}

struct Layout {
  long total_frames;
  long margin_frames;
  long gap_frames;
  long pair_frames;
};

Layout layout_of(const SceneSpec& s) {
  return {static_cast<long>(std::floor(s.duration / s.frame_period)),
          static_cast<long>(std::ceil(s.edge_margin / s.frame_period)),
          static_cast<long>(std::ceil(s.min_gap / s.frame_period)),
          std::max(1L, std::lround(s.pair_gap / s.frame_period))};
}

// Free frames left for `events` singles (a pair counts as one event of width pair_frames).
long free_frames(const Layout& l, long events, long pairs) {
  if (events == 0) return l.total_frames - 2 * l.margin_frames;
  return l.total_frames - 2 * l.margin_frames - pairs * l.pair_frames - (events - 1) * l.gap_frames;
}

}  // namespace

void SceneSpec::validate() const {
  if (!(duration > 0.0)) throw UsageError("scene: duration must be positive");
  if (!(min_gap >= 0.0)) throw UsageError("scene: min_gap must be nonnegative");
  if (!(frame_period > 0.0) || !(sample_rate > 0.0)) throw UsageError("scene: invalid frame period or sample rate");
  if (n_vehicles && *n_vehicles < 0) throw UsageError("scene: n_vehicles must be nonnegative");
  if (!(vehicle_rate >= 0.0) || max_vehicles < 0) throw UsageError("scene: invalid vehicle rate");
  if (!(pair_probability >= 0.0 && pair_probability <= 1.0)) throw UsageError("scene: pair_probability outside [0, 1]");
  if (!(pair_gap > 0.0) || !(edge_margin >= 0.0)) throw UsageError("scene: invalid pair_gap or edge_margin");
  if (!(vehicle.low_hz > 0.0 && vehicle.low_hz < vehicle.high_hz && vehicle.high_hz < sample_rate / 2.0))
    throw UsageError("scene: invalid vehicle band");
  if (!(vehicle.amplitude_min >= 0.0 && vehicle.amplitude_min <= vehicle.amplitude_max))
    throw UsageError("scene: invalid vehicle amplitude range");
  if (!(vehicle.spread_min > 0.0 && vehicle.spread_min <= vehicle.spread_max))
    throw UsageError("scene: invalid vehicle spread range");
  const int worst = n_vehicles ? *n_vehicles : max_vehicles;
  if (worst > 0 && !(worst * min_gap < duration))
    throw UsageError("scene: infeasible, n_vehicles * min_gap must be below duration");
  if (worst > 0 && free_frames(layout_of(*this), worst, 0) < 0)
    throw UsageError("scene: infeasible, vehicles do not fit with the requested gaps and margins");
}

nlohmann::json SceneSpec::to_json() const {
  nlohmann::json j{{"duration", duration},
                   {"vehicle_rate", vehicle_rate},
                   {"max_vehicles", max_vehicles},
                   {"min_gap", min_gap},
                   {"edge_margin", edge_margin},
                   {"pair_probability", pair_probability},
                   {"pair_gap", pair_gap},
                   {"noise_level", noise_level},
                   {"rumble_level", rumble_level},
                   {"sample_rate", sample_rate},
                   {"frame_period", frame_period},
                   {"vehicle",
                    {{"low_hz", vehicle.low_hz},
                     {"high_hz", vehicle.high_hz},
                     {"amplitude_min", vehicle.amplitude_min},
                     {"amplitude_max", vehicle.amplitude_max},
                     {"spread_min", vehicle.spread_min},
                     {"spread_max", vehicle.spread_max}}}};
  j["n_vehicles"] = n_vehicles ? nlohmann::json(*n_vehicles) : nlohmann::json(nullptr);
  return j;
}

SceneSpec SceneSpec::from_json(const nlohmann::json& j, SceneSpec s) {
  using json_util::read;
  const std::string where = "scene";
  json_util::reject_unknown(j,
                            {"duration", "n_vehicles", "vehicle_rate", "max_vehicles", "min_gap", "edge_margin",
                             "pair_probability", "pair_gap", "noise_level", "rumble_level", "sample_rate",
                             "frame_period", "vehicle", "preset"},
                            where);
  if (j.contains("preset")) {
    std::string name;
    read(j, "preset", name, where);
    if (name == "easy")
      s = easy_preset();
    else if (name == "close_pairs")
      s = close_pairs_preset();
    else
      throw UsageError("scene: unknown preset '" + name + "'");
  }
  read(j, "duration", s.duration, where);
  if (j.contains("n_vehicles")) {
    if (j.at("n_vehicles").is_null()) {
      s.n_vehicles.reset();
    } else {
      int n = 0;
      read(j, "n_vehicles", n, where);
      s.n_vehicles = n;
    }
  }
  read(j, "vehicle_rate", s.vehicle_rate, where);
  read(j, "max_vehicles", s.max_vehicles, where);
  read(j, "min_gap", s.min_gap, where);
  read(j, "edge_margin", s.edge_margin, where);
  read(j, "pair_probability", s.pair_probability, where);
  read(j, "pair_gap", s.pair_gap, where);
  read(j, "noise_level", s.noise_level, where);
  read(j, "rumble_level", s.rumble_level, where);
  read(j, "sample_rate", s.sample_rate, where);
  read(j, "frame_period", s.frame_period, where);
  if (j.contains("vehicle")) {
    const auto& v = j.at("vehicle");
    json_util::reject_unknown(v, {"low_hz", "high_hz", "amplitude_min", "amplitude_max", "spread_min", "spread_max"},
                              "scene.vehicle");
    read(v, "low_hz", s.vehicle.low_hz, where);
    read(v, "high_hz", s.vehicle.high_hz, where);
    read(v, "amplitude_min", s.vehicle.amplitude_min, where);
    read(v, "amplitude_max", s.vehicle.amplitude_max, where);
    read(v, "spread_min", s.vehicle.spread_min, where);
    read(v, "spread_max", s.vehicle.spread_max, where);
  }
  s.validate();
  return s;
}

SceneSpec easy_preset() { return SceneSpec{}; }

SceneSpec close_pairs_preset() {
  SceneSpec s;
  s.vehicle_rate = 2.0;
  s.max_vehicles = 5;
  s.pair_probability = 0.5;
  s.pair_gap = 0.8;
  s.min_gap = 2.5;
  // Broad envelopes so the loudness of two close vehicles merges.
  s.vehicle.spread_min = 0.8;
  s.vehicle.spread_max = 1.2;
  return s;
}

Scene generate_scene(const SceneSpec& spec, const std::string& clip_id) {
  spec.validate();
  Rng rng(spec.seed);
  const Layout layout = layout_of(spec);

  int n = spec.n_vehicles ? *spec.n_vehicles : std::min(poisson(rng, spec.vehicle_rate), spec.max_vehicles);

  // Group vehicles into events: singles, or pairs when pairing is enabled.
  std::vector<int> event_sizes;
  for (int left = n; left > 0;) {
    const bool pair = left >= 2 && spec.pair_probability > 0.0 && uniform01(rng) < spec.pair_probability;
    event_sizes.push_back(pair ? 2 : 1);
    left -= event_sizes.back();
  }
  const auto events = static_cast<long>(event_sizes.size());
  const auto pairs = static_cast<long>(std::count(event_sizes.begin(), event_sizes.end(), 2));
  const long slack = free_frames(layout, events, pairs);
  if (slack < 0) throw UsageError("scene: infeasible, vehicles do not fit with the requested gaps and margins");

  std::vector<long> offsets(event_sizes.size());
  for (auto& o : offsets) o = static_cast<long>(uniform_index(rng, static_cast<std::uint64_t>(slack) + 1));
  std::sort(offsets.begin(), offsets.end());

  Scene scene;
  scene.annotation.clip_id = clip_id;
  scene.annotation.duration = spec.duration;
  long cursor = layout.margin_frames;
  for (std::size_t e = 0; e < event_sizes.size(); ++e) {
    const long first = cursor + offsets[e];
    scene.annotation.instants.push_back(static_cast<double>(first) * spec.frame_period);
    long last = first;
    if (event_sizes[e] == 2) {
      last = first + layout.pair_frames;
      scene.annotation.instants.push_back(static_cast<double>(last) * spec.frame_period);
    }
    cursor = last - first + cursor + layout.gap_frames;
  }

  const auto n_samples = static_cast<std::size_t>(std::llround(spec.duration * spec.sample_rate));
  std::vector<double> mix = white(n_samples, rng);
  for (double& v : mix) v *= spec.noise_level;
  if (spec.rumble_level > 0.0) {
    auto rumble = white(n_samples, rng);
    const auto lp = Biquad::lowpass(300.0, spec.sample_rate);
    lp.run(rumble);
    lp.run(rumble);
    normalize_rms(rumble, spec.rumble_level);
    for (std::size_t i = 0; i < n_samples; ++i) mix[i] += rumble[i];
  }

  const auto hp = Biquad::highpass(spec.vehicle.low_hz, spec.sample_rate);
  const auto lp = Biquad::lowpass(spec.vehicle.high_hz, spec.sample_rate);
  for (double instant : scene.annotation.instants) {
    const double amp = uniform(rng, spec.vehicle.amplitude_min, spec.vehicle.amplitude_max);
    const double spread = uniform(rng, spec.vehicle.spread_min, spec.vehicle.spread_max);
    auto burst = white(n_samples, rng);
    hp.run(burst);
    hp.run(burst);
    lp.run(burst);
    lp.run(burst);
    normalize_rms(burst, 1.0);
    for (std::size_t i = 0; i < n_samples; ++i) {
      const double dt = static_cast<double>(i) / spec.sample_rate - instant;
      mix[i] += amp * burst[i] / (1.0 + dt * dt / (spread * spread));
    }
  }
  for (double& v : mix) v = std::clamp(v, -1.0, 32767.0 / 32768.0);

  scene.clip.id = clip_id;
  scene.clip.sample_rate = spec.sample_rate;
  scene.clip.samples = std::move(mix);
  return scene;
}

std::string clip_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "clip_%04zu", index);
  return buf;
}

CorpusSummary generate_corpus(const SceneSpec& spec, std::size_t n_clips, const std::filesystem::path& out_dir,
                              int jobs) {
  spec.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec || !std::filesystem::is_directory(out_dir)) throw DataError("cannot create output directory " + out_dir.string());

  std::vector<dataio::PassByAnnotation> annotations(n_clips);
  parallel_for(n_clips, jobs, [&](std::size_t i) {
    SceneSpec s = spec;
    s.seed = splitmix64(spec.seed + i);
    const std::string id = clip_name(i);
    Scene scene = generate_scene(s, id);
    dataio::write_clip(out_dir / (id + ".wav"), scene.clip);
    annotations[i] = std::move(scene.annotation);
  });
  dataio::write_annotations(out_dir / "annotations.csv", annotations);

  std::ofstream manifest(out_dir / "manifest.csv");
  if (!manifest) throw DataError("cannot write manifest in " + out_dir.string());
  manifest << "clip_id,n_vehicles\n";
  CorpusSummary summary{n_clips, 0};
  for (const auto& a : annotations) {
    manifest << a.clip_id << ',' << a.count() << '\n';
    summary.vehicles += a.count();
  }
  return summary;
}

}  // namespace avc::synthgen
