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

#include "config.hpp"

#include <cstdlib>

#include "json_util.hpp"

namespace avc::config {

namespace {

using json_util::read;
using json_util::reject_unknown;

void forbid_seed(const nlohmann::json& j, const std::string& where) {
  if (j.is_object() && j.contains("seed"))
    throw UsageError(where + ": per-section seeds are derived from the top-level \"seed\"");
}

nlohmann::json grid_to_json(const experiments::GridSpec& g) {
  nlohmann::json smoothers = nlohmann::json::array();
  for (const auto& s : g.smoothers) smoothers.push_back(s.lengths);
  return {{"smoothers", smoothers},
          {"m_fracs", g.m_fracs},
          {"p_fracs", g.p_fracs},
          {"objective_range", {g.objective_lo, g.objective_hi}}};
}

experiments::GridSpec grid_from_json(const nlohmann::json& j) {
  const std::string where = "grid";
  reject_unknown(j, {"smoothers", "m_fracs", "p_fracs", "objective_range"}, where);
  experiments::GridSpec g;
  if (j.contains("smoothers")) {
    std::vector<std::vector<int>> s;
    read(j, "smoothers", s, where);
    g.smoothers.clear();
    for (auto& l : s) g.smoothers.push_back({std::move(l)});
  }
  read(j, "m_fracs", g.m_fracs, where);
  read(j, "p_fracs", g.p_fracs, where);
  if (j.contains("objective_range")) {
    std::array<double, 2> r{};
    read(j, "objective_range", r, where);
    g.objective_lo = r[0];
    g.objective_hi = r[1];
  }
  g.validate();
  return g;
}

}  // namespace

nlohmann::json to_json(const peakdet::DetectorSpec& d) {
  return {{"smoother", d.smoother.lengths}, {"m_frac", d.m_frac}, {"p_frac", d.p_frac}};
}

peakdet::DetectorSpec detector_from_json(const nlohmann::json& j, peakdet::DetectorSpec d) {
  const std::string where = "detector";
  reject_unknown(j, {"smoother", "m_frac", "p_frac"}, where);
  read(j, "smoother", d.smoother.lengths, where);
  read(j, "m_frac", d.m_frac, where);
  read(j, "p_frac", d.p_frac, where);
  d.validate();
  return d;
}

nlohmann::json ToolConfig::to_json() const {
  nlohmann::json j = distreg::to_json(regression);
  j["seed"] = seed;
  auto s1 = train.stage1.to_json();
  auto s2 = train.stage2.to_json();
  s1.erase("seed");
  s2.erase("seed");
  j["stage1"] = s1;
  j["stage2"] = s2;
  j["detector"] = config::to_json(detector);
  j["grid"] = grid_to_json(grid);
  auto c = counter.spec.to_json();
  c.erase("seed");
  c["enabled"] = counter.enabled;
  c["input"] = counter.use_stage2 ? "stage2" : "stage1";
  j["counter"] = c;
  j["scene"] = scene.to_json();
  j["corpus"] = {{"n_clips", n_clips}};
  j["split"] = {{"train_ratio", train_ratio}, {"val_ratio", val_ratio}};
  std::vector<std::string> names;
  for (const auto& v : experiment.variants) names.push_back(v.name());
  j["experiment"] = {{"train_dir", experiment.train_dir.string()},
                     {"test_dir", experiment.test_dir.string()},
                     {"output_dir", experiment.output_dir.string()},
                     {"runs", experiment.runs},
                     {"variants", names},
                     {"tune", experiment.tune},
                     {"identical_seeds", experiment.identical_seeds},
                     {"confidence", experiment.confidence}};
  return j;
}

ToolConfig ToolConfig::from_json(const nlohmann::json& j) {
  reject_unknown(j,
                 {"seed", "features", "regression", "stage1", "stage2", "detector", "grid", "counter", "scene",
                  "corpus", "split", "experiment"},
                 "config");
  ToolConfig c;
  try {
    read(j, "seed", c.seed, "config");
    nlohmann::json reg = nlohmann::json::object();
    if (j.contains("features")) reg["features"] = j.at("features");
    if (j.contains("regression")) reg["regression"] = j.at("regression");
    c.regression = distreg::regression_config_from_json(reg);

    if (j.contains("stage1")) {
      forbid_seed(j.at("stage1"), "stage1");
      c.train.stage1 = nn::NetworkSpec::from_json(j.at("stage1"), c.train.stage1);
    }
    if (j.contains("stage2")) {
      forbid_seed(j.at("stage2"), "stage2");
      c.train.stage2 = nn::NetworkSpec::from_json(j.at("stage2"), c.train.stage2);
    }
    c.train.stage1.validate();
    c.train.stage2.validate();
    if (c.train.stage1.input_size() != c.regression.feature_dim())
      throw UsageError("stage1: first layer must match the stacked feature size " +
                       std::to_string(c.regression.feature_dim()));
    if (c.train.stage2.input_size() != c.regression.window_dim())
      throw UsageError("stage2: first layer must equal 2k+1 = " + std::to_string(c.regression.window_dim()));

    if (j.contains("detector")) c.detector = detector_from_json(j.at("detector"), c.detector);
    if (j.contains("grid")) c.grid = grid_from_json(j.at("grid"));

    if (j.contains("counter")) {
      auto cj = j.at("counter");
      forbid_seed(cj, "counter");
      if (!cj.is_object()) throw UsageError("counter: expected a JSON object");
      read(cj, "enabled", c.counter.enabled, "counter");
      if (cj.contains("input")) {
        std::string input;
        read(cj, "input", input, "counter");
        if (input != "stage1" && input != "stage2") throw UsageError("counter: input must be \"stage1\" or \"stage2\"");
        c.counter.use_stage2 = input == "stage2";
      }
      cj.erase("enabled");
      cj.erase("input");
      c.counter.spec = deepcount::ConvCounterSpec::from_json(cj, c.counter.spec);
    }

    if (j.contains("scene")) c.scene = synthgen::SceneSpec::from_json(j.at("scene"), c.scene);
    if (j.contains("corpus")) {
      reject_unknown(j.at("corpus"), {"n_clips"}, "corpus");
      read(j.at("corpus"), "n_clips", c.n_clips, "corpus");
    }
    if (j.contains("split")) {
      reject_unknown(j.at("split"), {"train_ratio", "val_ratio"}, "split");
      read(j.at("split"), "train_ratio", c.train_ratio, "split");
      read(j.at("split"), "val_ratio", c.val_ratio, "split");
    }
    if (!(c.train_ratio > 0.0 && c.train_ratio < 1.0) || !(c.val_ratio > 0.0 && c.val_ratio < 1.0))
      throw UsageError("split: ratios must lie in (0, 1)");

    if (j.contains("experiment")) {
      const auto& e = j.at("experiment");
      const std::string where = "experiment";
      reject_unknown(e, {"train_dir", "test_dir", "output_dir", "runs", "variants", "tune", "identical_seeds", "confidence"},
                     where);
      std::string s;
      if (e.contains("train_dir")) read(e, "train_dir", s, where), c.experiment.train_dir = s;
      if (e.contains("test_dir")) read(e, "test_dir", s, where), c.experiment.test_dir = s;
      if (e.contains("output_dir")) read(e, "output_dir", s, where), c.experiment.output_dir = s;
      read(e, "runs", c.experiment.runs, where);
      if (e.contains("variants")) {
        std::vector<std::string> names;
        read(e, "variants", names, where);
        c.experiment.variants.clear();
        for (const auto& n : names) c.experiment.variants.push_back(experiments::Variant::parse(n));
      }
      read(e, "tune", c.experiment.tune, where);
      read(e, "identical_seeds", c.experiment.identical_seeds, where);
      read(e, "confidence", c.experiment.confidence, where);
      if (c.experiment.runs < 1) throw UsageError("experiment: runs must be >= 1");
      if (c.experiment.variants.empty()) throw UsageError("experiment: variants must not be empty");
      if (!(c.experiment.confidence > 0.0 && c.experiment.confidence < 1.0))
        throw UsageError("experiment: confidence must lie in (0, 1)");
    }
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
  c.scene.seed = c.seed;
  return c;
}

experiments::ExperimentConfig ToolConfig::experiment_config(int jobs) const {
  experiments::ExperimentConfig e;
  e.regression = regression;
  e.train = train;
  e.detector = detector;
  e.grid = grid;
  e.tune = experiment.tune;
  e.counter = counter;
  e.variants = experiment.variants;
  e.train_ratio = train_ratio;
  e.val_ratio = val_ratio;
  e.runs = experiment.runs;
  e.identical_seeds = experiment.identical_seeds;
  e.confidence = experiment.confidence;
  e.seed = seed;
  e.jobs = jobs;
  return e;
}

std::optional<std::uint64_t> seed_from_env() {
  const char* v = std::getenv("AVC_SEED");
  if (v == nullptr || *v == '\0') return std::nullopt;
  const std::string s(v);
  if (s.find_first_not_of("0123456789") != std::string::npos || s.size() > 20)
    throw UsageError("AVC_SEED must be a nonnegative integer, got '" + s + "'");
  try {
    return std::stoull(s);
  } catch (const std::exception&) {
    throw UsageError("AVC_SEED out of range: " + s);
  }
}

ToolConfig load(const std::filesystem::path& path) {
  ToolConfig c = path.empty() ? ToolConfig{} : ToolConfig::from_json(json_util::load_file(path));
  if (auto s = seed_from_env()) {
    c.seed = *s;
    c.scene.seed = *s;
  }
  if (!path.empty()) {
    const auto base = path.parent_path();
    for (auto* p : {&c.experiment.train_dir, &c.experiment.test_dir, &c.experiment.output_dir})
      if (!p->empty() && p->is_relative()) *p = base / *p;
  }
  return c;
}

}  // namespace avc::config
