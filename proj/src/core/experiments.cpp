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

#include "experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>

#include "parallel.hpp"

namespace avc::experiments {

void GridSpec::validate() const {
  if (smoothers.empty() || m_fracs.empty() || p_fracs.empty()) throw UsageError("grid: every axis needs a value");
  for (const auto& s : smoothers) s.validate();
  if (!(objective_lo >= 0.0 && objective_lo <= objective_hi && objective_hi <= 1.0))
    throw UsageError("grid: objective range must satisfy 0 <= lo <= hi <= 1");
}

namespace {

metrics::ClipResult clip_result(const EvalClip& c, std::vector<peakdet::Peak> detections, double t_d) {
  return {c.annotation.clip_id, metrics::build_intervals(c.annotation, t_d), std::move(detections), t_d};
}

std::string smoother_name(const peakdet::SmootherSpec& s) {
  std::string out;
  for (int l : s.lengths) out += (out.empty() ? "" : "-") + std::to_string(l);
  return out;
}

}  // namespace

metrics::MetricsReport evaluate_detector(std::span<const EvalClip> clips, const peakdet::DetectorSpec& detector,
                                         double t_d) {
  std::vector<metrics::ClipResult> results;
  results.reserve(clips.size());
  for (const auto& c : clips) results.push_back(clip_result(c, peakdet::detect_vehicles(c.series, detector), t_d));
  return metrics::compute_curve(results, t_d);
}

std::size_t select_best(std::span<const GridCell> table) {
  if (table.empty()) throw UsageError("grid: empty score table");
  std::size_t best = 0;
  auto key = [&](std::size_t i) {
    const auto& c = table[i];
    return std::make_tuple(c.score, c.detector.smoother.total_taps(), c.detector.m_frac, c.detector.p_frac);
  };
  for (std::size_t i = 1; i < table.size(); ++i)
    if (key(i) < key(best)) best = i;
  return best;
}

GridResult grid_search(std::span<const EvalClip> tuning, const GridSpec& grid, double t_d, int jobs) {
  grid.validate();
  if (tuning.empty()) throw DataError("grid search: empty tuning set");
  GridResult result;
  for (const auto& s : grid.smoothers)
    for (double m : grid.m_fracs)
      for (double p : grid.p_fracs) result.table.push_back({{s, m, p}, 0.0});

  // Peaks depend on the smoother only; M and P just filter them. Every peak
  // has positive magnitude and prominence, so zero thresholds keep them all.
  struct Candidates {
    std::vector<std::vector<peakdet::Peak>> per_clip;
  };
  std::vector<Candidates> cands(grid.smoothers.size());
  parallel_for(grid.smoothers.size(), jobs, [&](std::size_t si) {
    const peakdet::DetectorSpec all{grid.smoothers[si], 0.0, 0.0};
    for (const auto& c : tuning) cands[si].per_clip.push_back(peakdet::detect_vehicles(c.series, all));
  });

  parallel_for(result.table.size(), jobs, [&](std::size_t i) {
    auto& cell = result.table[i];
    const std::size_t si = i / (grid.m_fracs.size() * grid.p_fracs.size());
    std::vector<metrics::ClipResult> results;
    for (std::size_t c = 0; c < tuning.size(); ++c) {
      std::vector<peakdet::Peak> kept;
      for (const auto& pk : cands[si].per_clip[c])
        if (pk.magnitude > cell.detector.m_frac * t_d || pk.prominence > cell.detector.p_frac * t_d) kept.push_back(pk);
      results.push_back(clip_result(tuning[c], std::move(kept), t_d));
    }
    cell.score = metrics::compute_curve(results, t_d).mean_abs_rvce(grid.objective_lo * t_d, grid.objective_hi * t_d);
  });
  result.best = select_best(result.table);
  return result;
}

void write_grid_csv(const std::filesystem::path& path, const GridResult& result) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "smoother,m_frac,p_frac,score,selected\n";
  char buf[160];
  for (std::size_t i = 0; i < result.table.size(); ++i) {
    const auto& c = result.table[i];
    std::snprintf(buf, sizeof buf, "%s,%.4f,%.4f,%.6f,%d\n", smoother_name(c.detector.smoother).c_str(),
                  c.detector.m_frac, c.detector.p_frac, c.score, i == result.best ? 1 : 0);
    out << buf;
  }
}

std::string Variant::name() const {
  switch (kind) {
    case VariantKind::Full: return "VCNN";
    case VariantKind::Stage1: return "VCNN_S1";
    case VariantKind::FullBand: return "VCNN_f0";
    case VariantKind::Deep: return "VCNN_deep";
    case VariantKind::ProminenceOnly: return "VCNN_PP" + std::to_string(std::lround(p_frac * 100.0));
  }
  return "?";
}

Variant Variant::parse(const std::string& name) {
  if (name == "VCNN") return {VariantKind::Full};
  if (name == "VCNN_S1") return {VariantKind::Stage1};
  if (name == "VCNN_f0") return {VariantKind::FullBand};
  if (name == "VCNN_deep") return {VariantKind::Deep};
  const std::string pp = "VCNN_PP";
  if (name.rfind(pp, 0) == 0 && name.size() > pp.size() && name.size() <= pp.size() + 2) {
    const std::string digits = name.substr(pp.size());
    if (std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; })) {
      const int pct = std::stoi(digits);
      if (pct > 0 && pct < 100) return {VariantKind::ProminenceOnly, pct / 100.0};
    }
  }
  throw UsageError("unknown variant '" + name + "' (VCNN, VCNN_S1, VCNN_f0, VCNN_PP<percent>, VCNN_deep)");
}

peakdet::DetectorSpec reference_detector(const Variant& v) {
  switch (v.kind) {
    case VariantKind::Stage1: return {{{7, 3}}, 0.45, 0.25};
    case VariantKind::FullBand: return {{{5, 3}}, 0.45, 0.20};
    case VariantKind::ProminenceOnly: return {{{5, 3}}, 1.0, v.p_frac};
    default: return {{{5, 3}}, 0.40, 0.20};
  }
}

metrics::MetricsReport count_report(std::span<const dataio::PassByAnnotation> truth, std::span<const long> estimates,
                                    double t_d) {
  if (truth.size() != estimates.size()) throw UsageError("count_report: clip counts differ");
  metrics::Counts c;
  std::size_t n_est = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto t = static_cast<long>(truth[i].count());
    const long e = std::max(0L, estimates[i]);
    c.tp += static_cast<std::size_t>(std::min(t, e));
    c.fp += static_cast<std::size_t>(std::max(e - t, 0L));
    c.fn += static_cast<std::size_t>(std::max(t - e, 0L));
    n_est += static_cast<std::size_t>(e);
  }
  metrics::MetricsReport r;
  for (const auto& a : truth) r.n_true += a.count();
  if (r.n_true == 0) throw DataError("count_report: no true vehicles in the evaluation set");
  const double n = static_cast<double>(r.n_true);
  const double v = metrics::rvce(r.n_true, n_est);
  for (double t_det : metrics::threshold_grid(t_d)) r.curve.push_back({t_det, c.tp / n, c.fp / n, c.fn / n, v});
  r.area_ptp = c.tp / n;
  r.efp = metrics::equal_false_point(r.curve);
  return r;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
  return splitmix64(seed * 0x9E3779B97F4A7C15ULL + salt);
}

distreg::TrainOptions seeded_options(distreg::TrainOptions opts, std::uint64_t seed) {
  opts.stage1.seed = derive_seed(seed, 11);
  opts.stage2.seed = derive_seed(seed, 12);
  return opts;
}

const metrics::MetricsReport& RunResult::report(const std::string& variant) const {
  for (const auto& [name, r] : reports)
    if (name == variant) return r;
  throw UsageError("no report for variant " + variant);
}

ExperimentData split_experiment_data(std::vector<dataio::LabeledClip> pool, std::vector<dataio::LabeledClip> test,
                                     const ExperimentConfig& config) {
  auto take = [&](const std::vector<std::string>& ids) {
    std::vector<dataio::LabeledClip> out;
    for (const auto& id : ids)
      for (auto& c : pool)
        if (c.clip.id == id) out.push_back(std::move(c));
    return out;
  };
  auto ids_of = [](const std::vector<dataio::LabeledClip>& v) {
    std::vector<std::string> ids;
    for (const auto& c : v) ids.push_back(c.clip.id);
    return ids;
  };

  ExperimentData data;
  if (test.empty()) {
    const auto s = dataio::split_dataset(ids_of(pool), config.train_ratio, config.seed);
    data.test = take(s.val_ids);
    auto rest = take(s.train_ids);
    pool = std::move(rest);
  } else {
    data.test = std::move(test);
  }
  if (config.tune) {
    const auto s = dataio::split_dataset(ids_of(pool), 1.0 - config.val_ratio, derive_seed(config.seed, 1));
    data.val = take(s.val_ids);
    data.train = take(s.train_ids);
  } else {
    data.train = std::move(pool);
  }
  if (data.train.empty() || data.test.empty()) throw DataError("experiment: empty training or test set");
  return data;
}

namespace {

struct Prepared {
  distreg::TrainingData train;
  std::vector<features::FeatureMatrix> val;
  std::vector<features::FeatureMatrix> test;
  std::vector<dataio::DistanceSeries> test_targets;
};

Prepared prepare_all(const ExperimentData& data, const distreg::RegressionConfig& rc, int jobs) {
  Prepared p;
  p.train = distreg::prepare(data.train, rc, jobs);
  auto v = distreg::prepare(data.val, rc, jobs);
  p.val = std::move(v.features);
  auto t = distreg::prepare(data.test, rc, jobs);
  p.test = std::move(t.features);
  p.test_targets = std::move(t.targets);
  return p;
}

bool needs_full_band(const ExperimentConfig& c) {
  return std::any_of(c.variants.begin(), c.variants.end(), [](const Variant& v) { return v.kind == VariantKind::FullBand; });
}

distreg::RegressionConfig full_band(distreg::RegressionConfig rc) {
  rc.spectrogram.f_min = 0.0;
  return rc;
}

std::vector<EvalClip> pair_up(std::vector<dataio::DistanceSeries> series, std::span<const dataio::LabeledClip> clips) {
  std::vector<EvalClip> out;
  for (std::size_t i = 0; i < clips.size(); ++i) out.push_back({std::move(series[i]), clips[i].annotation});
  return out;
}

RunResult run_prepared(const ExperimentConfig& config, const ExperimentData& data, const Prepared& main,
                       const Prepared* band, std::uint64_t seed) {
  const double t_d = config.regression.t_d;
  RunResult r;
  r.seed = seed;
  const auto pipeline = distreg::train_pipeline(config.regression, main.train, seeded_options(config.train, seed));

  std::vector<dataio::DistanceSeries> coarse, fine;
  for (const auto& f : main.test) {
    auto p = distreg::predict_both(pipeline, f);
    coarse.push_back(std::move(p.coarse));
    fine.push_back(std::move(p.fine));
  }
  r.stage1_mse = distreg::pooled_mse(coarse, main.test_targets);
  r.stage2_mse = distreg::pooled_mse(fine, main.test_targets);
  const auto fine_eval = pair_up(fine, data.test);
  const auto coarse_eval = pair_up(coarse, data.test);

  peakdet::DetectorSpec full = config.detector;
  if (config.tune) {
    if (data.val.empty()) throw DataError("experiment: tuning requested without validation clips");
    std::vector<dataio::DistanceSeries> val_fine;
    for (const auto& f : main.val) val_fine.push_back(distreg::predict_both(pipeline, f).fine);
    r.grid = grid_search(pair_up(std::move(val_fine), data.val), config.grid, t_d);
    full = r.grid->best_detector();
  }

  for (const auto& v : config.variants) {
    metrics::MetricsReport rep;
    switch (v.kind) {
      case VariantKind::Full:
        rep = evaluate_detector(fine_eval, full, t_d);
        break;
      case VariantKind::Stage1:
        rep = evaluate_detector(coarse_eval, reference_detector(v), t_d);
        break;
      case VariantKind::ProminenceOnly:
        rep = evaluate_detector(fine_eval, reference_detector(v), t_d);
        break;
      case VariantKind::FullBand: {
        const auto rc = full_band(config.regression);
        const auto p0 = distreg::train_pipeline(rc, band->train, seeded_options(config.train, seed));
        std::vector<dataio::DistanceSeries> s0;
        for (const auto& f : band->test) s0.push_back(distreg::predict_both(p0, f).fine);
        rep = evaluate_detector(pair_up(std::move(s0), data.test), reference_detector(v), t_d);
        break;
      }
      case VariantKind::Deep: {
        auto spec = config.counter.spec;
        spec.seed = derive_seed(seed, kCounterSalt);
        std::vector<std::vector<double>> xs;
        std::vector<double> ys;
        for (std::size_t i = 0; i < main.train.features.size(); ++i) {
          const auto p = distreg::predict_both(pipeline, main.train.features[i]);
          xs.push_back(config.counter.use_stage2 ? p.fine.values : p.coarse.values);
          ys.push_back(static_cast<double>(data.train[i].annotation.count()));
        }
        const auto counter = deepcount::train_counter(spec, xs, ys);
        std::vector<long> est;
        std::vector<dataio::PassByAnnotation> truth;
        for (std::size_t i = 0; i < data.test.size(); ++i) {
          est.push_back(deepcount::predict_count(counter, config.counter.use_stage2 ? fine[i].values : coarse[i].values));
          truth.push_back(data.test[i].annotation);
        }
        rep = count_report(truth, est, t_d);
        break;
      }
    }
    r.reports.emplace_back(v.name(), std::move(rep));
  }
  return r;
}

void validate_config(const ExperimentConfig& c) {
  if (c.variants.empty()) throw UsageError("experiment: no variants selected");
  if (c.runs < 1) throw UsageError("experiment: runs must be >= 1");
  if (!(c.confidence > 0.0 && c.confidence < 1.0)) throw UsageError("experiment: confidence must lie in (0, 1)");
  c.detector.validate();
  if (c.tune) c.grid.validate();
}

}  // namespace

RunResult run_once(const ExperimentConfig& config, const ExperimentData& data, std::uint64_t seed) {
  validate_config(config);
  const Prepared main = prepare_all(data, config.regression, config.jobs);
  std::optional<Prepared> band;
  if (needs_full_band(config)) band = prepare_all(data, full_band(config.regression), config.jobs);
  return run_prepared(config, data, main, band ? &*band : nullptr, seed);
}

MultiRunResult multi_run(const ExperimentConfig& config, const ExperimentData& data) {
  validate_config(config);
  const Prepared main = prepare_all(data, config.regression, config.jobs);
  std::optional<Prepared> band;
  if (needs_full_band(config)) band = prepare_all(data, full_band(config.regression), config.jobs);

  const auto n = static_cast<std::size_t>(config.runs);
  std::vector<std::optional<RunResult>> slots(n);
  std::vector<std::optional<std::string>> errors(n);
  auto seed_of = [&](std::size_t i) { return config.identical_seeds ? config.seed : config.seed + i; };
  parallel_for(n, config.jobs, [&](std::size_t i) {
    try {
      slots[i] = run_prepared(config, data, main, band ? &*band : nullptr, seed_of(i));
    } catch (const NumericError& e) {
      errors[i] = e.what();
    }
  });

  MultiRunResult out;
  for (std::size_t i = 0; i < n; ++i) {
    if (slots[i])
      out.runs.push_back(std::move(*slots[i]));
    else
      out.failures.push_back({seed_of(i), *errors[i]});
  }
  if (out.runs.empty()) throw NumericError("experiment: every run failed; first error: " + out.failures.front().message);

  if (out.runs.size() >= 2) {
    for (const auto& v : config.variants) {
      const std::string name = v.name();
      std::vector<BandPoint> band_points;
      const auto& first = out.runs.front().report(name).curve;
      for (std::size_t g = 0; g < first.size(); ++g) {
        std::vector<double> values;
        for (const auto& run : out.runs) values.push_back(run.report(name).curve[g].rvce);
        band_points.push_back({first[g].t_det, metrics::confidence_interval(values, config.confidence)});
      }
      out.bands.emplace_back(name, std::move(band_points));
    }
  }
  return out;
}

void write_outputs(const std::filesystem::path& dir, const MultiRunResult& result) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir.string());

  std::ofstream summary(dir / "summary.csv");
  if (!summary) throw DataError("cannot write " + (dir / "summary.csv").string());
  summary << "run,seed,status,variant,area_ptp,efp_tdet,efp_value,mean_abs_rvce_upper_half,stage1_mse,stage2_mse\n";
  char buf[256];
  for (std::size_t i = 0; i < result.runs.size(); ++i) {
    const auto& run = result.runs[i];
    char name[32];
    std::snprintf(name, sizeof name, "run_%03zu", i);
    const auto run_dir = dir / name;
    std::filesystem::create_directories(run_dir, ec);
    if (ec) throw DataError("cannot create " + run_dir.string());
    if (run.grid) write_grid_csv(run_dir / "grid.csv", *run.grid);
    for (const auto& [variant, rep] : run.reports) {
      metrics::write_curve_csv(run_dir / (variant + "_curve.csv"), rep);
      metrics::write_summary_csv(run_dir / (variant + "_summary.csv"), rep);
      const double t_d = rep.curve.back().t_det;
      std::string efp = ",";
      if (rep.efp) {
        char e[64];
        std::snprintf(e, sizeof e, "%.6f,%.6f", rep.efp->t_det, rep.efp->value);
        efp = e;
      }
      std::snprintf(buf, sizeof buf, "%zu,%llu,ok,%s,%.6f,%s,%.6f,%.8f,%.8f\n", i,
                    static_cast<unsigned long long>(run.seed), variant.c_str(), rep.area_ptp, efp.c_str(),
                    rep.mean_abs_rvce(0.5 * t_d, t_d), run.stage1_mse, run.stage2_mse);
      summary << buf;
    }
  }
  for (const auto& f : result.failures) {
    std::string msg = f.message;
    std::replace(msg.begin(), msg.end(), ',', ';');
    summary << "," << static_cast<unsigned long long>(f.seed) << ",failed: " << msg << ",,,,,,,\n";
  }

  std::ofstream bands(dir / "bands.csv");
  if (!bands) throw DataError("cannot write " + (dir / "bands.csv").string());
  bands << "variant,t_det,mean_rvce,low,high\n";
  for (const auto& [variant, pts] : result.bands)
    for (const auto& p : pts) {
      std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f,%.6f,%.6f\n", variant.c_str(), p.t_det, p.rvce.mean, p.rvce.low,
                    p.rvce.high);
      bands << buf;
    }
}

}  // namespace avc::experiments
