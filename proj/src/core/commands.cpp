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

#include "commands.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json_util.hpp"
#include "parallel.hpp"

namespace avc::commands {

namespace {

std::vector<dataio::LabeledClip> subset(const std::vector<dataio::LabeledClip>& clips,
                                        const std::vector<std::string>& ids) {
  std::vector<dataio::LabeledClip> out;
  for (const auto& id : ids)
    for (const auto& c : clips)
      if (c.clip.id == id) out.push_back(c);
  return out;
}

std::vector<std::string> ids_of(const std::vector<dataio::LabeledClip>& clips) {
  std::vector<std::string> ids;
  for (const auto& c : clips) ids.push_back(c.clip.id);
  return ids;
}

const dataio::DistanceSeries& counter_input(const ModelBundle& m, const distreg::Prediction& p) {
  return m.counter_uses_stage2 ? p.fine : p.coarse;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace

void save_bundle(const std::filesystem::path& dir, const ModelBundle& bundle) {
  distreg::save_pipeline(dir, bundle.pipeline);
  nlohmann::json j{{"detector", config::to_json(bundle.detector)}, {"counter", nullptr}};
  if (bundle.counter) {
    deepcount::save_counter(dir / "counter.ckpt", *bundle.counter);
    j["counter"] = {{"input", bundle.counter_uses_stage2 ? "stage2" : "stage1"}};
  }
  json_util::save_file(dir / "model.json", j);
}

ModelBundle load_bundle(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw DataError("model directory not found: " + dir.string());
  ModelBundle b;
  b.pipeline = distreg::load_pipeline(dir);
  try {
    const auto j = json_util::load_file(dir / "model.json");
    json_util::reject_unknown(j, {"detector", "counter"}, "model.json");
    b.detector = config::detector_from_json(j.at("detector"), b.detector);
    if (j.contains("counter") && !j.at("counter").is_null()) {
      const auto& c = j.at("counter");
      json_util::reject_unknown(c, {"input"}, "model.json counter");
      const std::string input = c.value("input", std::string("stage2"));
      if (input != "stage1" && input != "stage2") throw UsageError("counter input must be stage1 or stage2");
      b.counter_uses_stage2 = input == "stage2";
      b.counter = deepcount::load_counter(dir / "counter.ckpt");
    }
  } catch (const UsageError& e) {
    throw DataError(std::string("model.json: ") + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("model.json: ") + e.what());
  }
  return b;
}

synthgen::CorpusSummary synth(const config::ToolConfig& cfg, const std::filesystem::path& out_dir, int jobs) {
  if (cfg.n_clips == 0) throw UsageError("corpus: n_clips must be positive");
  return synthgen::generate_corpus(cfg.scene, cfg.n_clips, out_dir, jobs);
}

std::size_t extract(const config::ToolConfig& cfg, const std::filesystem::path& audio_dir,
                    const std::filesystem::path& out_dir, int jobs) {
  const auto files = dataio::list_wav_files(audio_dir);
  if (files.empty()) throw DataError("no .wav files in " + audio_dir.string());
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create " + out_dir.string());
  const Matrix fb = features::mel_filterbank(cfg.regression.spectrogram);
  parallel_for(files.size(), jobs, [&](std::size_t i) {
    const auto clip = dataio::load_clip(files[i]);
    auto fm = features::stack_context(features::hf_lms(clip, cfg.regression.spectrogram, fb), cfg.regression.context.q,
                                      cfg.regression.context.stride);
    fm.clip_id = clip.id;
    features::write_feature_cache(out_dir / (clip.id + ".feat"), fm);
  });
  return files.size();
}

ModelBundle train(const config::ToolConfig& cfg, const std::vector<dataio::LabeledClip>& clips, int jobs) {
  if (clips.empty()) throw DataError("train: no training clips");
  const auto data = distreg::prepare(clips, cfg.regression, jobs);
  ModelBundle b;
  b.pipeline = distreg::train_pipeline(cfg.regression, data, experiments::seeded_options(cfg.train, cfg.seed));
  b.detector = cfg.detector;
  if (cfg.counter.enabled) {
    auto spec = cfg.counter.spec;
    spec.seed = experiments::derive_seed(cfg.seed, experiments::kCounterSalt);
    b.counter_uses_stage2 = cfg.counter.use_stage2;
    std::vector<std::vector<double>> xs;
    std::vector<double> ys;
    for (std::size_t i = 0; i < clips.size(); ++i) {
      const auto p = distreg::predict_both(b.pipeline, data.features[i]);
      xs.push_back(counter_input(b, p).values);
      ys.push_back(static_cast<double>(clips[i].annotation.count()));
    }
    b.counter = deepcount::train_counter(spec, xs, ys);
  }
  return b;
}

std::vector<ClipPrediction> predict_dir(const ModelBundle& model, const std::filesystem::path& audio_dir, int jobs) {
  const auto files = dataio::list_wav_files(audio_dir);
  if (files.empty()) throw DataError("no .wav files in " + audio_dir.string());
  std::vector<ClipPrediction> out(files.size());
  parallel_for(files.size(), jobs, [&](std::size_t i) {
    const auto clip = dataio::load_clip(files[i]);
    out[i] = {clip.id, distreg::predict_both(model.pipeline, clip)};
  });
  return out;
}

void write_predictions_csv(const std::filesystem::path& path, const std::vector<ClipPrediction>& predictions) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "clip_id,frame,t_s,d_hat_s\n";
  char buf[96];
  for (const auto& p : predictions) {
    const auto& s = p.series.fine;
    for (std::size_t m = 0; m < s.size(); ++m) {
      std::snprintf(buf, sizeof buf, ",%zu,%.6f,%.6f\n", m, s.time(m), s.values[m]);
      out << p.clip_id << buf;
    }
  }
}

CountMethod count_method_from_string(const std::string& name) {
  if (name == "peaks") return CountMethod::Peaks;
  if (name == "deep") return CountMethod::Deep;
  throw UsageError("unknown count method '" + name + "' (peaks, deep)");
}

CountResult count(const ModelBundle& model, const std::vector<ClipPrediction>& predictions, CountMethod method,
                  std::optional<double> t_det) {
  const double thr = t_det.value_or(model.t_d());
  if (!(thr > 0.0 && std::isfinite(thr))) throw UsageError("--tdet must be a positive number of seconds");
  if (method == CountMethod::Deep && !model.counter) throw UsageError("model has no direct counter; train with counter.enabled");
  CountResult r;
  for (const auto& p : predictions) {
    long n = 0;
    if (method == CountMethod::Deep) {
      n = deepcount::predict_count(*model.counter, counter_input(model, p.series).values);
    } else {
      const auto dets = peakdet::detect_vehicles(p.series.fine, model.detector);
      n = static_cast<long>(peakdet::count_at_threshold(dets, thr, model.t_d()));
    }
    r.per_clip.emplace_back(p.clip_id, n);
    r.total += n;
  }
  return r;
}

std::string format_counts(const CountResult& counts) {
  std::ostringstream os;
  os << "clip_id,count\n";
  for (const auto& [id, n] : counts.per_clip) os << id << ',' << n << '\n';
  os << "total," << counts.total << '\n';
  return os.str();
}

EvalSummary evaluate(const ModelBundle& model, const std::filesystem::path& data_dir,
                     const std::filesystem::path& report_dir, int jobs) {
  const auto clips = dataio::load_dataset(data_dir);
  if (clips.empty()) throw DataError("no clips in " + data_dir.string());
  const double t_d = model.t_d();
  std::vector<distreg::Prediction> preds(clips.size());
  parallel_for(clips.size(), jobs, [&](std::size_t i) { preds[i] = distreg::predict_both(model.pipeline, clips[i].clip); });

  EvalSummary s;
  std::vector<dataio::DistanceSeries> refs, coarse, fine;
  std::vector<metrics::ClipResult> results;
  std::vector<peakdet::ClipDetections> dets;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    const auto& p = preds[i];
    refs.push_back(dataio::reference_distance(clips[i].annotation, p.fine.size(), p.fine.frame_period, t_d));
    coarse.push_back(p.coarse);
    fine.push_back(p.fine);
    auto peaks = peakdet::detect_vehicles(p.fine, model.detector);
    dets.push_back({clips[i].clip.id, t_d, peaks});
    results.push_back({clips[i].clip.id, metrics::build_intervals(clips[i].annotation, t_d), std::move(peaks), t_d});
  }
  s.stage1_mse = distreg::pooled_mse(coarse, refs);
  s.stage2_mse = distreg::pooled_mse(fine, refs);
  s.peaks = metrics::compute_curve(results, t_d);

  std::error_code ec;
  std::filesystem::create_directories(report_dir, ec);
  if (ec) throw DataError("cannot create " + report_dir.string());
  metrics::write_curve_csv(report_dir / "curve.csv", s.peaks);
  metrics::write_summary_csv(report_dir / "summary.csv", s.peaks);
  peakdet::write_detections_csv(report_dir / "detections.csv", dets);
  {
    std::ofstream out(report_dir / "mse.csv");
    if (!out) throw DataError("cannot write mse.csv");
    out << "stage1_mse,stage2_mse\n" << fmt("%.8f", s.stage1_mse) << ',' << fmt("%.8f", s.stage2_mse) << '\n';
  }
  if (model.counter) {
    std::vector<long> est;
    std::vector<dataio::PassByAnnotation> truth;
    for (std::size_t i = 0; i < clips.size(); ++i) {
      est.push_back(deepcount::predict_count(*model.counter, counter_input(model, preds[i]).values));
      truth.push_back(clips[i].annotation);
    }
    s.deep = experiments::count_report(truth, est, t_d);
    metrics::write_curve_csv(report_dir / "deep_curve.csv", *s.deep);
    metrics::write_summary_csv(report_dir / "deep_summary.csv", *s.deep);
  }
  return s;
}

experiments::GridResult gridsearch(const config::ToolConfig& cfg, const std::filesystem::path& data_dir,
                                   const std::optional<std::filesystem::path>& model_dir, int jobs) {
  const auto clips = dataio::load_dataset(data_dir);
  std::vector<dataio::LabeledClip> tuning;
  ModelBundle model;
  if (model_dir) {
    model = load_bundle(*model_dir);
    tuning = clips;
  } else {
    const auto split = dataio::split_dataset(ids_of(clips), 1.0 - cfg.val_ratio, cfg.seed);
    model = train(cfg, subset(clips, split.train_ids), jobs);
    tuning = subset(clips, split.val_ids);
  }
  std::vector<experiments::EvalClip> eval(tuning.size());
  parallel_for(tuning.size(), jobs, [&](std::size_t i) {
    eval[i] = {distreg::predict_both(model.pipeline, tuning[i].clip).fine, tuning[i].annotation};
  });
  return experiments::grid_search(eval, cfg.grid, model.t_d(), jobs);
}

std::string format_grid(const experiments::GridResult& grid) {
  std::ostringstream os;
  os << "smoother  M      P      mean|RVCE|%\n";
  for (std::size_t i = 0; i < grid.table.size(); ++i) {
    const auto& c = grid.table[i];
    std::string sm;
    for (int l : c.detector.smoother.lengths) sm += (sm.empty() ? "" : ",") + std::to_string(l);
    char buf[128];
    std::snprintf(buf, sizeof buf, "(%-7s) %4.0f%%  %4.0f%%  %8.3f%s\n", sm.c_str(), c.detector.m_frac * 100,
                  c.detector.p_frac * 100, c.score, i == grid.best ? "  <- best" : "");
    os << buf;
  }
  return os.str();
}

experiments::MultiRunResult experiment(const config::ToolConfig& cfg, const std::filesystem::path& out_dir, int jobs) {
  if (cfg.experiment.train_dir.empty()) throw UsageError("experiment: config must set experiment.train_dir");
  auto pool = dataio::load_dataset(cfg.experiment.train_dir);
  std::vector<dataio::LabeledClip> test;
  if (!cfg.experiment.test_dir.empty()) test = dataio::load_dataset(cfg.experiment.test_dir);
  const auto ecfg = cfg.experiment_config(jobs);
  const auto data = experiments::split_experiment_data(std::move(pool), std::move(test), ecfg);
  auto result = experiments::multi_run(ecfg, data);
  experiments::write_outputs(out_dir, result);
  json_util::save_file(out_dir / "config.json", cfg.to_json());
  return result;
}

std::string format_experiment(const experiments::MultiRunResult& result) {
  std::ostringstream os;
  os << "runs completed: " << result.runs.size() << ", failed: " << result.failures.size() << '\n';
  if (result.runs.empty()) return os.str();
  double s1 = 0, s2 = 0;
  for (const auto& r : result.runs) {
    s1 += r.stage1_mse;
    s2 += r.stage2_mse;
  }
  const double n = static_cast<double>(result.runs.size());
  os << "mean test MSE: stage1 " << fmt("%.6f", s1 / n) << ", stage2 " << fmt("%.6f", s2 / n) << '\n';
  os << "variant     area_ptp  mean|RVCE|% (upper half of T_det)\n";
  for (const auto& [name, rep] : result.runs.front().reports) {
    double area = 0, rv = 0;
    for (const auto& r : result.runs) {
      const auto& x = r.report(name);
      area += x.area_ptp;
      rv += x.mean_abs_rvce(0.5 * x.curve.back().t_det, x.curve.back().t_det);
    }
    char buf[128];
    std::snprintf(buf, sizeof buf, "%-11s %8.4f  %8.3f\n", name.c_str(), area / n, rv / n);
    os << buf;
  }
  return os.str();
}

}  // namespace avc::commands
