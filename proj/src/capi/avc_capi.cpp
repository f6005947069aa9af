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

#include "avc/avc.h"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <new>
#include <optional>
#include <string>

#include "commands.hpp"
#include "parallel.hpp"

struct avc_config {
  avc::config::ToolConfig value;
};
struct avc_model {
  avc::commands::ModelBundle value;
};
struct avc_clip {
  avc::dataio::AudioClip value;
};
struct avc_series {
  avc::dataio::DistanceSeries value;
};

namespace {

thread_local std::string g_last_error;

template <typename Fn>
avc_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return AVC_OK;
  } catch (const avc::Error& e) {
    g_last_error = e.what();
    return static_cast<avc_status>(e.kind());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return AVC_ERR_DATA;
  } catch (const std::filesystem::filesystem_error& e) {
    g_last_error = e.what();
    return AVC_ERR_DATA;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return AVC_ERR_DATA;
  }
}

void need(const void* p, const char* what) {
  if (p == nullptr) throw avc::UsageError(std::string(what) + " must not be NULL");
}

char* dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

int jobs_or_default(int jobs) { return jobs > 0 ? jobs : avc::default_jobs(); }

}  // namespace

extern "C" {

const char* avc_version(void) { return "1.0.0"; }
const char* avc_last_error(void) { return g_last_error.c_str(); }
void avc_free_string(char* s) { std::free(s); }

avc_status avc_config_load(const char* path, avc_config** out) {
  return guarded([&] {
    need(out, "out");
    *out = nullptr;
    auto cfg = std::make_unique<avc_config>();
    cfg->value = avc::config::load(path ? std::filesystem::path(path) : std::filesystem::path());
    *out = cfg.release();
  });
}

void avc_config_free(avc_config* cfg) { delete cfg; }

avc_status avc_config_to_json(const avc_config* cfg, char** json) {
  return guarded([&] {
    need(cfg, "cfg");
    need(json, "json");
    *json = dup(cfg->value.to_json().dump(2));
  });
}

avc_status avc_config_seed(const avc_config* cfg, uint64_t* seed) {
  return guarded([&] {
    need(cfg, "cfg");
    need(seed, "seed");
    *seed = cfg->value.seed;
  });
}

avc_status avc_clip_load(const char* path, avc_clip** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = nullptr;
    auto c = std::make_unique<avc_clip>();
    c->value = avc::dataio::load_clip(path);
    *out = c.release();
  });
}

void avc_clip_free(avc_clip* clip) { delete clip; }

avc_status avc_clip_info(const avc_clip* clip, size_t* n_samples, double* sample_rate) {
  return guarded([&] {
    need(clip, "clip");
    if (n_samples) *n_samples = clip->value.samples.size();
    if (sample_rate) *sample_rate = clip->value.sample_rate;
  });
}

avc_status avc_synth(const avc_config* cfg, const char* out_dir, int jobs, size_t* n_clips, size_t* n_vehicles) {
  return guarded([&] {
    need(cfg, "cfg");
    need(out_dir, "out_dir");
    const auto s = avc::commands::synth(cfg->value, out_dir, jobs_or_default(jobs));
    if (n_clips) *n_clips = s.clips;
    if (n_vehicles) *n_vehicles = s.vehicles;
  });
}

avc_status avc_extract(const avc_config* cfg, const char* audio_dir, const char* out_dir, int jobs, size_t* n_files) {
  return guarded([&] {
    need(cfg, "cfg");
    need(audio_dir, "audio_dir");
    need(out_dir, "out_dir");
    const auto n = avc::commands::extract(cfg->value, audio_dir, out_dir, jobs_or_default(jobs));
    if (n_files) *n_files = n;
  });
}

avc_status avc_train(const avc_config* cfg, const char* data_dir, const char* model_dir, int jobs) {
  return guarded([&] {
    need(cfg, "cfg");
    need(data_dir, "data_dir");
    need(model_dir, "model_dir");
    const auto clips = avc::dataio::load_dataset(data_dir);
    const auto bundle = avc::commands::train(cfg->value, clips, jobs_or_default(jobs));
    avc::commands::save_bundle(model_dir, bundle);
  });
}

avc_status avc_model_load(const char* model_dir, avc_model** out) {
  return guarded([&] {
    need(model_dir, "model_dir");
    need(out, "out");
    *out = nullptr;
    auto m = std::make_unique<avc_model>();
    m->value = avc::commands::load_bundle(model_dir);
    *out = m.release();
  });
}

void avc_model_free(avc_model* model) { delete model; }

avc_status avc_model_t_d(const avc_model* model, double* t_d) {
  return guarded([&] {
    need(model, "model");
    need(t_d, "t_d");
    *t_d = model->value.t_d();
  });
}

avc_status avc_model_has_counter(const avc_model* model, int* has_counter) {
  return guarded([&] {
    need(model, "model");
    need(has_counter, "has_counter");
    *has_counter = model->value.counter ? 1 : 0;
  });
}

avc_status avc_predict_clip(const avc_model* model, const avc_clip* clip, avc_series** out) {
  return guarded([&] {
    need(model, "model");
    need(clip, "clip");
    need(out, "out");
    *out = nullptr;
    auto s = std::make_unique<avc_series>();
    s->value = avc::distreg::predict_distance(model->value.pipeline, clip->value);
    *out = s.release();
  });
}

void avc_series_free(avc_series* series) { delete series; }

avc_status avc_series_values(const avc_series* series, const double** values, size_t* n, double* frame_period) {
  return guarded([&] {
    need(series, "series");
    if (values) *values = series->value.values.data();
    if (n) *n = series->value.values.size();
    if (frame_period) *frame_period = series->value.frame_period;
  });
}

avc_status avc_predict_dir(const avc_model* model, const char* audio_dir, const char* out_csv, int jobs) {
  return guarded([&] {
    need(model, "model");
    need(audio_dir, "audio_dir");
    need(out_csv, "out_csv");
    const auto preds = avc::commands::predict_dir(model->value, audio_dir, jobs_or_default(jobs));
    avc::commands::write_predictions_csv(out_csv, preds);
  });
}

avc_status avc_count_dir(const avc_model* model, const char* audio_dir, const char* method, double t_det, int jobs,
                         char** report, long* total) {
  return guarded([&] {
    need(model, "model");
    need(audio_dir, "audio_dir");
    const auto m = avc::commands::count_method_from_string(method ? method : "peaks");
    const auto preds = avc::commands::predict_dir(model->value, audio_dir, jobs_or_default(jobs));
    const auto r = avc::commands::count(model->value, preds, m,
                                        t_det > 0.0 ? std::optional<double>(t_det) : std::nullopt);
    if (report) *report = dup(avc::commands::format_counts(r));
    if (total) *total = r.total;
  });
}

avc_status avc_eval(const avc_model* model, const char* data_dir, const char* report_dir, int jobs, double* area_ptp,
                    char** summary) {
  return guarded([&] {
    need(model, "model");
    need(data_dir, "data_dir");
    need(report_dir, "report_dir");
    const auto s = avc::commands::evaluate(model->value, data_dir, report_dir, jobs_or_default(jobs));
    if (area_ptp) *area_ptp = s.peaks.area_ptp;
    if (summary) {
      char buf[256];
      const double t_d = model->value.t_d();
      std::string text;
      std::snprintf(buf, sizeof buf, "vehicles: %zu\narea_ptp: %.4f\n", s.peaks.n_true, s.peaks.area_ptp);
      text += buf;
      if (s.peaks.efp)
        std::snprintf(buf, sizeof buf, "efp: %.4f at t_det %.4f s\n", s.peaks.efp->value, s.peaks.efp->t_det);
      else
        std::snprintf(buf, sizeof buf, "efp: none\n");
      text += buf;
      std::snprintf(buf, sizeof buf, "mean |rvce| (t_det in [t_d/2, t_d]): %.3f%%\nmse stage1: %.6f\nmse stage2: %.6f\n",
                    s.peaks.mean_abs_rvce(0.5 * t_d, t_d), s.stage1_mse, s.stage2_mse);
      text += buf;
      if (s.deep) {
        std::snprintf(buf, sizeof buf, "deep counter rvce: %.3f%%\n", s.deep->curve.front().rvce);
        text += buf;
      }
      *summary = dup(text);
    }
  });
}

avc_status avc_gridsearch(const avc_config* cfg, const char* data_dir, const char* model_dir, const char* out_csv,
                          int jobs, char** table) {
  return guarded([&] {
    need(cfg, "cfg");
    need(data_dir, "data_dir");
    std::optional<std::filesystem::path> model;
    if (model_dir) model = model_dir;
    const auto g = avc::commands::gridsearch(cfg->value, data_dir, model, jobs_or_default(jobs));
    if (out_csv) avc::experiments::write_grid_csv(out_csv, g);
    if (table) *table = dup(avc::commands::format_grid(g));
  });
}

avc_status avc_experiment(const avc_config* cfg, const char* out_dir, int jobs, char** summary) {
  return guarded([&] {
    need(cfg, "cfg");
    const std::filesystem::path dir = out_dir ? std::filesystem::path(out_dir) : cfg->value.experiment.output_dir;
    const auto r = avc::commands::experiment(cfg->value, dir, jobs_or_default(jobs));
    if (summary) *summary = dup(avc::commands::format_experiment(r));
  });
}

}  // extern "C"
