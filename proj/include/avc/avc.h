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

#ifndef AVC_AVC_H
#define AVC_AVC_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define AVC_API __declspec(dllexport)
#else
#define AVC_API __attribute__((visibility("default")))
#endif

/* Every fallible call returns one of these. On failure avc_last_error()
   holds a one-line message for the calling thread. */
typedef enum {
  AVC_OK = 0,
  AVC_ERR_USAGE = 1,   /* bad arguments or configuration */
  AVC_ERR_DATA = 2,    /* unreadable or inconsistent input files */
  AVC_ERR_NUMERIC = 3  /* training diverged */
} avc_status;

typedef struct avc_config avc_config;
typedef struct avc_model avc_model;
typedef struct avc_clip avc_clip;
typedef struct avc_series avc_series;

AVC_API const char* avc_version(void);
AVC_API const char* avc_last_error(void);
/* Frees strings returned through char** out-parameters. */
AVC_API void avc_free_string(char* s);

/* Loads a JSON configuration. A NULL path gives the defaults. AVC_SEED in
   the environment overrides the "seed" key. */
AVC_API avc_status avc_config_load(const char* path, avc_config** out);
AVC_API void avc_config_free(avc_config* cfg);
AVC_API avc_status avc_config_to_json(const avc_config* cfg, char** json);
AVC_API avc_status avc_config_seed(const avc_config* cfg, uint64_t* seed);

AVC_API avc_status avc_clip_load(const char* path, avc_clip** out);
AVC_API void avc_clip_free(avc_clip* clip);
AVC_API avc_status avc_clip_info(const avc_clip* clip, size_t* n_samples, double* sample_rate);

/* Writes a synthetic corpus (WAV files, annotations.csv, manifest.csv). */
AVC_API avc_status avc_synth(const avc_config* cfg, const char* out_dir, int jobs, size_t* n_clips,
                             size_t* n_vehicles);

/* One feature cache file per WAV in audio_dir. */
AVC_API avc_status avc_extract(const avc_config* cfg, const char* audio_dir, const char* out_dir, int jobs,
                               size_t* n_files);

/* Trains on every clip of a labelled directory and writes a model directory. */
AVC_API avc_status avc_train(const avc_config* cfg, const char* data_dir, const char* model_dir, int jobs);

AVC_API avc_status avc_model_load(const char* model_dir, avc_model** out);
AVC_API void avc_model_free(avc_model* model);
AVC_API avc_status avc_model_t_d(const avc_model* model, double* t_d);
AVC_API avc_status avc_model_has_counter(const avc_model* model, int* has_counter);

/* Stage-2 distance series of one clip. */
AVC_API avc_status avc_predict_clip(const avc_model* model, const avc_clip* clip, avc_series** out);
AVC_API void avc_series_free(avc_series* series);
AVC_API avc_status avc_series_values(const avc_series* series, const double** values, size_t* n,
                                     double* frame_period);

/* Writes `clip_id,frame,t_s,d_hat_s` for every WAV in audio_dir. */
AVC_API avc_status avc_predict_dir(const avc_model* model, const char* audio_dir, const char* out_csv, int jobs);

/* Counts vehicles per clip. method is "peaks" or "deep"; t_det <= 0 selects
   t_d. *report receives `clip_id,count` rows and a final `total,N` row. */
AVC_API avc_status avc_count_dir(const avc_model* model, const char* audio_dir, const char* method, double t_det,
                                 int jobs, char** report, long* total);

/* Writes metric CSVs for a labelled directory into report_dir. */
AVC_API avc_status avc_eval(const avc_model* model, const char* data_dir, const char* report_dir, int jobs,
                            double* area_ptp, char** summary);

/* Detector grid search. model_dir may be NULL (train on a split of
   data_dir first). out_csv may be NULL. */
AVC_API avc_status avc_gridsearch(const avc_config* cfg, const char* data_dir, const char* model_dir,
                                  const char* out_csv, int jobs, char** table);

/* Multi-run protocol. out_dir NULL uses the config's experiment.output_dir. */
AVC_API avc_status avc_experiment(const avc_config* cfg, const char* out_dir, int jobs, char** summary);

#ifdef __cplusplus
}
#endif

#endif
