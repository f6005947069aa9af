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

// Command-line front end. Talks to the library only through avc/avc.h.

#include <avc/avc.h>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

namespace {

struct ConfigHandle {
  avc_config* p = nullptr;
  ~ConfigHandle() { avc_config_free(p); }
};
struct ModelHandle {
  avc_model* p = nullptr;
  ~ModelHandle() { avc_model_free(p); }
};
struct Text {
  char* p = nullptr;
  ~Text() { avc_free_string(p); }
};

// Thrown to unwind with a library status.
struct Failed {
  avc_status status;
};

void check(avc_status s) {
  if (s != AVC_OK) throw Failed{s};
}

const char* opt(const std::string& s) { return s.empty() ? nullptr : s.c_str(); }

void load_config(const std::string& path, ConfigHandle& cfg) { check(avc_config_load(opt(path), &cfg.p)); }

void write_text(const std::string& path, const char* text) {
  std::ofstream out(path);
  if (!out) {
    std::fprintf(stderr, "avc: error: cannot write %s\n", path.c_str());
    throw Failed{AVC_ERR_DATA};
  }
  out << text;
}

std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acoustic vehicle counting: distance regression, peak-based counting and evaluation."};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(avc_version()));
  int jobs = 0;
  auto add_jobs = [&](CLI::App* sub) {
    sub->add_option("--jobs,-j", jobs, "Worker threads for per-clip work (0 = all cores)")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
  };

  std::string cfg_path, out, audio, data, model, method = "peaks";
  std::optional<double> tdet;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic labelled corpus");
  synth->add_option("--spec", cfg_path, "Config file; its scene, corpus and seed keys are used")->check(CLI::ExistingFile);
  synth->add_option("--out", out, "Output directory for WAV files, annotations.csv and manifest.csv")->required();
  add_jobs(synth);

  auto* extract = app.add_subcommand("extract", "Compute stacked HF-LMS feature caches");
  extract->add_option("--config", cfg_path, "Config file (features section)")->check(CLI::ExistingFile);
  extract->add_option("--audio", audio, "Directory of WAV files")->required()->check(CLI::ExistingDirectory);
  extract->add_option("--out", out, "Directory receiving one <clip>.feat per WAV file")->required();
  add_jobs(extract);

  auto* train = app.add_subcommand("train", "Train Stage 1, Stage 2 and the optional direct counter");
  train->add_option("--config", cfg_path, "Config file")->check(CLI::ExistingFile);
  train->add_option("--data", data, "Labelled directory (WAV files plus annotations.csv)")
      ->required()
      ->check(CLI::ExistingDirectory);
  train->add_option("--out", out, "Model directory to write")->required();
  add_jobs(train);

  auto* predict = app.add_subcommand("predict", "Write predicted distance series as CSV");
  predict->add_option("--model", model, "Model directory from 'train'")->required();
  predict->add_option("--audio", audio, "Directory of WAV files")->required()->check(CLI::ExistingDirectory);
  predict->add_option("--out", out, "CSV file with rows clip_id,frame,t_s,d_hat_s")->required();
  add_jobs(predict);

  auto* count = app.add_subcommand("count", "Count vehicles per clip and in total");
  count->add_option("--model", model, "Model directory from 'train'")->required();
  count->add_option("--audio", audio, "Directory of WAV files")->required()->check(CLI::ExistingDirectory);
  count->add_option("--tdet", tdet, "Detection threshold in seconds (default: the model's t_d)")
      ->check(CLI::PositiveNumber);
  count->add_option("--method", method, "Counting method")
      ->check(CLI::IsMember({"peaks", "deep"}))
      ->capture_default_str();
  count->add_option("--out", out, "Also write the counts CSV to this file");
  add_jobs(count);

  auto* eval = app.add_subcommand("eval", "Evaluate a model on a labelled directory");
  eval->add_option("--model", model, "Model directory from 'train'")->required();
  eval->add_option("--data", data, "Labelled directory (WAV files plus annotations.csv)")
      ->required()
      ->check(CLI::ExistingDirectory);
  eval->add_option("--out", out, "Report directory for the metric CSV files")->required();
  add_jobs(eval);

  auto* grid = app.add_subcommand("gridsearch", "Search smoother, magnitude and prominence settings");
  grid->add_option("--config", cfg_path, "Config file (grid, split and training sections)")->check(CLI::ExistingFile);
  grid->add_option("--data", data, "Labelled directory used for training and tuning")
      ->required()
      ->check(CLI::ExistingDirectory);
  grid->add_option("--model", model, "Tune an existing model on every clip of --data instead of training");
  grid->add_option("--out", out, "Also write the score table as CSV");
  add_jobs(grid);

  auto* exp = app.add_subcommand("experiment", "Run the multi-run protocol with confidence bands");
  exp->add_option("--config", cfg_path, "Config file with an experiment section")->required()->check(CLI::ExistingFile);
  exp->add_option("--out", out, "Output directory (default: experiment.output_dir)");
  add_jobs(exp);

  auto* show = app.add_subcommand("config", "Print the effective configuration as JSON");
  show->add_option("--config", cfg_path, "Config file (omit for the defaults)")->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::fprintf(stderr, "avc: usage error: %s\n", one_line(e.what()).c_str());
    return AVC_ERR_USAGE;
  }

  try {
    if (*synth) {
      ConfigHandle cfg;
      load_config(cfg_path, cfg);
      size_t clips = 0, vehicles = 0;
      check(avc_synth(cfg.p, out.c_str(), jobs, &clips, &vehicles));
      std::printf("wrote %zu clips with %zu vehicles to %s\n", clips, vehicles, out.c_str());
    } else if (*extract) {
      ConfigHandle cfg;
      load_config(cfg_path, cfg);
      size_t n = 0;
      check(avc_extract(cfg.p, audio.c_str(), out.c_str(), jobs, &n));
      std::printf("wrote %zu feature files to %s\n", n, out.c_str());
    } else if (*train) {
      ConfigHandle cfg;
      load_config(cfg_path, cfg);
      check(avc_train(cfg.p, data.c_str(), out.c_str(), jobs));
      std::printf("model written to %s\n", out.c_str());
    } else if (*predict) {
      ModelHandle m;
      check(avc_model_load(model.c_str(), &m.p));
      check(avc_predict_dir(m.p, audio.c_str(), out.c_str(), jobs));
    } else if (*count) {
      ModelHandle m;
      check(avc_model_load(model.c_str(), &m.p));
      Text report;
      long total = 0;
      check(avc_count_dir(m.p, audio.c_str(), method.c_str(), tdet.value_or(0.0), jobs, &report.p, &total));
      std::fputs(report.p, stdout);
      if (!out.empty()) write_text(out, report.p);
    } else if (*eval) {
      ModelHandle m;
      check(avc_model_load(model.c_str(), &m.p));
      Text summary;
      check(avc_eval(m.p, data.c_str(), out.c_str(), jobs, nullptr, &summary.p));
      std::fputs(summary.p, stdout);
    } else if (*grid) {
      ConfigHandle cfg;
      load_config(cfg_path, cfg);
      Text table;
      check(avc_gridsearch(cfg.p, data.c_str(), opt(model), opt(out), jobs, &table.p));
      std::fputs(table.p, stdout);
    } else if (*exp) {
      ConfigHandle cfg;
      load_config(cfg_path, cfg);
      Text summary;
      check(avc_experiment(cfg.p, opt(out), jobs, &summary.p));
      std::fputs(summary.p, stdout);
    } else if (*show) {
      ConfigHandle cfg;
      load_config(cfg_path, cfg);
      Text json;
      check(avc_config_to_json(cfg.p, &json.p));
      std::printf("%s\n", json.p);
    }
  } catch (const Failed& f) {
    const std::string msg = avc_last_error();
    if (!msg.empty()) std::fprintf(stderr, "avc: error: %s\n", one_line(msg).c_str());
    return f.status;
  }
  return 0;
}
