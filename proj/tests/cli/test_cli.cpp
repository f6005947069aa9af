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

#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include "test_util.hpp"

namespace {

struct Outcome {
  int code = -1;
  std::string output;
};

Outcome run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + (env.empty() ? "" : " ") + AVC_CLI_PATH + std::string(" ") + args + " 2>&1";
  Outcome o;
  FILE* p = ::popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) o.output.append(buf, n);
  const int status = ::pclose(p);
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return o;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::string q(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

// Small networks, two 20 s clips with a deep counter.
void write_config(const std::filesystem::path& path) {
  std::ofstream(path) << R"({"seed": 2,
  "features": {"n_mel": 8, "q": 1},
  "regression": {"k": 2},
  "stage1": {"layer_sizes": [24, 8, 1], "epochs": 2},
  "stage2": {"layer_sizes": [5, 4, 1], "epochs": 2},
  "counter": {"enabled": true, "conv": [[2, 5, 2]], "epochs": 2},
  "grid": {"smoothers": [[5, 3]], "m_fracs": [0.4], "p_fracs": [0.1, 0.2]},
  "scene": {"max_vehicles": 3},
  "corpus": {"n_clips": 3},
  "experiment": {"train_dir": "data", "runs": 2, "variants": ["VCNN", "VCNN_PP15"]}})";
}

}  // namespace

TEST_CASE("help documents every flag") {
  const std::map<std::string, std::vector<std::string>> flags{
      {"synth", {"--spec", "--out", "--jobs"}},
      {"extract", {"--config", "--audio", "--out", "--jobs"}},
      {"train", {"--config", "--data", "--out", "--jobs"}},
      {"predict", {"--model", "--audio", "--out", "--jobs"}},
      {"count", {"--model", "--audio", "--tdet", "--method", "--out", "--jobs"}},
      {"eval", {"--model", "--data", "--out", "--jobs"}},
      {"gridsearch", {"--config", "--data", "--model", "--out", "--jobs"}},
      {"experiment", {"--config", "--out", "--jobs"}},
      {"config", {"--config"}},
  };
  const auto top = run("--help");
  CHECK(top.code == 0);
  for (const auto& [sub, list] : flags) {
    CHECK(top.output.find(sub) != std::string::npos);
    const auto h = run(sub + " --help");
    CHECK(h.code == 0);
    for (const auto& f : list) {
      INFO(sub << " " << f);
      CHECK(h.output.find(f) != std::string::npos);
    }
  }
}

TEST_CASE("usage errors exit with 1") {
  CHECK(run("").code == 1);
  CHECK(run("fly").code == 1);
  CHECK(run("train --out x").code == 1);
  CHECK(run("count --model m --audio /nonexistent_avc_dir").code == 1);
  CHECK(run("config", "AVC_SEED=abc").code == 1);
  testutil::TempDir dir;
  std::ofstream(dir / "bad.json") << R"({"detector": {"m": 1}})";
  const auto o = run("config --config " + q(dir / "bad.json"));
  CHECK(o.code == 1);
  CHECK(o.output.rfind("avc: ", 0) == 0);
}

TEST_CASE("config prints the effective JSON with the seed override") {
  const auto o = run("config", "AVC_SEED=77");
  CHECK(o.code == 0);
  CHECK(o.output.find("\"seed\": 77") != std::string::npos);
}

TEST_CASE("end-to-end workflow") {
  testutil::TempDir dir;
  write_config(dir / "cfg.json");
  const std::string cfg = " --config " + q(dir / "cfg.json");

  REQUIRE(run("synth --spec " + q(dir / "cfg.json") + " --out " + q(dir / "data")).code == 0);
  REQUIRE(run("synth --spec " + q(dir / "cfg.json") + " --out " + q(dir / "data2") + " -j 2").code == 0);
  for (const char* f : {"clip_0000.wav", "clip_0002.wav", "annotations.csv", "manifest.csv"})
    CHECK(slurp(dir / "data" / f) == slurp(dir / "data2" / f));

  REQUIRE(run("train" + cfg + " --data " + q(dir / "data") + " --out " + q(dir / "m1")).code == 0);
  REQUIRE(run("train" + cfg + " --data " + q(dir / "data") + " --out " + q(dir / "m2") + " -j 2").code == 0);

  REQUIRE(run("predict --model " + q(dir / "m1") + " --audio " + q(dir / "data") + " --out " + q(dir / "p1.csv")).code == 0);
  REQUIRE(run("predict --model " + q(dir / "m2") + " --audio " + q(dir / "data") + " --out " + q(dir / "p2.csv")).code == 0);
  const auto p1 = slurp(dir / "p1.csv");
  CHECK(p1 == slurp(dir / "p2.csv"));
  std::istringstream lines(p1);
  std::string line;
  std::getline(lines, line);
  CHECK(line == "clip_id,frame,t_s,d_hat_s");
  std::map<std::string, int> rows;
  while (std::getline(lines, line)) ++rows[line.substr(0, line.find(','))];
  CHECK(rows.size() == 3);
  for (const auto& [id, n] : rows) CHECK(n == 540);

  const auto peaks = run("count --model " + q(dir / "m1") + " --audio " + q(dir / "data"));
  CHECK(peaks.code == 0);
  CHECK(peaks.output.find("total,") != std::string::npos);
  CHECK(run("count --model " + q(dir / "m1") + " --audio " + q(dir / "data") + " --method deep --tdet 0.5").code == 0);

  const auto ev = run("eval --model " + q(dir / "m1") + " --data " + q(dir / "data") + " --out " + q(dir / "rep"));
  CHECK(ev.code == 0);
  for (const char* f : {"curve.csv", "summary.csv", "detections.csv", "mse.csv", "deep_curve.csv"})
    CHECK(std::filesystem::exists(dir / "rep" / f));

  CHECK(run("extract" + cfg + " --audio " + q(dir / "data") + " --out " + q(dir / "feat")).code == 0);
  CHECK(std::filesystem::exists(dir / "feat" / "clip_0001.feat"));

  const auto g = run("gridsearch" + cfg + " --data " + q(dir / "data") + " --model " + q(dir / "m1") + " --out " +
                     q(dir / "grid.csv"));
  CHECK(g.code == 0);
  CHECK(std::filesystem::exists(dir / "grid.csv"));

  const auto e = run("experiment" + cfg + " --out " + q(dir / "exp"), "AVC_SEED=4");
  CHECK(e.code == 0);
  for (const char* f : {"summary.csv", "bands.csv", "config.json", "run_001/VCNN_PP15_curve.csv"})
    CHECK(std::filesystem::exists(dir / "exp" / f));

  std::filesystem::create_directories(dir / "empty");
  const auto bad = run("train" + cfg + " --data " + q(dir / "empty") + " --out " + q(dir / "m3"));
  CHECK(bad.code == 2);
  CHECK(bad.output.rfind("avc: error: ", 0) == 0);
  CHECK(run("predict --model " + q(dir / "nomodel") + " --audio " + q(dir / "data") + " --out " + q(dir / "x.csv")).code == 2);
}
