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

#include <complex>
#include <numbers>

#include "features.hpp"
#include "golden_values.hpp"
#include "test_util.hpp"

using namespace avc;
using namespace avc::features;
using testutil::TempDir;

namespace {

dataio::AudioClip golden_signal(std::size_t n) {
  dataio::AudioClip c;
  c.id = "g";
  c.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i);
    const double noise = static_cast<double>((i * 7919) % 1000) / 1000.0 - 0.5;
    c.samples[i] = 0.3 * std::sin(2 * std::numbers::pi * 3000 * t / 44100) +
                   0.1 * std::sin(2 * std::numbers::pi * 7000 * t / 44100 + 0.5) + 0.05 * noise;
  }
  return c;
}

dataio::AudioClip noise_clip(std::uint64_t seed, double amplitude, double seconds) {
  Rng rng(seed);
  dataio::AudioClip c{"noise", testutil::random_values(rng, static_cast<std::size_t>(seconds * 44100), -amplitude,
                                                       amplitude),
                      44100.0};
  return c;
}

}  // namespace

TEST_CASE("shape contract for a 20 s clip") {
  const SpectrogramConfig cfg;
  CHECK(frame_count(882000, cfg.hop) == 540);
  const auto clip = noise_clip(1, 0.1, 20.0);
  const Matrix lms = hf_lms(clip, cfg);
  CHECK(lms.rows() == 540);
  CHECK(lms.cols() == 48);
  const auto fm = extract(clip, cfg, ContextConfig{});
  CHECK(fm.data.rows() == 540);
  CHECK(fm.data.cols() == 528);
  CHECK(fm.frame_period == doctest::Approx(1634.0 / 44100.0));

  // Frame alignment with the reference distance.
  const auto ref = dataio::reference_distance({"noise", {3.0}, 20.0}, fm.frames(), fm.frame_period, 0.75);
  CHECK(ref.size() == static_cast<std::size_t>(fm.frames()));
}

TEST_CASE("silence gives zero power and a constant log floor") {
  const SpectrogramConfig cfg;
  dataio::AudioClip z{"z", std::vector<double>(44100, 0.0), 44100.0};
  CHECK(stft_power(z, cfg).cwiseAbs().maxCoeff() == 0.0);
  const Matrix lms = hf_lms(z, cfg);
  CHECK((lms.array() == std::log(cfg.log_floor)).all());
}

TEST_CASE("STFT frame matches a direct Fourier sum") {
  const SpectrogramConfig cfg;
  const auto clip = testutil::tone(5512.5, 0.5, 1.0);
  const Matrix p = stft_power(clip, cfg);
  // Frames whose window lies inside the clip; reflect padding bends the tone elsewhere.
  const Eigen::Index first = (cfg.window_len / 2 + cfg.hop - 1) / cfg.hop;
  const Eigen::Index last = (static_cast<Eigen::Index>(clip.samples.size()) - cfg.window_len / 2) / cfg.hop;
  REQUIRE(last > first);
  for (Eigen::Index m = first; m <= last; ++m) {
    Eigen::Index arg;
    p.row(m).maxCoeff(&arg);
    CHECK(arg == 512);
  }

  // Frame 3 lies fully inside the clip; frame 0 exercises the reflect padding.
  for (int m : {0, 3}) {
    const int n = cfg.window_len;
    std::vector<double> frame(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      long idx = static_cast<long>(m) * cfg.hop - n / 2 + i;
      if (idx < 0) idx = -idx;
      const double w = 0.54 - 0.46 * std::cos(2 * std::numbers::pi * i / n);
      frame[static_cast<std::size_t>(i)] = w * clip.samples[static_cast<std::size_t>(idx)];
    }
    double worst = 0.0;
    for (int k : {0, 1, 100, 511, 512, 513, 1500, 2048}) {
      std::complex<double> acc = 0.0;
      for (int i = 0; i < n; ++i)
        acc += frame[static_cast<std::size_t>(i)] * std::polar(1.0, -2 * std::numbers::pi * k * i / n);
      worst = std::max(worst, std::abs(std::norm(acc) - p(m, k)) / std::max(1.0, std::norm(acc)));
    }
    CHECK(worst < 1e-9);
  }
}

TEST_CASE("HF-LMS matches frozen reference values") {
  const SpectrogramConfig cfg;
  const Matrix lms = hf_lms(golden_signal(88200), cfg);
  REQUIRE(static_cast<std::size_t>(lms.rows()) == golden::kLmsFrames);
  int k = 0;
  for (int f : golden::kLmsFrameIdx)
    for (int b : golden::kLmsBandIdx) CHECK(lms(f, b) == doctest::Approx(golden::kLmsValues[k++]).epsilon(1e-9));
}

TEST_CASE("mel filterbank geometry") {
  const SpectrogramConfig cfg;
  const Matrix fb = mel_filterbank(cfg);
  REQUIRE(fb.rows() == 48);
  REQUIRE(fb.cols() == 2049);
  const double bin_hz = cfg.sample_rate / cfg.window_len;
  for (int r = 0; r < fb.rows(); ++r) {
    CHECK(fb.row(r).sum() > 0.0);
    CHECK(fb.row(r).sum() == doctest::Approx(golden::kMelRowSums[r]).epsilon(1e-9));
    CHECK(fb.row(r).maxCoeff() == doctest::Approx(1.0));
    CHECK(fb.row(r).minCoeff() >= 0.0);
    // Unimodal: nondecreasing up to the peak, nonincreasing after.
    Eigen::Index peak;
    fb.row(r).maxCoeff(&peak);
    bool unimodal = true;
    for (Eigen::Index b = 1; b <= peak; ++b) unimodal = unimodal && fb(r, b) >= fb(r, b - 1);
    for (Eigen::Index b = peak + 1; b < fb.cols(); ++b) unimodal = unimodal && fb(r, b) <= fb(r, b - 1);
    CHECK(unimodal);
    for (Eigen::Index b = 0; b < fb.cols(); ++b) {
      const double hz = b * bin_hz;
      if (hz < golden::kMelEdgesHz[r] || hz > golden::kMelEdgesHz[r + 2]) CHECK(fb(r, b) == 0.0);
      if (hz < 1000.0) CHECK(fb(r, b) == 0.0);
    }
  }
  CHECK(hz_to_mel(mel_to_hz(1234.5)) == doctest::Approx(1234.5));
}

TEST_CASE("single-band filterbank is one triangle over the full range") {
  SpectrogramConfig cfg;
  cfg.n_mel = 1;
  const Matrix fb = mel_filterbank(cfg);
  const double mid = mel_to_hz(0.5 * (hz_to_mel(cfg.f_min) + hz_to_mel(cfg.f_max)));
  Eigen::Index peak;
  CHECK(fb.row(0).maxCoeff(&peak) == 1.0);
  CHECK(std::abs(peak * cfg.sample_rate / cfg.window_len - mid) <= cfg.sample_rate / cfg.window_len);
  CHECK(fb(0, 0) == 0.0);
}

TEST_CASE("too many bands for the resolution is a usage error") {
  SpectrogramConfig cfg;
  cfg.f_min = 0.0;
  cfg.f_max = 200.0;
  CHECK_THROWS_AS(mel_filterbank(cfg), UsageError);
}

TEST_CASE("doubling the amplitude adds log 4") {
  const SpectrogramConfig cfg;
  auto clip = noise_clip(3, 0.2, 2.0);
  const Matrix a = hf_lms(clip, cfg);
  for (double& s : clip.samples) s *= 2.0;
  const Matrix b = hf_lms(clip, cfg);
  CHECK(((b - a).array() - std::log(4.0)).abs().maxCoeff() < 1e-9);
}

TEST_CASE("low-frequency hum leaves HF-LMS unchanged") {
  const SpectrogramConfig cfg;
  auto clip = noise_clip(4, 0.3, 3.0);
  const Matrix base = hf_lms(clip, cfg);
  const Eigen::Index first = 2, last = base.rows() - 3;

  // A bin-centred tone (bin 19, about 205 Hz) occupies exactly bins 18..20
  // under the periodic Hamming window, far below the first filter.
  auto with_tone = [&](double hz, double amplitude) {
    auto c = clip;
    const auto hum = testutil::tone(hz, amplitude, 3.0);
    for (std::size_t i = 0; i < c.samples.size(); ++i) c.samples[i] += hum.samples[i];
    return hf_lms(c, cfg);
  };
  const Matrix centred = with_tone(19 * cfg.sample_rate / cfg.window_len, 0.3);
  CHECK((centred - base).middleRows(first, last - first + 1).cwiseAbs().maxCoeff() <= 1e-6);

  // An off-bin 200 Hz tone leaks through the window sidelobes; at -30 dB
  // relative to the broadband signal the interior change stays below 1e-3.
  const Matrix off = with_tone(200.0, 0.01);
  CHECK((off - base).middleRows(first, last - first + 1).cwiseAbs().maxCoeff() <= 1e-3);
}

TEST_CASE("context stacking") {
  Rng rng(8);
  const Matrix lms = testutil::random_matrix(rng, 30, 4);
  const auto same = stack_context(lms, 0, 2);
  CHECK(same.data == lms);

  const auto st = stack_context(lms, 2, 3);
  REQUIRE(st.data.cols() == 20);
  for (Eigen::Index m = 0; m < 30; ++m)
    for (int j = -2; j <= 2; ++j) {
      const Eigen::Index src = std::clamp<Eigen::Index>(m + 3 * j, 0, 29);
      CHECK(st.data.block(m, (j + 2) * 4, 1, 4) == lms.row(src));
    }

  Matrix constant(10, 48);
  for (Eigen::Index m = 0; m < 10; ++m) constant.row(m) = lms.row(0).replicate(1, 12);
  const auto c = stack_context(constant, 5, 2);
  for (Eigen::Index m = 0; m < 10; ++m) CHECK(c.data.row(m) == constant.row(0).replicate(1, 11));

  // Clips are stacked independently.
  const Matrix other = testutil::random_matrix(rng, 12, 4);
  CHECK(stack_context(other, 2, 3).data == stack_context(other, 2, 3).data);
  CHECK_THROWS_AS(stack_context(lms, -1, 2), UsageError);
}

TEST_CASE("standardization") {
  Rng rng(9);
  std::vector<FeatureMatrix> fs;
  for (int i = 0; i < 3; ++i) {
    FeatureMatrix f{"c" + std::to_string(i), testutil::random_matrix(rng, 40, 5, 3.0), 0.037};
    f.data.array() += 7.0;
    f.data.col(2).setConstant(4.0);
    fs.push_back(f);
  }
  const auto [z, stats] = standardize(fs);
  Matrix all(120, 5);
  for (int i = 0; i < 3; ++i) all.middleRows(40 * i, 40) = z[static_cast<std::size_t>(i)].data;
  const Eigen::RowVectorXd mean = all.colwise().mean();
  const Eigen::RowVectorXd var = (all.rowwise() - mean).array().square().colwise().mean();
  for (int d = 0; d < 5; ++d) {
    CHECK(std::abs(mean(d)) < 1e-12);
    if (d == 2)
      CHECK(all.col(2).cwiseAbs().maxCoeff() == 0.0);
    else
      CHECK(var(d) == doctest::Approx(1.0).epsilon(1e-12));
  }

  const FeatureMatrix held{"h", testutil::random_matrix(rng, 7, 5), 0.037};
  const auto applied = apply_stats(held, stats);
  for (Eigen::Index r = 0; r < 7; ++r)
    for (Eigen::Index d = 0; d < 5; ++d)
      CHECK(applied.data(r, d) == doctest::Approx((held.data(r, d) - stats.mean(d)) / stats.stddev(d)).epsilon(1e-14));
}

TEST_CASE("feature cache and stats files round-trip") {
  TempDir dir;
  Rng rng(10);
  FeatureMatrix f{"clip_7", testutil::random_matrix(rng, 9, 6), 0.0370521541950113};
  write_feature_cache(dir / "c.feat", f);
  const auto back = read_feature_cache(dir / "c.feat");
  CHECK(back.clip_id == f.clip_id);
  CHECK(back.data == f.data);
  CHECK(back.frame_period == f.frame_period);

  FeatureStats s{testutil::random_matrix(rng, 1, 6).row(0), testutil::random_matrix(rng, 1, 6).row(0).cwiseAbs()};
  write_stats(dir / "s.bin", s);
  const auto sb = read_stats(dir / "s.bin");
  CHECK(sb.mean == s.mean);
  CHECK(sb.stddev == s.stddev);

  std::filesystem::resize_file(dir / "c.feat", 40);
  CHECK_THROWS_AS(read_feature_cache(dir / "c.feat"), DataError);
}

TEST_CASE("input validation") {
  const SpectrogramConfig cfg;
  dataio::AudioClip wrong{"w", std::vector<double>(44100, 0.0), 16000.0};
  CHECK_THROWS_AS(stft_power(wrong, cfg), DataError);
  dataio::AudioClip tiny{"t", std::vector<double>(100, 0.0), 44100.0};
  CHECK_THROWS_AS(stft_power(tiny, cfg), DataError);
}
