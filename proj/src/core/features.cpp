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

#include "features.hpp"

#include <complex>

#include <unsupported/Eigen/FFT>

#include "binary_io.hpp"

namespace avc::features {

namespace {

// numpy-style "reflect" (edge sample not repeated), folded for any offset.
std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
  if (n == 1) return 0;
  const auto period = static_cast<std::ptrdiff_t>(2 * (n - 1));
  i %= period;
  if (i < 0) i += period;
  if (i >= static_cast<std::ptrdiff_t>(n)) i = period - i;
  return static_cast<std::size_t>(i);
}

}  // namespace

void SpectrogramConfig::validate() const {
  if (window_len <= 0 || hop <= 0 || hop >= window_len)
    throw UsageError("spectrogram config: need window_len > hop > 0");
  if (n_mel < 1) throw UsageError("spectrogram config: n_mel must be >= 1");
  if (!(sample_rate > 0.0)) throw UsageError("spectrogram config: sample_rate must be positive");
  if (!(f_min >= 0.0 && f_min < f_max && f_max <= sample_rate / 2.0))
    throw UsageError("spectrogram config: need 0 <= f_min < f_max <= sample_rate/2");
  if (!(log_floor > 0.0)) throw UsageError("spectrogram config: log_floor must be positive");
}

std::size_t frame_count(std::size_t n_samples, int hop) {
  return n_samples == 0 ? 0 : (n_samples - 1) / static_cast<std::size_t>(hop) + 1;
}

Matrix stft_power(const dataio::AudioClip& clip, const SpectrogramConfig& cfg) {
  cfg.validate();
  if (clip.sample_rate != cfg.sample_rate)
    throw DataError("clip " + clip.id + " has sample rate " + std::to_string(clip.sample_rate) + ", expected " +
                    std::to_string(cfg.sample_rate) + " (no resampling)");
  const std::size_t n = clip.samples.size();
  if (n < static_cast<std::size_t>(cfg.hop)) throw DataError("clip " + clip.id + " is shorter than one hop");

  const auto win = static_cast<std::size_t>(cfg.window_len);
  const std::size_t bins = win / 2 + 1;
  const std::size_t frames = frame_count(n, cfg.hop);
  const auto half = static_cast<std::ptrdiff_t>(win / 2);

  std::vector<double> window(win);
  for (std::size_t i = 0; i < win; ++i)
    window[i] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(win));

  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<double> frame(win);
  std::vector<std::complex<double>> spectrum;
  Matrix power(static_cast<Eigen::Index>(frames), static_cast<Eigen::Index>(bins));
  for (std::size_t m = 0; m < frames; ++m) {
    const auto start = static_cast<std::ptrdiff_t>(m) * cfg.hop - half;
    for (std::size_t i = 0; i < win; ++i)
      frame[i] = window[i] * clip.samples[reflect_index(start + static_cast<std::ptrdiff_t>(i), n)];
    fft.fwd(spectrum, frame);
    for (std::size_t b = 0; b < bins; ++b)
      power(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(b)) = std::norm(spectrum[b]);
  }
  return power;
}

Matrix mel_filterbank(const SpectrogramConfig& cfg) {
  cfg.validate();
  const int bins = cfg.window_len / 2 + 1;
  const double mel_lo = hz_to_mel(cfg.f_min);
  const double mel_hi = hz_to_mel(cfg.f_max);
  std::vector<double> edges(static_cast<std::size_t>(cfg.n_mel) + 2);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) / static_cast<double>(cfg.n_mel + 1));

  Matrix fb = Matrix::Zero(cfg.n_mel, bins);
  for (int f = 0; f < cfg.n_mel; ++f) {
    const double lo = edges[f], center = edges[f + 1], hi = edges[f + 2];
    for (int b = 0; b < bins; ++b) {
      const double hz = b * cfg.sample_rate / cfg.window_len;
      double w = 0.0;
      if (hz >= lo && hz <= center)
        w = (hz - lo) / (center - lo);
      else if (hz > center && hz <= hi)
        w = (hi - hz) / (hi - center);
      fb(f, b) = w;
    }
    const double peak = fb.row(f).maxCoeff();
    if (!(peak > 0.0))
      throw UsageError("mel filterbank: filter " + std::to_string(f) + " covers no FFT bin; reduce n_mel");
    fb.row(f) /= peak;
  }
  return fb;
}

Matrix hf_lms(const dataio::AudioClip& clip, const SpectrogramConfig& cfg, const Matrix& filterbank) {
  const Matrix power = stft_power(clip, cfg);
  if (filterbank.cols() != power.cols()) throw UsageError("hf_lms: filterbank width does not match spectrum");
  Matrix mel = power * filterbank.transpose();
  return (mel.array() + cfg.log_floor).log().matrix();
}

Matrix hf_lms(const dataio::AudioClip& clip, const SpectrogramConfig& cfg) {
  return hf_lms(clip, cfg, mel_filterbank(cfg));
}

FeatureMatrix stack_context(const Matrix& lms, int q, int stride) {
  if (lms.rows() == 0 || lms.cols() == 0) throw DataError("stack_context: empty input");
  if (q < 0 || stride < 1) throw UsageError("stack_context: need q >= 0 and stride >= 1");
  const Eigen::Index frames = lms.rows();
  const Eigen::Index width = lms.cols();
  FeatureMatrix out;
  out.data.resize(frames, (2 * q + 1) * width);
  for (Eigen::Index m = 0; m < frames; ++m) {
    for (int j = -q; j <= q; ++j) {
      const Eigen::Index src = std::clamp<Eigen::Index>(m + static_cast<Eigen::Index>(j) * stride, 0, frames - 1);
      out.data.block(m, (j + q) * width, 1, width) = lms.row(src);
    }
  }
  return out;
}

FeatureMatrix extract(const dataio::AudioClip& clip, const SpectrogramConfig& cfg, const ContextConfig& ctx) {
  FeatureMatrix fm = stack_context(hf_lms(clip, cfg), ctx.q, ctx.stride);
  fm.clip_id = clip.id;
  fm.frame_period = cfg.frame_period();
  return fm;
}

FeatureMatrix apply_stats(const FeatureMatrix& features, const FeatureStats& stats) {
  if (stats.mean.size() != features.dim() || stats.stddev.size() != features.dim())
    throw UsageError("standardize: statistics dimension does not match features");
  FeatureMatrix out = features;
  out.data = ((features.data.rowwise() - stats.mean.transpose()).array().rowwise() /
              stats.stddev.transpose().array())
                 .matrix();
  return out;
}

std::pair<std::vector<FeatureMatrix>, FeatureStats> standardize(std::span<const FeatureMatrix> features,
                                                                const std::optional<FeatureStats>& stats) {
  FeatureStats s;
  if (stats) {
    s = *stats;
  } else {
    if (features.empty()) throw DataError("standardize: empty training list");
    const Eigen::Index dim = features.front().dim();
    Vector sum = Vector::Zero(dim);
    Eigen::Index rows = 0;
    for (const auto& f : features) {
      if (f.dim() != dim) throw UsageError("standardize: inconsistent feature dimensions");
      sum += f.data.colwise().sum().transpose();
      rows += f.frames();
    }
    if (rows == 0) throw DataError("standardize: no frames in training list");
    s.mean = sum / static_cast<double>(rows);
    Vector sq = Vector::Zero(dim);
    for (const auto& f : features)
      sq += (f.data.rowwise() - s.mean.transpose()).array().square().colwise().sum().matrix().transpose();
    s.stddev = (sq / static_cast<double>(rows)).array().sqrt().max(1e-8).matrix();
  }
  std::vector<FeatureMatrix> out;
  out.reserve(features.size());
  for (const auto& f : features) out.push_back(apply_stats(f, s));
  return {std::move(out), std::move(s)};
}

void write_feature_cache(const std::filesystem::path& path, const FeatureMatrix& features) {
  binio::Writer w;
  w.str(features.clip_id);
  w.u64(static_cast<std::uint64_t>(features.frames()));
  w.u64(static_cast<std::uint64_t>(features.dim()));
  w.f64(features.frame_period);
  for (Eigen::Index r = 0; r < features.frames(); ++r)
    for (Eigen::Index c = 0; c < features.dim(); ++c) w.f64(features.data(r, c));
  w.save(path);
}

FeatureMatrix read_feature_cache(const std::filesystem::path& path) {
  auto r = binio::Reader::open(path);
  FeatureMatrix fm;
  fm.clip_id = r.str();
  const auto frames = r.u64();
  const auto dim = r.u64();
  fm.frame_period = r.f64();
  if (frames * dim * 8 != r.remaining()) throw DataError(path.string() + ": payload size does not match header");
  fm.data.resize(static_cast<Eigen::Index>(frames), static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < fm.data.rows(); ++i)
    for (Eigen::Index c = 0; c < fm.data.cols(); ++c) fm.data(i, c) = r.f64();
  return fm;
}

void write_stats(const std::filesystem::path& path, const FeatureStats& stats) {
  binio::Writer w;
  w.bytes("AVCSTAT1");
  w.u64(static_cast<std::uint64_t>(stats.mean.size()));
  for (double v : stats.mean) w.f64(v);
  for (double v : stats.stddev) w.f64(v);
  w.save(path);
}

FeatureStats read_stats(const std::filesystem::path& path) {
  auto r = binio::Reader::open(path);
  if (r.bytes(8) != "AVCSTAT1") throw DataError(path.string() + ": not a feature statistics file");
  const auto dim = static_cast<Eigen::Index>(r.u64());
  FeatureStats s{Vector(dim), Vector(dim)};
  for (Eigen::Index i = 0; i < dim; ++i) s.mean[i] = r.f64();
  for (Eigen::Index i = 0; i < dim; ++i) s.stddev[i] = r.f64();
  if (!r.at_end()) throw DataError(path.string() + ": trailing bytes");
  return s;
}

}  // namespace avc::features
