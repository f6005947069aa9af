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

#include <cstring>
#include <fstream>
#include <set>

#include "dataio.hpp"
#include "test_util.hpp"

using namespace avc;
using namespace avc::dataio;
using testutil::TempDir;

namespace {

// Independent WAV encoder: interleaved frames of raw little-endian samples.
void write_raw_wav(const std::filesystem::path& p, std::uint16_t format, std::uint16_t channels, std::uint32_t rate,
                   std::uint16_t bits, const std::string& payload) {
  std::string out;
  auto u32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  };
  auto u16 = [&](std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xFF));
    out.push_back(static_cast<char>(v >> 8));
  };
  out += "RIFF";
  u32(static_cast<std::uint32_t>(36 + payload.size()));
  out += "WAVEfmt ";
  u32(16);
  u16(format);
  u16(channels);
  u32(rate);
  u32(rate * channels * bits / 8);
  u16(static_cast<std::uint16_t>(channels * bits / 8));
  u16(bits);
  out += "data";
  u32(static_cast<std::uint32_t>(payload.size()));
  out += payload;
  std::ofstream(p, std::ios::binary) << out;
}

std::string i16(std::initializer_list<int> values) {
  std::string s;
  for (int v : values) {
    const auto u = static_cast<std::uint16_t>(static_cast<std::int16_t>(v));
    s.push_back(static_cast<char>(u & 0xFF));
    s.push_back(static_cast<char>(u >> 8));
  }
  return s;
}

PassByAnnotation ann(std::vector<double> t, double duration = 20.0) { return {"a", std::move(t), duration}; }

}  // namespace

TEST_CASE("20 s 16-bit mono clip loads with 882000 samples") {
  TempDir dir;
  AudioClip c = testutil::tone(440.0, 0.5, 20.0);
  c.id = "x";
  write_clip(dir / "x.wav", c);
  const auto back = load_clip(dir / "x.wav");
  CHECK(back.samples.size() == 882000);
  CHECK(back.sample_rate == 44100.0);
  CHECK(back.id == "x");
  CHECK(back.duration() == doctest::Approx(20.0));
}

TEST_CASE("stereo x and -x average to silence") {
  TempDir dir;
  write_raw_wav(dir / "s.wav", 1, 2, 44100, 16, i16({1000, -1000, -32767, 32767, 5, -5}));
  const auto c = load_clip(dir / "s.wav");
  REQUIRE(c.samples.size() == 3);
  for (double v : c.samples) CHECK(v == 0.0);
}

TEST_CASE("16-bit scaling divides by 32768 and round-trips every code") {
  TempDir dir;
  std::string payload;
  for (int v = -32768; v <= 32767; ++v) payload += i16({v});
  write_raw_wav(dir / "all.wav", 1, 1, 44100, 16, payload);
  const auto c = load_clip(dir / "all.wav");
  REQUIRE(c.samples.size() == 65536);
  CHECK(c.samples.front() == -1.0);
  bool exact = true;
  for (int v = -32768; v <= 32767; ++v) exact = exact && c.samples[static_cast<std::size_t>(v + 32768)] == v / 32768.0;
  CHECK(exact);

  write_clip(dir / "again.wav", c);
  std::ifstream a(dir / "all.wav", std::ios::binary), b(dir / "again.wav", std::ios::binary);
  const std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
  CHECK(sa == sb);
}

TEST_CASE("8, 24, 32-bit integer and float encodings decode") {
  TempDir dir;
  write_raw_wav(dir / "u8.wav", 1, 1, 44100, 8, std::string{'\x00', '\x80', '\xff'});
  auto c = load_clip(dir / "u8.wav");
  CHECK(c.samples == std::vector<double>{-1.0, 0.0, 127.0 / 128.0});

  write_raw_wav(dir / "i24.wav", 1, 1, 44100, 24, std::string{'\x00', '\x00', '\x80', '\xff', '\xff', '\x7f'});
  c = load_clip(dir / "i24.wav");
  CHECK(c.samples == std::vector<double>{-1.0, 8388607.0 / 8388608.0});

  write_raw_wav(dir / "i32.wav", 1, 1, 44100, 32, std::string{'\x00', '\x00', '\x00', '\x80'});
  CHECK(load_clip(dir / "i32.wav").samples == std::vector<double>{-1.0});

  float f[2] = {0.25f, -0.5f};
  std::string fp(reinterpret_cast<const char*>(f), sizeof f);
  write_raw_wav(dir / "f32.wav", 3, 1, 44100, 32, fp);
  CHECK(load_clip(dir / "f32.wav").samples == std::vector<double>{0.25, -0.5});

  double d[1] = {0.125};
  write_raw_wav(dir / "f64.wav", 3, 1, 22050, 64, std::string(reinterpret_cast<const char*>(d), sizeof d));
  c = load_clip(dir / "f64.wav");
  CHECK(c.samples == std::vector<double>{0.125});
  CHECK(c.sample_rate == 22050.0);
}

TEST_CASE("malformed audio files are data errors") {
  TempDir dir;
  write_raw_wav(dir / "adpcm.wav", 2, 1, 44100, 4, "abcd");
  CHECK_THROWS_AS(load_clip(dir / "adpcm.wav"), DataError);
  write_raw_wav(dir / "empty.wav", 1, 1, 44100, 16, "");
  CHECK_THROWS_AS(load_clip(dir / "empty.wav"), DataError);
  std::ofstream(dir / "junk.wav") << "not audio at all";
  CHECK_THROWS_AS(load_clip(dir / "junk.wav"), DataError);
  CHECK_THROWS_AS(load_clip(dir / "missing.wav"), DataError);
  double nan = std::nan("");
  write_raw_wav(dir / "nan.wav", 3, 1, 44100, 64, std::string(reinterpret_cast<const char*>(&nan), sizeof nan));
  CHECK_THROWS_AS(load_clip(dir / "nan.wav"), DataError);
}

TEST_CASE("loading is idempotent") {
  TempDir dir;
  Rng rng(5);
  AudioClip c{"n", testutil::random_values(rng, 5000, -0.9, 0.9), 44100.0};
  write_clip(dir / "n.wav", c);
  const auto a = load_clip(dir / "n.wav");
  const auto b = load_clip(dir / "n.wav");
  CHECK(std::memcmp(a.samples.data(), b.samples.data(), a.samples.size() * sizeof(double)) == 0);
}

TEST_CASE("annotation CSV parsing") {
  TempDir dir;
  std::ofstream(dir / "ok.csv") << "clip_id,instant_s\na,3.1\na,1.2\nc,0.5\n";
  const std::vector<std::string> registered{"a", "b", "c"};
  const auto anns = load_annotations(dir / "ok.csv", registered);
  REQUIRE(anns.size() == 3);
  CHECK(anns[0].clip_id == "a");
  CHECK(anns[0].instants == std::vector<double>{1.2, 3.1});
  CHECK(anns[1].clip_id == "b");
  CHECK(anns[1].instants.empty());

  std::ofstream(dir / "neg.csv") << "clip_id,instant_s\na,-0.5\n";
  CHECK_THROWS_AS(load_annotations(dir / "neg.csv"), DataError);
  std::ofstream(dir / "hdr.csv") << "clip,time\na,1\n";
  CHECK_THROWS_AS(load_annotations(dir / "hdr.csv"), DataError);
  std::ofstream(dir / "bad.csv") << "clip_id,instant_s\na,abc\n";
  CHECK_THROWS_AS(load_annotations(dir / "bad.csv"), DataError);
  std::ofstream(dir / "dup.csv") << "clip_id,instant_s\na,1.0\na,1.0\n";
  CHECK_THROWS_AS(load_annotations(dir / "dup.csv"), DataError);
}

TEST_CASE("annotations round-trip at millisecond precision") {
  TempDir dir;
  std::vector<PassByAnnotation> in{{"a", {0.0371, 5.5, 12.25}, 20.0}, {"b", {}, 20.0}};
  write_annotations(dir / "ann.csv", in);
  const std::vector<std::string> ids{"a", "b"};
  const auto out = load_annotations(dir / "ann.csv", ids);
  REQUIRE(out.size() == 2);
  REQUIRE(out[0].instants.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(out[0].instants[i] - in[0].instants[i]) <= 5e-4 + 1e-12);
  CHECK(out[1].instants.empty());
}

TEST_CASE("reference distance examples") {
  const double fp = 0.01;
  auto d = reference_distance(ann({5.0}), 2001, fp, 0.75);
  CHECK(d.values[500] == 0.0);
  CHECK(d.values[0] == 0.75);
  CHECK(d.values[2000] == 0.75);
  CHECK(d.size() == 2001);

  // Two vehicles at 5.0 and 6.0 give 0.5 at t = 5.5 through either branch.
  d = reference_distance(ann({5.0, 6.0}), 2001, fp, 0.75);
  CHECK(d.values[550] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(d.time(550) == 5.5);
}

TEST_CASE("reference distance invariants on random annotations") {
  Rng rng(17);
  const double fp = 1634.0 / 44100.0;
  const double t_d = 0.75;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n_frames = 100 + uniform_index(rng, 500);
    std::vector<double> instants;
    const auto k = uniform_index(rng, 6);
    for (std::size_t i = 0; i < k; ++i) instants.push_back(uniform(rng, 0.0, n_frames * fp));
    std::sort(instants.begin(), instants.end());
    const auto full = reference_distance(ann(instants), n_frames, fp, t_d);

    std::vector<double> mins(n_frames, t_d);
    for (double t : instants) {
      const auto single = reference_distance(ann({t}), n_frames, fp, t_d);
      for (std::size_t m = 0; m < n_frames; ++m) mins[m] = std::min(mins[m], single.values[m]);
    }
    CHECK(full.values == mins);
    for (std::size_t m = 0; m < n_frames; ++m) {
      CHECK(full.values[m] >= 0.0);
      CHECK(full.values[m] <= t_d);
    }
    if (!instants.empty()) {
      auto fewer = instants;
      fewer.erase(fewer.begin() + static_cast<long>(uniform_index(rng, fewer.size())));
      const auto part = reference_distance(ann(fewer), n_frames, fp, t_d);
      for (std::size_t m = 0; m < n_frames; ++m) CHECK(full.values[m] <= part.values[m]);
    }
  }
}

TEST_CASE("split_dataset sizes, determinism and partition") {
  std::vector<std::string> ids;
  for (int i = 0; i < 250; ++i) ids.push_back("c" + std::to_string(i));
  const auto s = split_dataset(ids, 0.8, 42);
  CHECK(s.train_ids.size() == 200);
  CHECK(s.val_ids.size() == 50);
  const auto again = split_dataset(ids, 0.8, 42);
  CHECK(s.train_ids == again.train_ids);
  CHECK(s.val_ids == again.val_ids);
  std::set<std::string> all(s.train_ids.begin(), s.train_ids.end());
  all.insert(s.val_ids.begin(), s.val_ids.end());
  CHECK(all.size() == 250);
  CHECK(split_dataset(ids, 0.8, 43).train_ids != s.train_ids);

  std::vector<std::string> five(ids.begin(), ids.begin() + 5);
  const auto small = split_dataset(five, 0.8, 1);
  CHECK(small.train_ids.size() == 4);
  CHECK(small.val_ids.size() == 1);

  // Both sides stay nonempty.
  std::vector<std::string> two(ids.begin(), ids.begin() + 2);
  CHECK(split_dataset(two, 0.99, 1).val_ids.size() == 1);
  CHECK_THROWS_AS(split_dataset(two, 1.0, 1), UsageError);
  CHECK_THROWS_AS(split_dataset(std::span(ids.data(), 1), 0.5, 1), DataError);
}

TEST_CASE("load_dataset pairs audio with annotations") {
  TempDir dir;
  for (const char* id : {"b", "a"}) write_clip(dir / (std::string(id) + ".wav"), testutil::tone(1000, 0.1, 2.0, 44100, id));
  std::ofstream(dir / "annotations.csv") << "clip_id,instant_s\nb,1.5\n";
  const auto ds = load_dataset(dir.path());
  REQUIRE(ds.size() == 2);
  CHECK(ds[0].clip.id == "a");
  CHECK(ds[0].annotation.instants.empty());
  CHECK(ds[1].annotation.instants == std::vector<double>{1.5});
  CHECK(ds[1].annotation.duration == doctest::Approx(2.0));

  std::ofstream(dir / "annotations.csv") << "clip_id,instant_s\nzzz,1.5\n";
  CHECK_THROWS_AS(load_dataset(dir.path()), DataError);
  std::ofstream(dir / "annotations.csv") << "clip_id,instant_s\na,2.5\n";
  CHECK_THROWS_AS(load_dataset(dir.path()), DataError);
}
