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

#include "deepcount.hpp"
#include "gradcheck.hpp"
#include "test_util.hpp"

using namespace avc;
using namespace avc::deepcount;

namespace {

ConvCounterSpec small_spec(nn::Loss loss = nn::Loss::MSE) {
  ConvCounterSpec s;
  s.conv = {{3, 5, 2}, {4, 3, 2}};
  s.head_hidden = {4};
  s.loss = loss;
  s.epochs = 150;
  s.batch_size = 4;
  s.learning_rate = 5e-3;
  s.seed = 3;
  return s;
}

// Edge-padded "same" convolution written out directly from the padding rule.
Matrix naive_conv(const Matrix& w, const Vector& b, int kernel, int stride, const Matrix& x) {
  const long n = x.cols();
  const long out = (n + stride - 1) / stride;
  const long total = std::max(0L, (out - 1) * stride + kernel - n);
  const long left = total / 2;
  std::vector<std::vector<double>> padded(static_cast<std::size_t>(x.rows()));
  for (long c = 0; c < x.rows(); ++c) {
    for (long i = -left; i < n + total - left; ++i)
      padded[static_cast<std::size_t>(c)].push_back(x(c, i < 0 ? 0 : (i >= n ? n - 1 : i)));
  }
  Matrix y(w.rows(), out);
  for (long o = 0; o < w.rows(); ++o)
    for (long t = 0; t < out; ++t) {
      double s = b[o];
      for (long c = 0; c < x.rows(); ++c)
        for (long j = 0; j < kernel; ++j) s += w(o, c * kernel + j) * padded[static_cast<std::size_t>(c)][static_cast<std::size_t>(t * stride + j)];
      y(o, t) = s;
    }
  return y;
}

double naive_forward(const ConvCounter& m, const std::vector<double>& series) {
  Matrix a = Eigen::Map<const RowVector>(series.data(), static_cast<Eigen::Index>(series.size()));
  for (const auto& l : m.conv) a = naive_conv(l.weights, l.bias, l.kernel, l.stride, a).cwiseMax(0.0);
  Vector h = a.rowwise().mean();
  for (std::size_t l = 0; l < m.head.size(); ++l) {
    h = m.head[l].weights * h + m.head[l].bias;
    if (l + 1 < m.head.size()) h = h.cwiseMax(0.0);
  }
  return h[0];
}

void randomize_biases(ConvCounter& m, Rng& rng) {
  for (auto& l : m.conv) l.bias = testutil::random_matrix(rng, l.bias.size(), 1, 0.2).col(0);
  for (auto& l : m.head) l.bias = testutil::random_matrix(rng, l.bias.size(), 1, 0.2).col(0);
}

}  // namespace

TEST_CASE("output length and padding") {
  CHECK(conv_output_length(540, 2) == 270);
  CHECK(conv_output_length(541, 2) == 271);
  CHECK(conv_output_length(7, 1) == 7);
  CHECK(conv_left_pad(10, 7, 1) == 3);
  CHECK(conv_left_pad(10, 7, 2) == 2);
  CHECK(conv_left_pad(3, 1, 4) == 0);
}

TEST_CASE("forward pass matches a naive convolution") {
  Rng rng(51);
  for (std::uint64_t seed : {1, 2, 3}) {
    auto spec = small_spec();
    spec.seed = seed;
    spec.conv = {{3, 5, 2}, {4, 3, 1}, {2, 7, 3}};
    auto m = init_counter(spec);
    randomize_biases(m, rng);
    for (std::size_t n : {7, 8, 33, 540}) {
      const auto s = testutil::random_values(rng, n, 0.0, 0.75);
      CHECK(std::abs(conv_forward(m, s) - naive_forward(m, s)) < 1e-12);
    }
  }
}

TEST_CASE("zero weights give the output bias") {
  auto m = init_counter(small_spec());
  for (auto& l : m.conv) l.weights.setZero();
  for (auto& l : m.head) l.weights.setZero();
  m.head.back().bias.setConstant(2.3);
  Rng rng(52);
  CHECK(conv_forward(m, testutil::random_values(rng, 100)) == 2.3);
  CHECK(predict_count(m, testutil::random_values(rng, 100)) == 2);
}

TEST_CASE("constant series give length-independent counts") {
  Rng rng(53);
  auto m = init_counter(small_spec());
  randomize_biases(m, rng);
  for (double level : {0.0, 0.3, 0.75}) {
    const double ref = conv_forward(m, std::vector<double>(50, level));
    for (std::size_t n : {5, 51, 540, 2000}) CHECK(conv_forward(m, std::vector<double>(n, level)) == ref);
  }
}

TEST_CASE("counter gradients match central finite differences") {
  Rng rng(54);
  auto m = init_counter(small_spec());
  randomize_biases(m, rng);
  std::vector<std::vector<double>> series;
  std::vector<double> counts;
  for (std::size_t n : {20, 31, 64}) {
    series.push_back(testutil::random_values(rng, n, 0.0, 0.75));
    counts.push_back(std::floor(uniform(rng, 0.0, 4.0)));
  }
  const auto r = gradcheck::check_counter(m, series, counts);
  CHECK(r.checked == 3 * 5 + 3 + 4 * 3 * 3 + 4 + 4 * 4 + 4 + 4 + 1);
  CHECK(r.worst < gradcheck::kTolerance);
}

TEST_CASE("training fits a constant count with either loss") {
  Rng rng(55);
  std::vector<std::vector<double>> series;
  for (int i = 0; i < 12; ++i) series.push_back(testutil::random_values(rng, 60, 0.0, 0.75));
  const std::vector<double> counts(series.size(), 3.0);
  for (auto loss : {nn::Loss::MSE, nn::Loss::L1}) {
    const auto m = train_counter(small_spec(loss), series, counts);
    CHECK(m.loss_history.size() == 150);
    CHECK(m.loss_history.back() < m.loss_history.front());
    for (const auto& s : series) CHECK(predict_count(m, s) == 3);
    const auto again = train_counter(small_spec(loss), series, counts);
    CHECK(again.loss_history == m.loss_history);
  }
}

TEST_CASE("count rounding") {
  CHECK(round_count(2.5) == 3);
  CHECK(round_count(2.4999) == 2);
  CHECK(round_count(0.49) == 0);
  CHECK(round_count(-0.7) == 0);
  CHECK(round_count(-3.0) == 0);
  CHECK(round_count(11.51) == 12);
}

TEST_CASE("counter validation and short input") {
  auto s = small_spec();
  s.conv.clear();
  CHECK_THROWS_AS(s.validate(), UsageError);
  s = small_spec();
  s.conv[0].kernel = 4;
  CHECK_THROWS_AS(init_counter(s), UsageError);
  CHECK(small_spec().min_length() == 5);
  const auto m = init_counter(small_spec());
  CHECK_THROWS_AS(conv_forward(m, std::vector<double>(4, 0.1)), DataError);
  CHECK_NOTHROW(conv_forward(m, std::vector<double>(5, 0.1)));
  CHECK_THROWS_AS(ConvCounterSpec::from_json({{"layers", 1}}, {}), UsageError);
  CHECK(ConvCounterSpec::from_json(small_spec().to_json(), {}).to_json() == small_spec().to_json());
}

TEST_CASE("counter checkpoint round trip") {
  Rng rng(56);
  auto m = init_counter(small_spec());
  randomize_biases(m, rng);
  testutil::TempDir dir;
  save_counter(dir / "c.ckpt", m);
  const auto back = load_counter(dir / "c.ckpt");
  const auto s = testutil::random_values(rng, 200);
  CHECK(conv_forward(back, s) == conv_forward(m, s));
  CHECK(back.spec.to_json() == m.spec.to_json());

  nn::NetworkSpec net;
  net.layer_sizes = {2, 1};
  nn::save_model(dir / "n.ckpt", nn::init_model(net));
  CHECK_THROWS_AS(load_counter(dir / "n.ckpt"), DataError);
}
