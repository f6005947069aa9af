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

#include <fstream>

#include "checkpoint.hpp"
#include "gradcheck.hpp"
#include "nn.hpp"
#include "test_util.hpp"

using namespace avc;
using namespace avc::nn;
using testutil::TempDir;

namespace {

NetworkSpec spec_of(std::vector<int> sizes, double l2 = 0.0, std::uint64_t seed = 1) {
  NetworkSpec s;
  s.layer_sizes = std::move(sizes);
  s.l2_factor = l2;
  s.seed = seed;
  return s;
}

// Perturbs every parameter so the batch-norm affine terms and running
// statistics are not at their identity initialisation.
void scramble(TrainedModel& m, Rng& rng) {
  for (auto& d : m.dense) d.bias = testutil::random_matrix(rng, d.bias.size(), 1, 0.3).col(0);
  for (auto& n : m.norms) {
    n.gamma = (testutil::random_matrix(rng, n.gamma.size(), 1, 0.3).array() + 1.0).matrix().col(0);
    n.beta = testutil::random_matrix(rng, n.beta.size(), 1, 0.3).col(0);
    n.running_mean = testutil::random_matrix(rng, n.beta.size(), 1, 0.5).col(0);
    n.running_var = (testutil::random_matrix(rng, n.beta.size(), 1, 0.5).array().abs() + 0.5).matrix().col(0);
  }
}

// Straight-line inference: explicit loops, no Eigen products.
Matrix reference_infer(const TrainedModel& m, const Matrix& x) {
  Matrix out(x.rows(), m.dense.back().weights.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    std::vector<double> a(static_cast<std::size_t>(x.cols()));
    for (Eigen::Index c = 0; c < x.cols(); ++c) a[static_cast<std::size_t>(c)] = x(r, c);
    for (std::size_t l = 0; l < m.dense.size(); ++l) {
      const auto& d = m.dense[l];
      std::vector<double> z(static_cast<std::size_t>(d.weights.rows()));
      for (Eigen::Index o = 0; o < d.weights.rows(); ++o) {
        double s = d.bias[o];
        for (Eigen::Index i = 0; i < d.weights.cols(); ++i) s += d.weights(o, i) * a[static_cast<std::size_t>(i)];
        z[static_cast<std::size_t>(o)] = s;
      }
      if (l + 1 < m.dense.size()) {
        const auto& n = m.norms[l];
        for (std::size_t o = 0; o < z.size(); ++o) {
          const auto oi = static_cast<Eigen::Index>(o);
          const double relu = z[o] > 0.0 ? z[o] : 0.0;
          z[o] = n.gamma[oi] * (relu - n.running_mean[oi]) / std::sqrt(n.running_var[oi] + n.epsilon) + n.beta[oi];
        }
      }
      a = std::move(z);
    }
    for (std::size_t o = 0; o < a.size(); ++o) out(r, static_cast<Eigen::Index>(o)) = a[o];
  }
  return out;
}

}  // namespace

TEST_CASE("zero parameters give zero output") {
  auto m = init_model(spec_of({6, 5, 3, 1}));
  for (auto& d : m.dense) {
    d.weights.setZero();
    d.bias.setZero();
  }
  Rng rng(2);
  const Matrix x = testutil::random_matrix(rng, 10, 6);
  CHECK(forward(m, x, Mode::Infer).cwiseAbs().maxCoeff() == 0.0);
  CHECK(predict(m, x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("single identity layer passes the input through") {
  auto m = init_model(spec_of({4, 4}));
  m.dense[0].weights.setIdentity();
  m.dense[0].bias.setZero();
  Rng rng(3);
  const Matrix x = testutil::random_matrix(rng, 7, 4);
  CHECK(forward(m, x, Mode::Infer) == x);
}

TEST_CASE("inference matches a straight-line reimplementation") {
  Rng rng(4);
  for (std::uint64_t seed : {1, 2, 3}) {
    auto m = init_model(spec_of({12, 9, 7, 2}, 0.0, seed));
    scramble(m, rng);
    const Matrix x = testutil::random_matrix(rng, 20, 12);
    CHECK((forward(m, x, Mode::Infer) - reference_infer(m, x)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("loss definitions") {
  Matrix p(2, 1), t(2, 1);
  p << 1, 3;
  t << 0, 0;
  CHECK(data_loss(Loss::MSE, p, t) == 5.0);
  CHECK(data_loss(Loss::L1, p, t) == 2.0);

  auto m = init_model(spec_of({3, 4, 1}));
  Rng rng(5);
  const Matrix x = testutil::random_matrix(rng, 16, 3);
  const Matrix y = forward(m, x, Mode::Train);
  const auto lg = loss_and_gradients(m, x, y);
  CHECK(lg.loss == 0.0);
  for (const auto& g : lg.grads.weights) CHECK(g.cwiseAbs().maxCoeff() == 0.0);
  for (const auto& g : lg.grads.bias) CHECK(g.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("doubling dense weights quadruples the L2 term") {
  auto m = init_model(spec_of({5, 4, 1}, 1e-4));
  const double r = regularization(m);
  CHECK(r > 0.0);
  for (auto& d : m.dense) d.weights *= 2.0;
  CHECK(regularization(m) == 4.0 * r);
}

TEST_CASE("gradients match central finite differences") {
  Rng rng(6);
  SUBCASE("528-8-8-1 with L2") {
    auto m = init_model(spec_of({528, 8, 8, 1}, 1e-4, 7));
    scramble(m, rng);
    const Matrix x = testutil::random_matrix(rng, 16, 528);
    const Matrix y = testutil::random_matrix(rng, 16, 1);
    const auto r = gradcheck::check_network(m, x, y);
    CHECK(r.checked == 528 * 8 + 8 + 8 * 8 + 8 + 8 + 1 + 4 * 8);
    CHECK(r.worst < gradcheck::kTolerance);
  }
  SUBCASE("31-31-15-1") {
    auto m = init_model(spec_of({31, 31, 15, 1}, 5e-6, 8));
    scramble(m, rng);
    const auto r = gradcheck::check_network(m, testutil::random_matrix(rng, 32, 31), testutil::random_matrix(rng, 32, 1));
    CHECK(r.worst < gradcheck::kTolerance);
  }
}

TEST_CASE("train-mode batch norm standardizes each unit") {
  // Identity output layer exposes the normalized hidden units.
  auto m = init_model(spec_of({5, 4, 4}));
  m.dense[1].weights.setIdentity();
  m.dense[1].bias.setZero();
  Rng rng(9);
  const Matrix x = testutil::random_matrix(rng, 64, 5, 2.0);
  const Matrix out = forward(m, x, Mode::Train);

  // Pre-normalization activations, recomputed directly.
  const Matrix h = ((x * m.dense[0].weights.transpose()).rowwise() + m.dense[0].bias.transpose()).cwiseMax(0.0);
  for (Eigen::Index u = 0; u < 4; ++u) {
    const double mu = h.col(u).mean();
    const double var = (h.col(u).array() - mu).square().mean();
    const double out_mean = out.col(u).mean();
    const double out_var = (out.col(u).array() - out_mean).square().mean();
    CHECK(std::abs(out_mean) < 1e-12);
    CHECK(std::abs(out_var - var / (var + m.norms[0].epsilon)) < 1e-6);
    if (var > 10.0) CHECK(std::abs(out_var - 1.0) < 1e-3);
  }
}

TEST_CASE("inactive ReLU units pass no gradient") {
  auto m = init_model(spec_of({3, 4, 1}));
  m.dense[0].weights = -m.dense[0].weights.cwiseAbs();
  m.dense[0].bias.setConstant(-0.1);
  Rng rng(10);
  const Matrix x = testutil::random_matrix(rng, 8, 3).cwiseAbs();
  const auto lg = loss_and_gradients(m, x, testutil::random_matrix(rng, 8, 1));
  CHECK(lg.grads.weights[0].cwiseAbs().maxCoeff() == 0.0);
  CHECK(lg.grads.bias[0].cwiseAbs().maxCoeff() == 0.0);
  CHECK(forward(m, x, Mode::Train).minCoeff() == forward(m, x, Mode::Train).maxCoeff());
}

TEST_CASE("training fits y = 2x and is deterministic") {
  Rng rng(11);
  Matrix x(1024, 1);
  for (Eigen::Index i = 0; i < x.rows(); ++i) x(i, 0) = uniform(rng, -1.0, 1.0);
  const Matrix y = 2.0 * x;
  auto spec = spec_of({1, 16, 1}, 0.0, 12);
  spec.epochs = 150;
  spec.batch_size = 32;
  spec.learning_rate = 3e-3;
  const auto a = train(spec, x, y);
  CHECK(data_loss(Loss::MSE, predict(a, x), y) < 1e-3);
  CHECK(a.train_loss_history.size() == 150);

  const auto b = train(spec, x, y);
  CHECK(a.train_loss_history == b.train_loss_history);
  CHECK(a.dense[0].weights == b.dense[0].weights);
  CHECK(a.norms[0].running_var == b.norms[0].running_var);
}

TEST_CASE("stage-1 shaped network trains for 100 epochs") {
  Rng rng(13);
  const Matrix x = testutil::random_matrix(rng, 300, 528);
  const Matrix y = testutil::random_matrix(rng, 300, 1, 0.1).array().abs().matrix();
  auto spec = spec_of({528, 64, 64, 1}, 1e-4, 14);
  const auto m = train(spec, x, y, &x, &y);
  CHECK(m.train_loss_history.size() == 100);
  CHECK(m.val_loss_history.size() == 100);
  CHECK(m.train_loss_history.back() < m.train_loss_history.front());
}

TEST_CASE("divergence is a numeric error") {
  Matrix x = Matrix::Ones(8, 2);
  Matrix y = Matrix::Constant(8, 1, 1e300);
  auto spec = spec_of({2, 3, 1});
  spec.epochs = 2;
  CHECK_THROWS_AS(train(spec, x, y), NumericError);
}

TEST_CASE("checkpoint round trip and corruption") {
  TempDir dir;
  Rng rng(15);
  auto m = init_model(spec_of({6, 5, 1}, 1e-4, 16));
  scramble(m, rng);
  m.train_loss_history = {0.5, 0.25};
  save_model(dir / "m.ckpt", m);
  const auto back = load_model(dir / "m.ckpt");
  const Matrix x = testutil::random_matrix(rng, 9, 6);
  CHECK(predict(back, x) == predict(m, x));
  CHECK(back.train_loss_history == m.train_loss_history);
  CHECK(back.spec.to_json() == m.spec.to_json());

  std::fstream f(dir / "m.ckpt", std::ios::in | std::ios::out | std::ios::binary);
  f.seekp(0);
  f.write("XXXX", 4);
  f.close();
  CHECK_THROWS_AS(load_model(dir / "m.ckpt"), DataError);

  save_model(dir / "v.ckpt", m);
  std::fstream g(dir / "v.ckpt", std::ios::in | std::ios::out | std::ios::binary);
  g.seekp(5);
  g.write("9", 1);
  g.close();
  CHECK_THROWS_WITH_AS(load_model(dir / "v.ckpt"), doctest::Contains("version"), DataError);

  save_model(dir / "t.ckpt", m);
  std::filesystem::resize_file(dir / "t.ckpt", std::filesystem::file_size(dir / "t.ckpt") - 3);
  CHECK_THROWS_AS(load_model(dir / "t.ckpt"), DataError);
}

TEST_CASE("network spec JSON") {
  const auto s = spec_of({528, 64, 64, 1}, 1e-4, 3);
  CHECK(NetworkSpec::from_json(s.to_json()).to_json() == s.to_json());
  CHECK_THROWS_AS(NetworkSpec::from_json({{"layer_size", {1, 2}}}), UsageError);
  CHECK(loss_from_string("l2") == Loss::MSE);
  CHECK_THROWS_AS(loss_from_string("huber"), UsageError);
  CHECK_THROWS_AS(spec_of({5}).validate(), UsageError);
}
