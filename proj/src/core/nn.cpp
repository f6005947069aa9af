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

#include "nn.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "checkpoint.hpp"

namespace avc::nn {

namespace {

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct HiddenCache {
  Matrix input;    // A_{l-1}
  Matrix pre;      // dense output before ReLU
  Matrix xhat;     // normalized ReLU output
  RowVector mean;
  RowVector var;
  RowVector inv_std;
};

struct ForwardCache {
  std::vector<HiddenCache> hidden;
  Matrix last_input;
  Matrix output;
};

Matrix dense_forward(const DenseLayer& layer, const Matrix& input) {
  Matrix z = input * layer.weights.transpose();
  z.rowwise() += layer.bias.transpose();
  return z;
}

ForwardCache forward_train(const TrainedModel& model, const Matrix& batch) {
  ForwardCache cache;
  Matrix a = batch;
  const std::size_t hidden = model.norms.size();
  cache.hidden.resize(hidden);
  const double n = static_cast<double>(batch.rows());
  for (std::size_t l = 0; l < hidden; ++l) {
    auto& h = cache.hidden[l];
    const auto& bn = model.norms[l];
    h.pre = dense_forward(model.dense[l], a);
    h.input = std::move(a);
    const Matrix relu = h.pre.cwiseMax(0.0);
    h.mean = relu.colwise().sum() / n;
    const Matrix centered = relu.rowwise() - h.mean;
    h.var = centered.array().square().colwise().sum() / n;
    h.inv_std = (h.var.array() + bn.epsilon).rsqrt().matrix();
    h.xhat = centered.array().rowwise() * h.inv_std.array();
    a = (h.xhat.array().rowwise() * bn.gamma.transpose().array()).matrix();
    a.rowwise() += bn.beta.transpose();
  }
  cache.output = dense_forward(model.dense.back(), a);
  cache.last_input = std::move(a);
  return cache;
}

Matrix loss_gradient(Loss loss, const Matrix& predictions, const Matrix& targets) {
  const double count = static_cast<double>(predictions.size());
  const Matrix diff = predictions - targets;
  if (loss == Loss::MSE) return 2.0 * diff / count;
  return diff.unaryExpr([](double d) { return d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0); }) / count;
}

Gradients zero_like(const TrainedModel& model) {
  Gradients g;
  for (const auto& d : model.dense) {
    g.weights.push_back(Matrix::Zero(d.weights.rows(), d.weights.cols()));
    g.bias.push_back(Vector::Zero(d.bias.size()));
  }
  for (const auto& bn : model.norms) {
    g.gamma.push_back(Vector::Zero(bn.gamma.size()));
    g.beta.push_back(Vector::Zero(bn.beta.size()));
  }
  return g;
}

Gradients backward(const TrainedModel& model, const ForwardCache& cache, const Matrix& d_output) {
  Gradients g = zero_like(model);
  const std::size_t last = model.dense.size() - 1;
  g.weights[last] = d_output.transpose() * cache.last_input;
  g.bias[last] = d_output.colwise().sum().transpose();
  Matrix d_a = d_output * model.dense[last].weights;

  const double n = static_cast<double>(d_output.rows());
  for (std::size_t l = model.norms.size(); l-- > 0;) {
    const auto& h = cache.hidden[l];
    const auto& bn = model.norms[l];
    g.gamma[l] = (d_a.array() * h.xhat.array()).colwise().sum().transpose();
    g.beta[l] = d_a.colwise().sum().transpose();
    const Matrix d_xhat = d_a.array().rowwise() * bn.gamma.transpose().array();
    const RowVector sum_dx = d_xhat.colwise().sum();
    const RowVector sum_dx_xhat = (d_xhat.array() * h.xhat.array()).colwise().sum();
    Matrix d_relu = (n * d_xhat.array()).matrix();
    d_relu.rowwise() -= sum_dx;
    d_relu -= (h.xhat.array().rowwise() * sum_dx_xhat.array()).matrix();
    d_relu = (d_relu.array().rowwise() * (h.inv_std.array() / n)).matrix();
    const Matrix d_pre = (h.pre.array() > 0.0).select(d_relu, 0.0);
    g.weights[l] = d_pre.transpose() * h.input;
    g.bias[l] = d_pre.colwise().sum().transpose();
    if (l > 0) d_a = d_pre * model.dense[l].weights;
  }
  for (std::size_t l = 0; l < model.dense.size(); ++l)
    g.weights[l] += 2.0 * model.spec.l2_factor * model.dense[l].weights;
  return g;
}

void check_input(const TrainedModel& model, const Matrix& batch) {
  if (batch.cols() != model.input_size())
    throw UsageError("network expects " + std::to_string(model.input_size()) + " inputs, got " +
                     std::to_string(batch.cols()));
}

struct AdamState {
  Gradients m;
  Gradients v;
  long step = 0;
};

template <typename T>
void adam_update(T& param, const T& grad, T& m, T& v, const NetworkSpec& spec, double c1, double c2) {
  m = spec.adam.beta1 * m + (1.0 - spec.adam.beta1) * grad;
  v = spec.adam.beta2 * v + (1.0 - spec.adam.beta2) * grad.cwiseAbs2();
  param.array() -= spec.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + spec.adam.epsilon);
}

void apply_adam(TrainedModel& model, const Gradients& g, AdamState& s) {
  ++s.step;
  const auto& spec = model.spec;
  const double c1 = 1.0 - std::pow(spec.adam.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(spec.adam.beta2, static_cast<double>(s.step));
  for (std::size_t l = 0; l < model.dense.size(); ++l) {
    adam_update(model.dense[l].weights, g.weights[l], s.m.weights[l], s.v.weights[l], spec, c1, c2);
    adam_update(model.dense[l].bias, g.bias[l], s.m.bias[l], s.v.bias[l], spec, c1, c2);
  }
  for (std::size_t l = 0; l < model.norms.size(); ++l) {
    adam_update(model.norms[l].gamma, g.gamma[l], s.m.gamma[l], s.v.gamma[l], spec, c1, c2);
    adam_update(model.norms[l].beta, g.beta[l], s.m.beta[l], s.v.beta[l], spec, c1, c2);
  }
}

std::vector<double> to_values(const Matrix& m) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
  return out;
}

std::vector<double> to_values(const Vector& v) { return {v.data(), v.data() + v.size()}; }

Matrix matrix_from(const checkpoint::Block& b, Eigen::Index rows, Eigen::Index cols) {
  if (b.shape.size() != 2 || b.shape[0] != static_cast<std::uint64_t>(rows) ||
      b.shape[1] != static_cast<std::uint64_t>(cols))
    throw DataError("checkpoint block '" + b.name + "' has unexpected shape");
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = b.values[static_cast<std::size_t>(r * cols + c)];
  return m;
}

Vector vector_from(const checkpoint::Block& b, Eigen::Index n) {
  if (b.shape.size() != 1 || b.shape[0] != static_cast<std::uint64_t>(n))
    throw DataError("checkpoint block '" + b.name + "' has unexpected shape");
  return Eigen::Map<const Vector>(b.values.data(), n);
}

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw UsageError(where + ": expected a JSON object");
  for (const auto& [key, value] : j.items())
    if (!allowed.contains(key)) throw UsageError(where + ": unknown key '" + key + "'");
}

}  // namespace

std::string to_string(Loss loss) { return loss == Loss::MSE ? "mse" : "l1"; }

Loss loss_from_string(const std::string& name) {
  if (name == "mse" || name == "l2") return Loss::MSE;
  if (name == "l1") return Loss::L1;
  throw UsageError("unknown loss '" + name + "' (expected mse/l2 or l1)");
}

void NetworkSpec::validate() const {
  if (layer_sizes.size() < 2) throw UsageError("network needs at least 2 layer sizes");
  for (int s : layer_sizes)
    if (s < 1) throw UsageError("layer sizes must be positive");
  if (!(l2_factor >= 0.0)) throw UsageError("l2_factor must be nonnegative");
  if (epochs < 0) throw UsageError("epochs must be nonnegative");
  if (batch_size < 1) throw UsageError("batch_size must be positive");
  if (!(learning_rate > 0.0)) throw UsageError("learning_rate must be positive");
  if (!(bn_epsilon > 0.0)) throw UsageError("batch norm epsilon must be positive");
  if (!(bn_momentum >= 0.0 && bn_momentum <= 1.0)) throw UsageError("batch norm momentum must lie in [0, 1]");
}

nlohmann::json NetworkSpec::to_json() const {
  return {{"layer_sizes", layer_sizes},
          {"activation", "relu"},
          {"l2_factor", l2_factor},
          {"loss", to_string(loss)},
          {"epochs", epochs},
          {"batch_size", batch_size},
          {"learning_rate", learning_rate},
          {"adam", {{"beta1", adam.beta1}, {"beta2", adam.beta2}, {"epsilon", adam.epsilon}}},
          {"batch_norm", {{"momentum", bn_momentum}, {"epsilon", bn_epsilon}}},
          {"seed", seed}};
}

NetworkSpec NetworkSpec::from_json(const nlohmann::json& j, NetworkSpec s) {
  reject_unknown(j,
                 {"layer_sizes", "activation", "l2_factor", "loss", "epochs", "batch_size", "learning_rate", "adam",
                  "batch_norm", "seed"},
                 "network spec");
  try {
    if (j.contains("layer_sizes")) s.layer_sizes = j.at("layer_sizes").get<std::vector<int>>();
    if (j.contains("activation") && j.at("activation").get<std::string>() != "relu")
      throw UsageError("network spec: only 'relu' activation is supported");
    if (j.contains("l2_factor")) s.l2_factor = j.at("l2_factor").get<double>();
    if (j.contains("loss")) s.loss = loss_from_string(j.at("loss").get<std::string>());
    if (j.contains("epochs")) s.epochs = j.at("epochs").get<int>();
    if (j.contains("batch_size")) s.batch_size = j.at("batch_size").get<int>();
    if (j.contains("learning_rate")) s.learning_rate = j.at("learning_rate").get<double>();
    if (j.contains("adam")) {
      const auto& a = j.at("adam");
      reject_unknown(a, {"beta1", "beta2", "epsilon"}, "network spec adam");
      s.adam.beta1 = a.value("beta1", s.adam.beta1);
      s.adam.beta2 = a.value("beta2", s.adam.beta2);
      s.adam.epsilon = a.value("epsilon", s.adam.epsilon);
    }
    if (j.contains("batch_norm")) {
      const auto& b = j.at("batch_norm");
      reject_unknown(b, {"momentum", "epsilon"}, "network spec batch_norm");
      s.bn_momentum = b.value("momentum", s.bn_momentum);
      s.bn_epsilon = b.value("epsilon", s.bn_epsilon);
    }
    if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("network spec: ") + e.what());
  }
  s.validate();
  return s;
}

TrainedModel init_model(const NetworkSpec& spec) {
  spec.validate();
  TrainedModel model;
  model.spec = spec;
  Rng rng(spec.seed);
  for (std::size_t l = 0; l + 1 < spec.layer_sizes.size(); ++l) {
    const int in = spec.layer_sizes[l];
    const int out = spec.layer_sizes[l + 1];
    const double limit = std::sqrt(6.0 / (in + out));
    DenseLayer d{Matrix(out, in), Vector::Zero(out)};
    for (Eigen::Index r = 0; r < out; ++r)
      for (Eigen::Index c = 0; c < in; ++c) d.weights(r, c) = uniform(rng, -limit, limit);
    model.dense.push_back(std::move(d));
    if (l + 2 < spec.layer_sizes.size())
      model.norms.push_back({Vector::Ones(out), Vector::Zero(out), Vector::Zero(out), Vector::Ones(out),
                             spec.bn_momentum, spec.bn_epsilon});
  }
  return model;
}

Matrix forward(const TrainedModel& model, const Matrix& batch, Mode mode) {
  check_input(model, batch);
  if (mode == Mode::Train) return forward_train(model, batch).output;
  Matrix a = batch;
  for (std::size_t l = 0; l < model.norms.size(); ++l) {
    const auto& bn = model.norms[l];
    Matrix relu = dense_forward(model.dense[l], a).cwiseMax(0.0);
    const Vector scale = bn.gamma.array() / (bn.running_var.array() + bn.epsilon).sqrt();
    relu.rowwise() -= bn.running_mean.transpose();
    a = (relu.array().rowwise() * scale.transpose().array()).matrix();
    a.rowwise() += bn.beta.transpose();
  }
  return dense_forward(model.dense.back(), a);
}

double data_loss(Loss loss, const Matrix& predictions, const Matrix& targets) {
  if (predictions.rows() != targets.rows() || predictions.cols() != targets.cols())
    throw UsageError("loss: prediction and target shapes differ");
  const auto diff = (predictions - targets).array();
  return loss == Loss::MSE ? diff.square().mean() : diff.abs().mean();
}

double regularization(const TrainedModel& model) {
  double sum = 0.0;
  for (const auto& d : model.dense) sum += d.weights.squaredNorm();
  return model.spec.l2_factor * sum;
}

LossAndGradients loss_and_gradients(const TrainedModel& model, const Matrix& batch, const Matrix& targets) {
  check_input(model, batch);
  if (targets.rows() != batch.rows() || targets.cols() != model.spec.output_size())
    throw UsageError("loss_and_gradients: target shape does not match network output");
  const ForwardCache cache = forward_train(model, batch);
  LossAndGradients out;
  out.data_loss = data_loss(model.spec.loss, cache.output, targets);
  out.loss = out.data_loss + regularization(model);
  if (!std::isfinite(out.loss)) throw NumericError("non-finite training loss");
  out.grads = backward(model, cache, loss_gradient(model.spec.loss, cache.output, targets));
  return out;
}

TrainedModel train(const NetworkSpec& spec, const Matrix& train_x, const Matrix& train_y, const Matrix* val_x,
                   const Matrix* val_y) {
  TrainedModel model = init_model(spec);
  if (train_x.rows() == 0) throw DataError("train: empty training set");
  check_input(model, train_x);
  if (train_y.rows() != train_x.rows() || train_y.cols() != spec.output_size())
    throw UsageError("train: target shape does not match inputs");
  const bool have_val = val_x != nullptr && val_y != nullptr && val_x->rows() > 0;

  const RowMajorMatrix xs = train_x;
  const RowMajorMatrix ys = train_y;
  const auto n = static_cast<std::size_t>(train_x.rows());
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Rng shuffle_rng(splitmix64(spec.seed ^ 0x5EEDull));

  AdamState adam{zero_like(model), zero_like(model), 0};
  Matrix batch_x, batch_y;
  for (int epoch = 0; epoch < spec.epochs; ++epoch) {
    shuffle(order, shuffle_rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(spec.batch_size)) {
      const std::size_t stop = std::min(n, start + static_cast<std::size_t>(spec.batch_size));
      const auto rows = static_cast<Eigen::Index>(stop - start);
      batch_x.resize(rows, xs.cols());
      batch_y.resize(rows, ys.cols());
      for (Eigen::Index i = 0; i < rows; ++i) {
        batch_x.row(i) = xs.row(order[start + static_cast<std::size_t>(i)]);
        batch_y.row(i) = ys.row(order[start + static_cast<std::size_t>(i)]);
      }

      const ForwardCache cache = forward_train(model, batch_x);
      const double loss = data_loss(spec.loss, cache.output, batch_y) + regularization(model);
      if (!std::isfinite(loss))
        throw NumericError("training diverged (non-finite loss) in epoch " + std::to_string(epoch + 1));
      epoch_loss += loss * static_cast<double>(rows);
      const Gradients g = backward(model, cache, loss_gradient(spec.loss, cache.output, batch_y));

      for (std::size_t l = 0; l < model.norms.size(); ++l) {
        auto& bn = model.norms[l];
        bn.running_mean = bn.momentum * bn.running_mean + (1.0 - bn.momentum) * cache.hidden[l].mean.transpose();
        bn.running_var = bn.momentum * bn.running_var + (1.0 - bn.momentum) * cache.hidden[l].var.transpose();
      }
      apply_adam(model, g, adam);
    }
    model.train_loss_history.push_back(epoch_loss / static_cast<double>(n));
    if (have_val) model.val_loss_history.push_back(data_loss(spec.loss, predict(model, *val_x), *val_y));
  }
  return model;
}

Matrix predict(const TrainedModel& model, const Matrix& x) {
  check_input(model, x);
  constexpr Eigen::Index kChunk = 8192;
  if (x.rows() <= kChunk) return forward(model, x, Mode::Infer);
  Matrix out(x.rows(), model.spec.output_size());
  for (Eigen::Index start = 0; start < x.rows(); start += kChunk) {
    const Eigen::Index rows = std::min(kChunk, x.rows() - start);
    out.middleRows(start, rows) = forward(model, x.middleRows(start, rows), Mode::Infer);
  }
  return out;
}

void save_model(const std::filesystem::path& path, const TrainedModel& model) {
  checkpoint::Container c;
  c.spec = {{"kind", "dense_network"}, {"network", model.spec.to_json()}};
  for (std::size_t l = 0; l < model.dense.size(); ++l) {
    const auto& d = model.dense[l];
    const auto tag = std::to_string(l);
    c.blocks.push_back({"dense" + tag + ".weights",
                        {static_cast<std::uint64_t>(d.weights.rows()), static_cast<std::uint64_t>(d.weights.cols())},
                        to_values(d.weights)});
    c.blocks.push_back({"dense" + tag + ".bias", {static_cast<std::uint64_t>(d.bias.size())}, to_values(d.bias)});
  }
  for (std::size_t l = 0; l < model.norms.size(); ++l) {
    const auto& bn = model.norms[l];
    const auto tag = "bn" + std::to_string(l);
    const std::vector<std::uint64_t> shape{static_cast<std::uint64_t>(bn.gamma.size())};
    c.blocks.push_back({tag + ".gamma", shape, to_values(bn.gamma)});
    c.blocks.push_back({tag + ".beta", shape, to_values(bn.beta)});
    c.blocks.push_back({tag + ".running_mean", shape, to_values(bn.running_mean)});
    c.blocks.push_back({tag + ".running_var", shape, to_values(bn.running_var)});
  }
  c.blocks.push_back({"train_loss_history", {model.train_loss_history.size()}, model.train_loss_history});
  c.blocks.push_back({"val_loss_history", {model.val_loss_history.size()}, model.val_loss_history});
  checkpoint::write(path, c);
}

TrainedModel load_model(const std::filesystem::path& path) {
  const auto c = checkpoint::read(path);
  if (c.spec.value("kind", std::string{}) != "dense_network" || !c.spec.contains("network"))
    throw DataError(path.string() + ": checkpoint does not hold a dense network");
  TrainedModel model;
  try {
    model.spec = NetworkSpec::from_json(c.spec.at("network"));
  } catch (const UsageError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  const auto& sizes = model.spec.layer_sizes;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const auto tag = std::to_string(l);
    model.dense.push_back({matrix_from(c.block("dense" + tag + ".weights"), sizes[l + 1], sizes[l]),
                           vector_from(c.block("dense" + tag + ".bias"), sizes[l + 1])});
    if (l + 2 < sizes.size()) {
      const auto bt = "bn" + tag;
      const Eigen::Index n = sizes[l + 1];
      model.norms.push_back({vector_from(c.block(bt + ".gamma"), n), vector_from(c.block(bt + ".beta"), n),
                             vector_from(c.block(bt + ".running_mean"), n),
                             vector_from(c.block(bt + ".running_var"), n), model.spec.bn_momentum,
                             model.spec.bn_epsilon});
    }
  }
  model.train_loss_history = c.block("train_loss_history").values;
  model.val_loss_history = c.block("val_loss_history").values;
  return model;
}

}  // namespace avc::nn
