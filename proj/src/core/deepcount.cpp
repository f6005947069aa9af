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

#include "deepcount.hpp"

#include <algorithm>
#include <numeric>

#include "checkpoint.hpp"
#include "json_util.hpp"

namespace avc::deepcount {

namespace {

struct ConvCache {
  Matrix input;  // in_channels x n_in
  Matrix pre;    // out_channels x n_out
};

struct Cache {
  std::vector<ConvCache> conv;
  Matrix last;           // ReLU output of the last conv layer
  Vector pooled;
  std::vector<Vector> head_in;
  std::vector<Vector> head_pre;
  double output = 0.0;
};

std::ptrdiff_t clamp_index(std::ptrdiff_t i, std::ptrdiff_t n) { return std::clamp<std::ptrdiff_t>(i, 0, n - 1); }

Matrix conv_apply(const ConvLayer& layer, const Matrix& x) {
  const auto n_in = static_cast<std::size_t>(x.cols());
  const auto n_out = static_cast<Eigen::Index>(conv_output_length(n_in, layer.stride));
  const std::ptrdiff_t pad = conv_left_pad(n_in, layer.kernel, layer.stride);
  const auto n = static_cast<std::ptrdiff_t>(n_in);
  Matrix out(layer.weights.rows(), n_out);
  for (Eigen::Index c = 0; c < layer.weights.rows(); ++c) {
    for (Eigen::Index t = 0; t < n_out; ++t) {
      double acc = layer.bias[c];
      const std::ptrdiff_t base = t * layer.stride - pad;
      for (Eigen::Index ci = 0; ci < x.rows(); ++ci)
        for (int j = 0; j < layer.kernel; ++j)
          acc += layer.weights(c, ci * layer.kernel + j) * x(ci, clamp_index(base + j, n));
      out(c, t) = acc;
    }
  }
  return out;
}

Cache run_forward(const ConvCounter& counter, std::span<const double> series) {
  if (series.size() < static_cast<std::size_t>(counter.spec.min_length()))
    throw DataError("deep counter: series of length " + std::to_string(series.size()) + " is shorter than kernel " +
                    std::to_string(counter.spec.min_length()));
  Cache cache;
  Matrix a = Eigen::Map<const RowVector>(series.data(), static_cast<Eigen::Index>(series.size()));
  for (const auto& layer : counter.conv) {
    ConvCache cc;
    cc.pre = conv_apply(layer, a);
    cc.input = std::move(a);
    a = cc.pre.cwiseMax(0.0);
    cache.conv.push_back(std::move(cc));
  }
  // Running mean: exact when every position holds the same value.
  cache.pooled = Vector::Zero(a.rows());
  for (Eigen::Index c = 0; c < a.rows(); ++c) {
    double m = 0.0;
    for (Eigen::Index t = 0; t < a.cols(); ++t) m += (a(c, t) - m) / static_cast<double>(t + 1);
    cache.pooled[c] = m;
  }
  cache.last = std::move(a);
  Vector h = cache.pooled;
  for (std::size_t l = 0; l < counter.head.size(); ++l) {
    Vector z = counter.head[l].weights * h + counter.head[l].bias;
    cache.head_in.push_back(h);
    cache.head_pre.push_back(z);
    h = (l + 1 < counter.head.size()) ? Vector(z.cwiseMax(0.0)) : z;
  }
  cache.output = h[0];
  return cache;
}

void accumulate_backward(const ConvCounter& counter, const Cache& cache, double d_out, CounterGradients& g) {
  Vector d = Vector::Constant(1, d_out);
  for (std::size_t l = counter.head.size(); l-- > 0;) {
    if (l + 1 < counter.head.size()) d = (cache.head_pre[l].array() > 0.0).select(d, 0.0);
    g.head_weights[l] += d * cache.head_in[l].transpose();
    g.head_bias[l] += d;
    d = counter.head[l].weights.transpose() * d;
  }
  const double n_last = static_cast<double>(cache.last.cols());
  Matrix d_act = (d / n_last).replicate(1, cache.last.cols());
  for (std::size_t l = counter.conv.size(); l-- > 0;) {
    const auto& layer = counter.conv[l];
    const auto& cc = cache.conv[l];
    const Matrix d_pre = (cc.pre.array() > 0.0).select(d_act, 0.0);
    const auto n = static_cast<std::ptrdiff_t>(cc.input.cols());
    const std::ptrdiff_t pad = conv_left_pad(static_cast<std::size_t>(n), layer.kernel, layer.stride);
    Matrix d_in;
    if (l > 0) d_in = Matrix::Zero(cc.input.rows(), cc.input.cols());
    for (Eigen::Index c = 0; c < d_pre.rows(); ++c) {
      for (Eigen::Index t = 0; t < d_pre.cols(); ++t) {
        const double gct = d_pre(c, t);
        if (gct == 0.0) continue;
        g.conv_bias[l][c] += gct;
        const std::ptrdiff_t base = t * layer.stride - pad;
        for (Eigen::Index ci = 0; ci < cc.input.rows(); ++ci) {
          for (int j = 0; j < layer.kernel; ++j) {
            const auto idx = clamp_index(base + j, n);
            g.conv_weights[l](c, ci * layer.kernel + j) += gct * cc.input(ci, idx);
            if (l > 0) d_in(ci, idx) += gct * layer.weights(c, ci * layer.kernel + j);
          }
        }
      }
    }
    if (l > 0) d_act = std::move(d_in);
  }
}

CounterGradients zero_grads(const ConvCounter& c) {
  CounterGradients g;
  for (const auto& l : c.conv) {
    g.conv_weights.push_back(Matrix::Zero(l.weights.rows(), l.weights.cols()));
    g.conv_bias.push_back(Vector::Zero(l.bias.size()));
  }
  for (const auto& l : c.head) {
    g.head_weights.push_back(Matrix::Zero(l.weights.rows(), l.weights.cols()));
    g.head_bias.push_back(Vector::Zero(l.bias.size()));
  }
  return g;
}

double sample_loss(nn::Loss loss, double pred, double target) {
  const double d = pred - target;
  return loss == nn::Loss::MSE ? d * d : std::abs(d);
}

double sample_loss_grad(nn::Loss loss, double pred, double target) {
  const double d = pred - target;
  if (loss == nn::Loss::MSE) return 2.0 * d;
  return d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
}

template <typename T>
void adam_step(T& p, const T& g, T& m, T& v, const ConvCounterSpec& s, double c1, double c2) {
  m = s.adam.beta1 * m + (1.0 - s.adam.beta1) * g;
  v = s.adam.beta2 * v + (1.0 - s.adam.beta2) * g.cwiseAbs2();
  p.array() -= s.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + s.adam.epsilon);
}

std::vector<double> flatten(const Matrix& m) {
  std::vector<double> out;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
  return out;
}

Matrix unflatten(const checkpoint::Block& b, Eigen::Index rows, Eigen::Index cols) {
  std::uint64_t count = 1;
  for (auto d : b.shape) count *= d;
  if (count != static_cast<std::uint64_t>(rows * cols))
    throw DataError("checkpoint block '" + b.name + "' has unexpected shape");
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = b.values[static_cast<std::size_t>(r * cols + c)];
  return m;
}

}  // namespace

int ConvCounterSpec::min_length() const {
  int k = 1;
  for (const auto& c : conv) k = std::max(k, c.kernel);
  return k;
}

void ConvCounterSpec::validate() const {
  if (conv.empty()) throw UsageError("conv counter needs at least one conv layer");
  for (const auto& c : conv) {
    if (c.channels < 1 || c.stride < 1) throw UsageError("conv layer channels and stride must be positive");
    if (c.kernel < 1 || c.kernel % 2 == 0) throw UsageError("conv kernel lengths must be odd");
  }
  for (int h : head_hidden)
    if (h < 1) throw UsageError("head widths must be positive");
  if (epochs < 0 || batch_size < 1 || !(learning_rate > 0.0)) throw UsageError("invalid conv counter training settings");
}

nlohmann::json ConvCounterSpec::to_json() const {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& c : conv) layers.push_back({c.channels, c.kernel, c.stride});
  return {{"conv", layers},
          {"head_hidden", head_hidden},
          {"loss", nn::to_string(loss)},
          {"epochs", epochs},
          {"batch_size", batch_size},
          {"learning_rate", learning_rate},
          {"adam", {{"beta1", adam.beta1}, {"beta2", adam.beta2}, {"epsilon", adam.epsilon}}},
          {"seed", seed}};
}

ConvCounterSpec ConvCounterSpec::from_json(const nlohmann::json& j, ConvCounterSpec s) {
  const std::string where = "conv counter spec";
  json_util::reject_unknown(j, {"conv", "head_hidden", "loss", "epochs", "batch_size", "learning_rate", "adam", "seed"},
                            where);
  if (j.contains("conv")) {
    std::vector<std::array<int, 3>> layers;
    json_util::read(j, "conv", layers, where);
    s.conv.clear();
    for (const auto& l : layers) s.conv.push_back({l[0], l[1], l[2]});
  }
  json_util::read(j, "head_hidden", s.head_hidden, where);
  if (j.contains("loss")) {
    std::string name;
    json_util::read(j, "loss", name, where);
    s.loss = nn::loss_from_string(name);
  }
  json_util::read(j, "epochs", s.epochs, where);
  json_util::read(j, "batch_size", s.batch_size, where);
  json_util::read(j, "learning_rate", s.learning_rate, where);
  if (j.contains("adam")) {
    const auto& a = j.at("adam");
    json_util::reject_unknown(a, {"beta1", "beta2", "epsilon"}, where + " adam");
    json_util::read(a, "beta1", s.adam.beta1, where);
    json_util::read(a, "beta2", s.adam.beta2, where);
    json_util::read(a, "epsilon", s.adam.epsilon, where);
  }
  json_util::read(j, "seed", s.seed, where);
  s.validate();
  return s;
}

std::size_t conv_output_length(std::size_t n, int stride) {
  return (n + static_cast<std::size_t>(stride) - 1) / static_cast<std::size_t>(stride);
}

std::ptrdiff_t conv_left_pad(std::size_t n, int kernel, int stride) {
  const auto out = static_cast<std::ptrdiff_t>(conv_output_length(n, stride));
  const std::ptrdiff_t total = std::max<std::ptrdiff_t>((out - 1) * stride + kernel - static_cast<std::ptrdiff_t>(n), 0);
  return total / 2;
}

ConvCounter init_counter(const ConvCounterSpec& spec) {
  spec.validate();
  ConvCounter c;
  c.spec = spec;
  Rng rng(spec.seed);
  int in_ch = 1;
  for (const auto& ls : spec.conv) {
    ConvLayer layer{ls.stride, ls.kernel, Matrix(ls.channels, in_ch * ls.kernel), Vector::Zero(ls.channels)};
    const double limit = std::sqrt(6.0 / ((in_ch + ls.channels) * ls.kernel));
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
      for (Eigen::Index k = 0; k < layer.weights.cols(); ++k) layer.weights(r, k) = uniform(rng, -limit, limit);
    c.conv.push_back(std::move(layer));
    in_ch = ls.channels;
  }
  std::vector<int> widths{in_ch};
  widths.insert(widths.end(), spec.head_hidden.begin(), spec.head_hidden.end());
  widths.push_back(1);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    nn::DenseLayer d{Matrix(widths[l + 1], widths[l]), Vector::Zero(widths[l + 1])};
    const double limit = std::sqrt(6.0 / (widths[l] + widths[l + 1]));
    for (Eigen::Index r = 0; r < d.weights.rows(); ++r)
      for (Eigen::Index k = 0; k < d.weights.cols(); ++k) d.weights(r, k) = uniform(rng, -limit, limit);
    c.head.push_back(std::move(d));
  }
  return c;
}

double conv_forward(const ConvCounter& counter, std::span<const double> series) {
  return run_forward(counter, series).output;
}

double loss_and_gradients(const ConvCounter& counter, std::span<const std::vector<double>> series,
                          std::span<const double> counts, CounterGradients& grads) {
  if (series.size() != counts.size() || series.empty()) throw UsageError("deep counter: series/count size mismatch");
  grads = zero_grads(counter);
  const double n = static_cast<double>(series.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const Cache cache = run_forward(counter, series[i]);
    loss += sample_loss(counter.spec.loss, cache.output, counts[i]) / n;
    accumulate_backward(counter, cache, sample_loss_grad(counter.spec.loss, cache.output, counts[i]) / n, grads);
  }
  if (!std::isfinite(loss)) throw NumericError("deep counter: non-finite loss");
  return loss;
}

ConvCounter train_counter(const ConvCounterSpec& spec, std::span<const std::vector<double>> series,
                          std::span<const double> counts) {
  if (series.empty()) throw DataError("deep counter: no training series");
  if (series.size() != counts.size()) throw UsageError("deep counter: series/count size mismatch");
  for (double c : counts)
    if (!(c >= 0.0)) throw DataError("deep counter: counts must be nonnegative");

  ConvCounter counter = init_counter(spec);
  CounterGradients m = zero_grads(counter), v = zero_grads(counter), g;
  std::vector<std::size_t> order(series.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(splitmix64(spec.seed ^ 0xC0FFEEull));
  long step = 0;
  std::vector<std::vector<double>> batch_series;
  std::vector<double> batch_counts;
  for (int epoch = 0; epoch < spec.epochs; ++epoch) {
    shuffle(order, rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(spec.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(spec.batch_size));
      batch_series.clear();
      batch_counts.clear();
      for (std::size_t i = start; i < stop; ++i) {
        batch_series.push_back(series[order[i]]);
        batch_counts.push_back(counts[order[i]]);
      }
      const double loss = loss_and_gradients(counter, batch_series, batch_counts, g);
      epoch_loss += loss * static_cast<double>(stop - start);
      ++step;
      const double c1 = 1.0 - std::pow(spec.adam.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(spec.adam.beta2, static_cast<double>(step));
      for (std::size_t l = 0; l < counter.conv.size(); ++l) {
        adam_step(counter.conv[l].weights, g.conv_weights[l], m.conv_weights[l], v.conv_weights[l], spec, c1, c2);
        adam_step(counter.conv[l].bias, g.conv_bias[l], m.conv_bias[l], v.conv_bias[l], spec, c1, c2);
      }
      for (std::size_t l = 0; l < counter.head.size(); ++l) {
        adam_step(counter.head[l].weights, g.head_weights[l], m.head_weights[l], v.head_weights[l], spec, c1, c2);
        adam_step(counter.head[l].bias, g.head_bias[l], m.head_bias[l], v.head_bias[l], spec, c1, c2);
      }
    }
    counter.loss_history.push_back(epoch_loss / static_cast<double>(order.size()));
  }
  return counter;
}

long round_count(double raw) { return std::max(0L, static_cast<long>(std::floor(raw + 0.5))); }

long predict_count(const ConvCounter& counter, std::span<const double> series) {
  return round_count(conv_forward(counter, series));
}

void save_counter(const std::filesystem::path& path, const ConvCounter& counter) {
  checkpoint::Container c;
  c.spec = {{"kind", "conv_counter"}, {"counter", counter.spec.to_json()}};
  int in_ch = 1;
  for (std::size_t l = 0; l < counter.conv.size(); ++l) {
    const auto& layer = counter.conv[l];
    const auto tag = "conv" + std::to_string(l);
    c.blocks.push_back({tag + ".weights",
                        {static_cast<std::uint64_t>(layer.weights.rows()), static_cast<std::uint64_t>(in_ch),
                         static_cast<std::uint64_t>(layer.kernel)},
                        flatten(layer.weights)});
    c.blocks.push_back({tag + ".bias", {static_cast<std::uint64_t>(layer.bias.size())},
                        std::vector<double>(layer.bias.data(), layer.bias.data() + layer.bias.size())});
    in_ch = static_cast<int>(layer.weights.rows());
  }
  for (std::size_t l = 0; l < counter.head.size(); ++l) {
    const auto& d = counter.head[l];
    const auto tag = "head" + std::to_string(l);
    c.blocks.push_back({tag + ".weights",
                        {static_cast<std::uint64_t>(d.weights.rows()), static_cast<std::uint64_t>(d.weights.cols())},
                        flatten(d.weights)});
    c.blocks.push_back({tag + ".bias", {static_cast<std::uint64_t>(d.bias.size())},
                        std::vector<double>(d.bias.data(), d.bias.data() + d.bias.size())});
  }
  c.blocks.push_back({"loss_history", {counter.loss_history.size()}, counter.loss_history});
  checkpoint::write(path, c);
}

ConvCounter load_counter(const std::filesystem::path& path) {
  const auto c = checkpoint::read(path);
  if (c.spec.value("kind", std::string{}) != "conv_counter" || !c.spec.contains("counter"))
    throw DataError(path.string() + ": checkpoint does not hold a conv counter");
  ConvCounter counter;
  try {
    counter = init_counter(ConvCounterSpec::from_json(c.spec.at("counter"), ConvCounterSpec{}));
  } catch (const UsageError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  for (std::size_t l = 0; l < counter.conv.size(); ++l) {
    auto& layer = counter.conv[l];
    const auto tag = "conv" + std::to_string(l);
    layer.weights = unflatten(c.block(tag + ".weights"), layer.weights.rows(), layer.weights.cols());
    layer.bias = unflatten(c.block(tag + ".bias"), layer.bias.size(), 1);
  }
  for (std::size_t l = 0; l < counter.head.size(); ++l) {
    auto& d = counter.head[l];
    const auto tag = "head" + std::to_string(l);
    d.weights = unflatten(c.block(tag + ".weights"), d.weights.rows(), d.weights.cols());
    d.bias = unflatten(c.block(tag + ".bias"), d.bias.size(), 1);
  }
  counter.loss_history = c.block("loss_history").values;
  return counter;
}

}  // namespace avc::deepcount
