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

#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "nn.hpp"

// Direct vehicle counting from a predicted distance series of any length:
// strided 1-D convolutions with ReLU, global average pooling, dense head.
namespace avc::deepcount {

struct ConvLayerSpec {
  int channels = 16;
  int kernel = 7;
  int stride = 2;
};

struct ConvCounterSpec {
  std::vector<ConvLayerSpec> conv = {{16, 7, 2}, {32, 7, 2}, {64, 7, 2}};
  std::vector<int> head_hidden;  // hidden dense widths between pooling and the scalar output
  nn::Loss loss = nn::Loss::L1;
  int epochs = 300;
  int batch_size = 8;
  double learning_rate = 1e-3;
  nn::AdamParams adam;
  std::uint64_t seed = 0;

  int min_length() const;
  void validate() const;
  nlohmann::json to_json() const;
  static ConvCounterSpec from_json(const nlohmann::json& j, ConvCounterSpec base);
};

struct ConvLayer {
  int stride = 1;
  int kernel = 1;
  Matrix weights;  // out_channels x (in_channels * kernel), index ci*kernel + j
  Vector bias;
};

struct ConvCounter {
  ConvCounterSpec spec;
  std::vector<ConvLayer> conv;
  std::vector<nn::DenseLayer> head;
  std::vector<double> loss_history;
};

struct CounterGradients {
  std::vector<Matrix> conv_weights;
  std::vector<Vector> conv_bias;
  std::vector<Matrix> head_weights;
  std::vector<Vector> head_bias;
};

// "Same"-length strided convolution: output length ceil(n / stride), input
// indices outside the series replicate the nearest edge sample.
std::size_t conv_output_length(std::size_t n, int stride);
std::ptrdiff_t conv_left_pad(std::size_t n, int kernel, int stride);

ConvCounter init_counter(const ConvCounterSpec& spec);

double conv_forward(const ConvCounter& counter, std::span<const double> series);

// Mean loss over the batch and its gradients.
double loss_and_gradients(const ConvCounter& counter, std::span<const std::vector<double>> series,
                          std::span<const double> counts, CounterGradients& grads);

ConvCounter train_counter(const ConvCounterSpec& spec, std::span<const std::vector<double>> series,
                          std::span<const double> counts);

// Round half up, floored at zero.
long round_count(double raw);
long predict_count(const ConvCounter& counter, std::span<const double> series);

void save_counter(const std::filesystem::path& path, const ConvCounter& counter);
ConvCounter load_counter(const std::filesystem::path& path);

}  // namespace avc::deepcount
