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

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "common.hpp"

// Small fully connected regression network. Every hidden layer is
// dense -> ReLU -> batch norm; the output layer is dense and linear.
namespace avc::nn {

enum class Loss { MSE, L1 };

std::string to_string(Loss loss);
Loss loss_from_string(const std::string& name);

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct NetworkSpec {
  std::vector<int> layer_sizes;
  double l2_factor = 0.0;
  Loss loss = Loss::MSE;
  int epochs = 100;
  int batch_size = 256;
  double learning_rate = 1e-3;
  AdamParams adam;
  double bn_momentum = 0.99;
  double bn_epsilon = 1e-3;
  std::uint64_t seed = 0;

  int input_size() const { return layer_sizes.front(); }
  int output_size() const { return layer_sizes.back(); }
  void validate() const;

  nlohmann::json to_json() const;
  // Rejects unknown keys. Missing keys keep the values already in `base`.
  static NetworkSpec from_json(const nlohmann::json& j, NetworkSpec base);
  static NetworkSpec from_json(const nlohmann::json& j) { return from_json(j, NetworkSpec{}); }
};

struct DenseLayer {
  Matrix weights;  // out x in
  Vector bias;
};

struct BatchNormLayer {
  Vector gamma;
  Vector beta;
  Vector running_mean;
  Vector running_var;
  double momentum = 0.99;
  double epsilon = 1e-3;
};

struct TrainedModel {
  NetworkSpec spec;
  std::vector<DenseLayer> dense;       // one per weight layer
  std::vector<BatchNormLayer> norms;   // one per hidden layer
  std::vector<double> train_loss_history;
  std::vector<double> val_loss_history;

  int input_size() const { return static_cast<int>(dense.front().weights.cols()); }
};

enum class Mode { Train, Infer };

struct Gradients {
  std::vector<Matrix> weights;
  std::vector<Vector> bias;
  std::vector<Vector> gamma;
  std::vector<Vector> beta;
};

struct LossAndGradients {
  double loss = 0.0;       // data term + regularization
  double data_loss = 0.0;
  Gradients grads;
};

// Glorot-uniform weights, zero biases, identity batch norm.
TrainedModel init_model(const NetworkSpec& spec);

// Train mode normalizes with batch statistics; running statistics are not
// touched here (train() owns that update).
Matrix forward(const TrainedModel& model, const Matrix& batch, Mode mode);

double data_loss(Loss loss, const Matrix& predictions, const Matrix& targets);
double regularization(const TrainedModel& model);

// Gradients of the train-mode loss with respect to every trainable
// parameter (weights, biases, gamma, beta).
LossAndGradients loss_and_gradients(const TrainedModel& model, const Matrix& batch, const Matrix& targets);

// Minibatch Adam for exactly spec.epochs epochs. Validation data, when
// given, is only used for the reported val_loss_history.
TrainedModel train(const NetworkSpec& spec, const Matrix& train_x, const Matrix& train_y,
                   const Matrix* val_x = nullptr, const Matrix* val_y = nullptr);

// Inference-mode forward pass, chunked to bound memory.
Matrix predict(const TrainedModel& model, const Matrix& x);

void save_model(const std::filesystem::path& path, const TrainedModel& model);
TrainedModel load_model(const std::filesystem::path& path);

}  // namespace avc::nn
