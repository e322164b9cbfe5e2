/*
 * Copyright 2026 The FDDM Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// A small differentiable backbone: MLP encoder, linear multi-label head,
// and (for students) a two-layer MLP projector into the teacher feature
// space. Forward/backward are hand-written so every parameter gradient can
// be verified against finite differences.

#ifndef FDDM_MODEL_HPP_
#define FDDM_MODEL_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fddm/common.hpp"

namespace fddm {

enum class Activation { kTanh, kIdentity };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

struct BackboneConfig {
  int input_dim = 0;
  std::vector<int> hidden_dims;
  int feature_dim = 0;
  int num_classes = 0;
  Activation activation = Activation::kTanh;
  // Width of the teacher feature space the projector maps into.
  // 0 means no projector (teacher models).
  int projector_dim = 0;

  void validate() const;
};

struct DenseLayer {
  Matrix W;  // out x in
  Vector b;  // out
};

// Every parameter tensor of one model, in a fixed order. Gradients and
// momentum buffers reuse the same structure.
struct ParamSet {
  std::vector<DenseLayer> encoder;   // hidden layers then the feature layer
  DenseLayer head;                   // feature_dim -> num_classes
  std::vector<DenseLayer> projector; // empty, or two layers

  Eigen::Index num_params() const;
};

ParamSet zeros_like(const ParamSet& p);
Vector flatten(const ParamSet& p);
void unflatten(const Vector& flat, ParamSet& into);

/// y += scale * x, entrywise over every tensor.
void axpy(double scale, const ParamSet& x, ParamSet& y);

struct ModelParams {
  BackboneConfig config;
  ParamSet tensors;

  bool has_projector() const { return !tensors.projector.empty(); }
};

/// Fan-balanced uniform init (bound = sqrt(6/(fan_in+fan_out))), zero
/// biases. Bitwise deterministic in (config, seed).
ModelParams init_params(const BackboneConfig& config, std::uint64_t seed);

struct ForwardCache {
  // Post-activation outputs: layer_inputs[0] is X, then one entry per
  // hidden layer; features is the linear output of the feature layer.
  std::vector<Matrix> layer_inputs;
  Matrix features;
};

struct ForwardResult {
  Matrix features;  // B x feature_dim (linear output of the feature layer)
  Matrix logits;    // B x num_classes
  ForwardCache cache;
};

ForwardResult forward(const ModelParams& params, const Matrix& X);

/// Backward through head + encoder. d_logits is dL/dZ; d_features_extra,
/// when non-empty, is an additional dL/dV injected at the feature layer
/// (the projector path). Projector grads in the result are zero tensors.
ParamSet backward(const ModelParams& params, const ForwardCache& cache,
                  const Matrix& d_logits, const Matrix& d_features_extra);

struct ProjectCache {
  Matrix input;        // B x feature_dim
  Matrix hidden_post;  // B x projector_dim
};

struct ProjectResult {
  Matrix output;  // B x projector_dim
  ProjectCache cache;
};

/// Student-only projection of backbone features into the teacher space.
/// Throws CapabilityError when called on a model without a projector.
ProjectResult project(const ModelParams& params, const Matrix& V);

struct ProjectorBackward {
  std::vector<DenseLayer> grads;  // two layers, same shapes as the projector
  Matrix d_input;                 // dL/dV
};

ProjectorBackward backward_projector(const ModelParams& params,
                                     const ProjectCache& cache,
                                     const Matrix& d_output);

struct OptimizerState {
  double lr = 1e-3;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  ParamSet velocity;
  std::int64_t steps_taken = 0;
};

OptimizerState make_optimizer(const ModelParams& params, double lr,
                              double momentum, double weight_decay);

/// One SGD step: v <- momentum*v + grad + weight_decay*param (decay applies
/// to weights, not biases); param <- param - lr*v.
void sgd_step(ModelParams& params, const ParamSet& grads,
              OptimizerState& state);

// ---------------------------------------------------------------------------
// Checkpointing. JSON container, bit-exact round trip for every tensor.
// ---------------------------------------------------------------------------

struct Checkpoint {
  ModelParams params;
  std::optional<OptimizerState> optimizer;
  std::uint64_t init_seed = 0;
  std::uint64_t data_seed = 0;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace fddm

#endif  // FDDM_MODEL_HPP_
