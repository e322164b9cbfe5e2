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

#include "fddm/model.hpp"

#include <cmath>

#include "json_util.hpp"

namespace fddm {

namespace {

constexpr int kCheckpointVersion = 1;

Matrix apply_activation(const Matrix& pre, Activation a) {
  switch (a) {
    case Activation::kTanh:
      return pre.array().tanh().matrix();
    case Activation::kIdentity:
      return pre;
  }
  throw ParamError("unknown activation");
}

// d(act)/d(pre) expressed through the post-activation value.
Matrix activation_grad_from_post(const Matrix& post, Activation a) {
  switch (a) {
    case Activation::kTanh:
      return (1.0 - post.array().square()).matrix();
    case Activation::kIdentity:
      return Matrix::Ones(post.rows(), post.cols());
  }
  throw ParamError("unknown activation");
}

// z = x * W^T + b broadcast over rows.
Matrix affine(const Matrix& x, const DenseLayer& layer) {
  return (x * layer.W.transpose()).rowwise() + layer.b.transpose();
}

DenseLayer init_layer(int out_dim, int in_dim, Rng& rng) {
  const double bound =
      std::sqrt(6.0 / (static_cast<double>(in_dim) + out_dim));
  DenseLayer layer;
  layer.W.resize(out_dim, in_dim);
  for (Eigen::Index i = 0; i < layer.W.rows(); ++i) {
    for (Eigen::Index j = 0; j < layer.W.cols(); ++j) {
      layer.W(i, j) = rng.uniform(-bound, bound);
    }
  }
  layer.b = Vector::Zero(out_dim);
  return layer;
}

bool layer_finite(const DenseLayer& l) {
  return all_finite(l.W) && all_finite(l.b);
}

}  // namespace

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::kTanh:
      return "tanh";
    case Activation::kIdentity:
      return "identity";
  }
  throw ParamError("unknown activation");
}

Activation activation_from_name(const std::string& name) {
  if (name == "tanh") return Activation::kTanh;
  if (name == "identity") return Activation::kIdentity;
  throw ParamError("unknown activation: " + name);
}

void BackboneConfig::validate() const {
  if (input_dim < 1) throw ParamError("config: input_dim must be >= 1");
  if (feature_dim < 2) throw ParamError("config: feature_dim must be >= 2");
  if (num_classes < 2) throw ParamError("config: num_classes must be >= 2");
  if (hidden_dims.empty()) {
    throw ParamError("config: hidden_dims must be non-empty");
  }
  for (const int h : hidden_dims) {
    if (h < 1) throw ParamError("config: hidden dims must be >= 1");
  }
  if (projector_dim < 0) {
    throw ParamError("config: projector_dim must be >= 0");
  }
}

Eigen::Index ParamSet::num_params() const {
  Eigen::Index n = 0;
  const auto count = [&n](const DenseLayer& l) {
    n += l.W.size() + l.b.size();
  };
  for (const auto& l : encoder) count(l);
  count(head);
  for (const auto& l : projector) count(l);
  return n;
}

ParamSet zeros_like(const ParamSet& p) {
  ParamSet z;
  const auto zero = [](const DenseLayer& l) {
    return DenseLayer{Matrix::Zero(l.W.rows(), l.W.cols()),
                      Vector::Zero(l.b.size())};
  };
  for (const auto& l : p.encoder) z.encoder.push_back(zero(l));
  z.head = zero(p.head);
  for (const auto& l : p.projector) z.projector.push_back(zero(l));
  return z;
}

Vector flatten(const ParamSet& p) {
  Vector flat(p.num_params());
  Eigen::Index pos = 0;
  const auto put = [&](const DenseLayer& l) {
    for (Eigen::Index i = 0; i < l.W.rows(); ++i) {
      for (Eigen::Index j = 0; j < l.W.cols(); ++j) flat[pos++] = l.W(i, j);
    }
    for (Eigen::Index i = 0; i < l.b.size(); ++i) flat[pos++] = l.b[i];
  };
  for (const auto& l : p.encoder) put(l);
  put(p.head);
  for (const auto& l : p.projector) put(l);
  return flat;
}

void unflatten(const Vector& flat, ParamSet& into) {
  if (flat.size() != into.num_params()) {
    throw ShapeError("unflatten: size mismatch");
  }
  Eigen::Index pos = 0;
  const auto take = [&](DenseLayer& l) {
    for (Eigen::Index i = 0; i < l.W.rows(); ++i) {
      for (Eigen::Index j = 0; j < l.W.cols(); ++j) l.W(i, j) = flat[pos++];
    }
    for (Eigen::Index i = 0; i < l.b.size(); ++i) l.b[i] = flat[pos++];
  };
  for (auto& l : into.encoder) take(l);
  take(into.head);
  for (auto& l : into.projector) take(l);
}

void axpy(double scale, const ParamSet& x, ParamSet& y) {
  if (x.encoder.size() != y.encoder.size() ||
      x.projector.size() != y.projector.size()) {
    throw ShapeError("axpy: structure mismatch");
  }
  for (std::size_t i = 0; i < x.encoder.size(); ++i) {
    y.encoder[i].W += scale * x.encoder[i].W;
    y.encoder[i].b += scale * x.encoder[i].b;
  }
  y.head.W += scale * x.head.W;
  y.head.b += scale * x.head.b;
  for (std::size_t i = 0; i < x.projector.size(); ++i) {
    y.projector[i].W += scale * x.projector[i].W;
    y.projector[i].b += scale * x.projector[i].b;
  }
}

ModelParams init_params(const BackboneConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  ModelParams params;
  params.config = config;

  // Draw order is fixed: encoder, head, projector. Models that share a
  // backbone shape and seed therefore share backbone and head weights
  // whether or not a projector is attached.
  int in_dim = config.input_dim;
  for (const int h : config.hidden_dims) {
    params.tensors.encoder.push_back(init_layer(h, in_dim, rng));
    in_dim = h;
  }
  params.tensors.encoder.push_back(
      init_layer(config.feature_dim, in_dim, rng));
  params.tensors.head =
      init_layer(config.num_classes, config.feature_dim, rng);

  if (config.projector_dim > 0) {
    params.tensors.projector.push_back(
        init_layer(config.projector_dim, config.feature_dim, rng));
    params.tensors.projector.push_back(
        init_layer(config.projector_dim, config.projector_dim, rng));
  }
  return params;
}

ForwardResult forward(const ModelParams& params, const Matrix& X) {
  if (X.cols() != params.config.input_dim) {
    throw ShapeError("forward: expected " +
                     std::to_string(params.config.input_dim) +
                     " input columns, got " + std::to_string(X.cols()));
  }
  if (!all_finite(X)) throw InputError("forward: non-finite input");

  ForwardResult result;
  result.cache.layer_inputs.push_back(X);

  Matrix h = X;
  const std::size_t n_hidden = params.tensors.encoder.size() - 1;
  for (std::size_t l = 0; l < n_hidden; ++l) {
    h = apply_activation(affine(h, params.tensors.encoder[l]),
                         params.config.activation);
    result.cache.layer_inputs.push_back(h);
  }
  // Feature layer is linear so prototype statistics keep their scale.
  result.features = affine(h, params.tensors.encoder.back());
  result.cache.features = result.features;
  result.logits = affine(result.features, params.tensors.head);
  return result;
}

ParamSet backward(const ModelParams& params, const ForwardCache& cache,
                  const Matrix& d_logits, const Matrix& d_features_extra) {
  ParamSet grads = zeros_like(params.tensors);

  // Head: Z = V * Wh^T + bh.
  grads.head.W = d_logits.transpose() * cache.features;
  grads.head.b = d_logits.colwise().sum().transpose();
  Matrix d_features = d_logits * params.tensors.head.W;
  if (d_features_extra.size() > 0) {
    if (d_features_extra.rows() != d_features.rows() ||
        d_features_extra.cols() != d_features.cols()) {
      throw ShapeError("backward: d_features_extra shape mismatch");
    }
    d_features += d_features_extra;
  }

  // Feature layer (linear).
  const std::size_t feature_idx = params.tensors.encoder.size() - 1;
  const Matrix& feature_in = cache.layer_inputs.back();
  grads.encoder[feature_idx].W = d_features.transpose() * feature_in;
  grads.encoder[feature_idx].b = d_features.colwise().sum().transpose();
  Matrix d_hidden = d_features * params.tensors.encoder[feature_idx].W;

  // Hidden layers in reverse.
  for (std::size_t l = feature_idx; l-- > 0;) {
    const Matrix& post = cache.layer_inputs[l + 1];
    const Matrix d_pre =
        d_hidden.cwiseProduct(
            activation_grad_from_post(post, params.config.activation));
    grads.encoder[l].W = d_pre.transpose() * cache.layer_inputs[l];
    grads.encoder[l].b = d_pre.colwise().sum().transpose();
    d_hidden = d_pre * params.tensors.encoder[l].W;
  }
  return grads;
}

ProjectResult project(const ModelParams& params, const Matrix& V) {
  if (!params.has_projector()) {
    throw CapabilityError("project: model has no projector");
  }
  if (V.cols() != params.config.feature_dim) {
    throw ShapeError("project: feature width mismatch");
  }
  ProjectResult r;
  r.cache.input = V;
  r.cache.hidden_post = apply_activation(
      affine(V, params.tensors.projector[0]), params.config.activation);
  r.output = affine(r.cache.hidden_post, params.tensors.projector[1]);
  return r;
}

ProjectorBackward backward_projector(const ModelParams& params,
                                     const ProjectCache& cache,
                                     const Matrix& d_output) {
  if (!params.has_projector()) {
    throw CapabilityError("backward_projector: model has no projector");
  }
  ProjectorBackward r;
  r.grads.resize(2);

  r.grads[1].W = d_output.transpose() * cache.hidden_post;
  r.grads[1].b = d_output.colwise().sum().transpose();
  const Matrix d_hidden_post = d_output * params.tensors.projector[1].W;

  const Matrix d_pre = d_hidden_post.cwiseProduct(activation_grad_from_post(
      cache.hidden_post, params.config.activation));
  r.grads[0].W = d_pre.transpose() * cache.input;
  r.grads[0].b = d_pre.colwise().sum().transpose();
  r.d_input = d_pre * params.tensors.projector[0].W;
  return r;
}

OptimizerState make_optimizer(const ModelParams& params, double lr,
                              double momentum, double weight_decay) {
  if (!(lr > 0.0) && lr != 0.0) throw ParamError("optimizer: bad lr");
  if (momentum < 0.0 || momentum >= 1.0) {
    throw ParamError("optimizer: momentum must be in [0, 1)");
  }
  if (weight_decay < 0.0) {
    throw ParamError("optimizer: weight_decay must be >= 0");
  }
  OptimizerState state;
  state.lr = lr;
  state.momentum = momentum;
  state.weight_decay = weight_decay;
  state.velocity = zeros_like(params.tensors);
  return state;
}

void sgd_step(ModelParams& params, const ParamSet& grads,
              OptimizerState& state) {
  const auto grads_finite = [&grads]() {
    for (const auto& l : grads.encoder) {
      if (!layer_finite(l)) return false;
    }
    if (!layer_finite(grads.head)) return false;
    for (const auto& l : grads.projector) {
      if (!layer_finite(l)) return false;
    }
    return true;
  };
  if (!grads_finite()) {
    throw TrainError("sgd_step: non-finite gradient at step " +
                     std::to_string(state.steps_taken));
  }

  const auto update = [&state](DenseLayer& param, const DenseLayer& grad,
                               DenseLayer& vel) {
    // Weight decay applies to weights only, never biases.
    vel.W = state.momentum * vel.W + grad.W + state.weight_decay * param.W;
    vel.b = state.momentum * vel.b + grad.b;
    param.W -= state.lr * vel.W;
    param.b -= state.lr * vel.b;
  };

  for (std::size_t i = 0; i < params.tensors.encoder.size(); ++i) {
    update(params.tensors.encoder[i], grads.encoder[i],
           state.velocity.encoder[i]);
  }
  update(params.tensors.head, grads.head, state.velocity.head);
  for (std::size_t i = 0; i < params.tensors.projector.size(); ++i) {
    update(params.tensors.projector[i], grads.projector[i],
           state.velocity.projector[i]);
  }
  ++state.steps_taken;
}

// ---------------------------------------------------------------------------
// Checkpoint serialization
// ---------------------------------------------------------------------------

namespace {

Json layer_to_json(const DenseLayer& l) {
  return Json{{"w", matrix_to_json(l.W)}, {"b", vector_to_json(l.b)}};
}

DenseLayer layer_from_json(const Json& j) {
  return DenseLayer{matrix_from_json(j.at("w")),
                    vector_from_json(j.at("b"))};
}

Json param_set_to_json(const ParamSet& p) {
  Json j;
  j["encoder"] = Json::array();
  for (const auto& l : p.encoder) j["encoder"].push_back(layer_to_json(l));
  j["head"] = layer_to_json(p.head);
  j["projector"] = Json::array();
  for (const auto& l : p.projector) j["projector"].push_back(layer_to_json(l));
  return j;
}

ParamSet param_set_from_json(const Json& j) {
  ParamSet p;
  for (const auto& l : j.at("encoder")) p.encoder.push_back(layer_from_json(l));
  p.head = layer_from_json(j.at("head"));
  for (const auto& l : j.at("projector")) {
    p.projector.push_back(layer_from_json(l));
  }
  return p;
}

Json config_to_json(const BackboneConfig& c) {
  return Json{{"input_dim", c.input_dim},
              {"hidden_dims", c.hidden_dims},
              {"feature_dim", c.feature_dim},
              {"num_classes", c.num_classes},
              {"activation", activation_name(c.activation)},
              {"projector_dim", c.projector_dim}};
}

BackboneConfig config_from_json(const Json& j) {
  BackboneConfig c;
  c.input_dim = j.at("input_dim").get<int>();
  c.hidden_dims = j.at("hidden_dims").get<std::vector<int>>();
  c.feature_dim = j.at("feature_dim").get<int>();
  c.num_classes = j.at("num_classes").get<int>();
  c.activation = activation_from_name(j.at("activation").get<std::string>());
  c.projector_dim = j.at("projector_dim").get<int>();
  return c;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  Json j;
  j["format_version"] = kCheckpointVersion;
  j["config"] = config_to_json(ckpt.params.config);
  j["params"] = param_set_to_json(ckpt.params.tensors);
  if (ckpt.optimizer.has_value()) {
    const OptimizerState& o = *ckpt.optimizer;
    j["optimizer"] = Json{{"lr", o.lr},
                          {"momentum", o.momentum},
                          {"weight_decay", o.weight_decay},
                          {"steps_taken", o.steps_taken},
                          {"velocity", param_set_to_json(o.velocity)}};
  } else {
    j["optimizer"] = nullptr;
  }
  j["seeds"] = Json{{"init", ckpt.init_seed}, {"data", ckpt.data_seed}};
  write_text_file(path, j.dump(1) + "\n");
}

Checkpoint load_checkpoint(const std::string& path) {
  Json j;
  try {
    j = Json::parse(read_text_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("checkpoint " + path + ": " + e.what());
  }
  if (!j.contains("format_version") ||
      j.at("format_version").get<int>() != kCheckpointVersion) {
    throw SchemaError("checkpoint " + path + ": unsupported format version");
  }
  Checkpoint ckpt;
  try {
    ckpt.params.config = config_from_json(j.at("config"));
    ckpt.params.config.validate();
    ckpt.params.tensors = param_set_from_json(j.at("params"));
    if (!j.at("optimizer").is_null()) {
      const Json& o = j.at("optimizer");
      OptimizerState state;
      state.lr = o.at("lr").get<double>();
      state.momentum = o.at("momentum").get<double>();
      state.weight_decay = o.at("weight_decay").get<double>();
      state.steps_taken = o.at("steps_taken").get<std::int64_t>();
      state.velocity = param_set_from_json(o.at("velocity"));
      ckpt.optimizer = std::move(state);
    }
    ckpt.init_seed = j.at("seeds").at("init").get<std::uint64_t>();
    ckpt.data_seed = j.at("seeds").at("data").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("checkpoint " + path + ": " + e.what());
  }
  return ckpt;
}

}  // namespace fddm
