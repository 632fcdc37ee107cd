/*
Copyright 2026 The vtlab Authors. All rights reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vtlab/autodiff.hpp"
#include "vtlab/dataset.hpp"
#include "vtlab/tensor.hpp"

namespace vtlab {

struct ViTConfig {
  std::size_t image_side = 16;
  std::size_t channels = 1;
  std::size_t patch_size = 4;
  std::size_t embed_dim = 32;
  std::size_t n_heads = 2;
  std::size_t n_layers = 2;
  std::size_t mlp_dim = 64;
  std::size_t n_classes = 4;

  std::size_t grid() const { return image_side / patch_size; }
  std::size_t n_patches() const { return grid() * grid(); }
  std::size_t patch_dim() const { return patch_size * patch_size * channels; }
  std::size_t key_dim() const { return embed_dim / n_heads; }
  std::size_t tokens() const { return n_patches() + 1; }
  Shape image_shape() const { return {channels, image_side, image_side}; }

  // Throws ConfigError on zero sizes or non-divisible geometry.
  void validate() const;
  bool operator==(const ViTConfig&) const = default;
};

// Flat pixel index for every (patch, slot) pair: entry t * d + j is the pixel
// that lands at column j of patch row t. Patches are in raster order; inside a
// patch pixels are row-major with channels innermost.
std::vector<std::size_t> patch_index(std::size_t channels, std::size_t image_side, std::size_t patch_size);

Tensor patchify(const Tensor& image, std::size_t patch_size);
Tensor unpatchify(const Tensor& patches, std::size_t channels, std::size_t image_side, std::size_t patch_size);

namespace param_names {
inline constexpr std::string_view kPatchWeight = "patch_embed.weight";
inline constexpr std::string_view kPatchBias = "patch_embed.bias";
inline constexpr std::string_view kClsToken = "cls_token";
inline constexpr std::string_view kPosEmbed = "pos_embed";
inline constexpr std::string_view kNormWeight = "norm.weight";
inline constexpr std::string_view kNormBias = "norm.bias";
inline constexpr std::string_view kHeadWeight = "head.weight";
inline constexpr std::string_view kHeadBias = "head.bias";

// "blocks.<layer>.<leaf>", e.g. block(1, "attn.proj.weight").
std::string block(std::size_t layer, std::string_view leaf);
// "head.f<i>": factor i of a decomposed classification head.
std::string head_factor(std::size_t i);
}  // namespace param_names

/// Named parameter tensors of one model. Identifiers are stable and iterate
/// in lexicographic order.
class ModelParams {
 public:
  ModelParams() = default;
  explicit ModelParams(ViTConfig config) : config_(config) {}

  const ViTConfig& config() const { return config_; }
  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);
  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
  void set(const std::string& name, Tensor value) { tensors_[name] = std::move(value); }
  void erase(const std::string& name) { tensors_.erase(name); }
  const std::map<std::string, Tensor>& tensors() const { return tensors_; }
  std::size_t element_count() const;

  // Number of head.f<i> factors, 0 for a plain head.
  std::size_t head_factor_count() const;

 private:
  ViTConfig config_;
  std::map<std::string, Tensor> tensors_;
};

bool bitwise_equal(const ModelParams& a, const ModelParams& b);

ModelParams init_params(const ViTConfig& config, std::uint64_t seed);

/// Captured attention weights, one [(n+1) x (n+1)] matrix per (layer, head).
/// Row = query position, column = key position; the class token is position 0.
struct AttentionRecord {
  std::size_t layers = 0;
  std::size_t heads = 0;
  std::vector<Tensor> weights;

  const Tensor& at(std::size_t layer, std::size_t head) const { return weights[layer * heads + head]; }
};

struct AttentionResult {
  ad::Var output;
  ad::Var weights;
};

// softmax(q k^T / sqrt(D_k)) v for one head; q [m x D_k], k [n x D_k], v [n x D_v].
AttentionResult attention_forward(ad::Var q, ad::Var k, ad::Var v);

using BoundParams = std::map<std::string, ad::Var>;
using ParamFilter = std::function<bool(const std::string&)>;

// Records every parameter as a leaf; those accepted by requires_grad get gradients.
BoundParams bind_params(ad::Tape& tape, const ModelParams& params, const ParamFilter& requires_grad = {});

struct GraphOutput {
  ad::Var logits;                  // [1 x n_classes]
  std::vector<ad::Var> attention;  // index layer * n_heads + head
};

// Builds the forward graph for one image Var of shape [C x S x S].
GraphOutput forward_graph(const ViTConfig& config, const BoundParams& params, ad::Var image);

struct ForwardResult {
  Tensor logits;
  std::optional<AttentionRecord> attention;
};

ForwardResult forward(const ModelParams& params, const Tensor& image, bool capture = false);
std::size_t argmax(std::span<const double> values);
std::size_t predict(const ModelParams& params, const Tensor& image);
std::vector<std::size_t> predict_all(const ModelParams& params, const std::vector<Tensor>& images);

// Cross-entropy loss and its gradient w.r.t. every parameter accepted by filter.
struct ParamGradients {
  double loss = 0.0;
  std::map<std::string, Tensor> grads;
};
ParamGradients cross_entropy_gradients(const ModelParams& params, const Tensor& image, std::size_t label,
                                       const ParamFilter& filter = {});

struct TrainConfig {
  std::size_t epochs = 30;
  double lr = 0.05;
  double momentum = 0.9;
  std::size_t batch = 32;
  std::uint64_t seed = 0;
};

// Minibatch SGD with momentum on cross-entropy. Batch order is a seeded
// shuffle per epoch; per-image gradients are reduced in batch order.
ModelParams train_clean(const ModelParams& init, const Dataset& data, const TrainConfig& config);

}  // namespace vtlab
