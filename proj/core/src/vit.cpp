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
#include "vtlab/vit.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>

#include "vtlab/errors.hpp"
#include "vtlab/parallel.hpp"

namespace vtlab {

using ad::Var;

void ViTConfig::validate() const {
  if (image_side == 0 || channels == 0 || patch_size == 0 || embed_dim == 0 || n_heads == 0 || n_layers == 0 ||
      mlp_dim == 0 || n_classes == 0)
    throw ConfigError("ViT configuration sizes must all be positive");
  if (image_side % patch_size != 0)
    throw ConfigError("image side " + std::to_string(image_side) + " is not divisible by patch size " +
                      std::to_string(patch_size));
  if (embed_dim % n_heads != 0)
    throw ConfigError("embed dim " + std::to_string(embed_dim) + " is not divisible by " + std::to_string(n_heads) +
                      " heads");
}

std::vector<std::size_t> patch_index(std::size_t channels, std::size_t image_side, std::size_t patch_size) {
  if (patch_size == 0 || image_side % patch_size != 0)
    throw ConfigError("image side " + std::to_string(image_side) + " is not divisible by patch size " +
                      std::to_string(patch_size));
  const std::size_t g = image_side / patch_size;
  std::vector<std::size_t> idx;
  idx.reserve(channels * image_side * image_side);
  for (std::size_t pr = 0; pr < g; ++pr)
    for (std::size_t pc = 0; pc < g; ++pc)
      for (std::size_t i = 0; i < patch_size; ++i)
        for (std::size_t j = 0; j < patch_size; ++j)
          for (std::size_t c = 0; c < channels; ++c) {
            const std::size_t y = pr * patch_size + i, x = pc * patch_size + j;
            idx.push_back((c * image_side + y) * image_side + x);
          }
  return idx;
}

Tensor patchify(const Tensor& image, std::size_t patch_size) {
  if (image.rank() != 3 || image.dim(1) != image.dim(2))
    throw DimensionError("patchify expects a [C x S x S] image, got " + shape_str(image.shape()));
  const std::size_t c = image.dim(0), s = image.dim(1);
  const auto idx = patch_index(c, s, patch_size);
  const std::size_t d = patch_size * patch_size * c;
  Tensor out({idx.size() / d, d});
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = image[idx[i]];
  return out;
}

Tensor unpatchify(const Tensor& patches, std::size_t channels, std::size_t image_side, std::size_t patch_size) {
  const auto idx = patch_index(channels, image_side, patch_size);
  if (patches.size() != idx.size())
    throw DimensionError("unpatchify: " + shape_str(patches.shape()) + " does not fit a " + std::to_string(channels) +
                         "x" + std::to_string(image_side) + "x" + std::to_string(image_side) + " image");
  Tensor image({channels, image_side, image_side});
  for (std::size_t i = 0; i < idx.size(); ++i) image[idx[i]] = patches[i];
  return image;
}

namespace param_names {
std::string block(std::size_t layer, std::string_view leaf) {
  return "blocks." + std::to_string(layer) + "." + std::string(leaf);
}
std::string head_factor(std::size_t i) { return "head.f" + std::to_string(i); }
}  // namespace param_names

const Tensor& ModelParams::at(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw IndexError("unknown parameter '" + name + "'");
  return it->second;
}

Tensor& ModelParams::at(const std::string& name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw IndexError("unknown parameter '" + name + "'");
  return it->second;
}

std::size_t ModelParams::element_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : tensors_) n += t.size();
  return n;
}

std::size_t ModelParams::head_factor_count() const {
  std::size_t k = 0;
  while (contains(param_names::head_factor(k))) ++k;
  return k;
}

bool bitwise_equal(const ModelParams& a, const ModelParams& b) {
  if (!(a.config() == b.config()) || a.tensors().size() != b.tensors().size()) return false;
  for (const auto& [name, t] : a.tensors()) {
    if (!b.contains(name) || !bitwise_equal(t, b.at(name))) return false;
  }
  return true;
}

ModelParams init_params(const ViTConfig& config, std::uint64_t seed) {
  config.validate();
  namespace pn = param_names;
  std::mt19937_64 rng(seed);
  ModelParams p(config);
  const std::size_t e = config.embed_dim, d = config.patch_dim(), m = config.mlp_dim;
  auto normal = [&](Shape shape, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    Tensor t(std::move(shape));
    for (auto& v : t.data()) v = dist(rng);
    return t;
  };
  auto linear = [&](const std::string& prefix, std::size_t in, std::size_t out) {
    p.set(prefix + ".weight", normal({in, out}, 1.0 / std::sqrt(static_cast<double>(in))));
    p.set(prefix + ".bias", Tensor::zeros({out}));
  };
  auto norm = [&](const std::string& prefix) {
    p.set(prefix + ".weight", Tensor::filled({e}, 1.0));
    p.set(prefix + ".bias", Tensor::zeros({e}));
  };
  linear("patch_embed", d, e);
  p.set(std::string(pn::kClsToken), normal({1, e}, 0.02));
  p.set(std::string(pn::kPosEmbed), normal({config.tokens(), e}, 0.02));
  for (std::size_t l = 0; l < config.n_layers; ++l) {
    norm(pn::block(l, "norm1"));
    linear(pn::block(l, "attn.q"), e, e);
    linear(pn::block(l, "attn.k"), e, e);
    linear(pn::block(l, "attn.v"), e, e);
    linear(pn::block(l, "attn.proj"), e, e);
    norm(pn::block(l, "norm2"));
    linear(pn::block(l, "mlp.fc1"), e, m);
    linear(pn::block(l, "mlp.fc2"), m, e);
  }
  norm("norm");
  linear("head", e, config.n_classes);
  return p;
}

AttentionResult attention_forward(Var q, Var k, Var v) {
  const Shape& qs = q.shape();
  const Shape& ks = k.shape();
  const Shape& vs = v.shape();
  if (qs.size() != 2 || ks.size() != 2 || vs.size() != 2 || qs[1] != ks[1] || ks[0] != vs[0])
    throw DimensionError("attention shape mismatch: Q " + shape_str(qs) + ", K " + shape_str(ks) + ", V " +
                         shape_str(vs));
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(qs[1]));
  Var scores = ad::scale(ad::matmul(q, ad::transpose(k)), inv_sqrt_dk);
  Var weights = ad::softmax(scores);
  return {ad::matmul(weights, v), weights};
}

BoundParams bind_params(ad::Tape& tape, const ModelParams& params, const ParamFilter& requires_grad) {
  BoundParams bound;
  for (const auto& [name, t] : params.tensors()) bound.emplace(name, tape.leaf(t, requires_grad && requires_grad(name)));
  return bound;
}

namespace {

Var get(const BoundParams& p, const std::string& name) {
  auto it = p.find(name);
  if (it == p.end()) throw IndexError("unbound parameter '" + name + "'");
  return it->second;
}

Var affine_norm(const BoundParams& p, const std::string& prefix, Var x) {
  return ad::add_row(ad::mul_row(ad::layer_norm(x), get(p, prefix + ".weight")), get(p, prefix + ".bias"));
}

Var linear(const BoundParams& p, const std::string& prefix, Var x) {
  return ad::add_row(ad::matmul(x, get(p, prefix + ".weight")), get(p, prefix + ".bias"));
}

}  // namespace

GraphOutput forward_graph(const ViTConfig& config, const BoundParams& p, Var image) {
  namespace pn = param_names;
  if (image.shape() != config.image_shape())
    throw ConfigError("image shape " + shape_str(image.shape()) + " does not match model input " +
                      shape_str(config.image_shape()));
  static thread_local std::vector<std::size_t> idx_cache;
  static thread_local ViTConfig idx_config{};
  if (idx_cache.empty() || !(idx_config == config)) {
    idx_cache = patch_index(config.channels, config.image_side, config.patch_size);
    idx_config = config;
  }
  const std::size_t n = config.n_patches(), dk = config.key_dim();

  Var patches = ad::gather(image, idx_cache, {n, config.patch_dim()});
  Var x = linear(p, "patch_embed", patches);
  const Var seq[] = {get(p, std::string(pn::kClsToken)), x};
  x = ad::add(ad::concat_rows(seq), get(p, std::string(pn::kPosEmbed)));

  GraphOutput out;
  out.attention.reserve(config.n_layers * config.n_heads);
  for (std::size_t l = 0; l < config.n_layers; ++l) {
    Var h = affine_norm(p, pn::block(l, "norm1"), x);
    Var q = linear(p, pn::block(l, "attn.q"), h);
    Var k = linear(p, pn::block(l, "attn.k"), h);
    Var v = linear(p, pn::block(l, "attn.v"), h);
    std::vector<Var> heads;
    for (std::size_t hd = 0; hd < config.n_heads; ++hd) {
      const std::size_t b = hd * dk;
      auto r = attention_forward(ad::slice_cols(q, b, b + dk), ad::slice_cols(k, b, b + dk),
                                 ad::slice_cols(v, b, b + dk));
      heads.push_back(r.output);
      out.attention.push_back(r.weights);
    }
    Var attn = config.n_heads == 1 ? heads[0] : ad::concat_cols(heads);
    x = ad::add(x, linear(p, pn::block(l, "attn.proj"), attn));
    Var h2 = affine_norm(p, pn::block(l, "norm2"), x);
    Var mlp = linear(p, pn::block(l, "mlp.fc2"), ad::gelu(linear(p, pn::block(l, "mlp.fc1"), h2)));
    x = ad::add(x, mlp);
  }
  x = affine_norm(p, "norm", x);
  Var cls = ad::slice_rows(x, 0, 1);
  Var logits;
  if (p.count(std::string(pn::kHeadWeight))) {
    logits = ad::matmul(cls, get(p, std::string(pn::kHeadWeight)));
  } else {
    logits = cls;
    bool any = false;
    for (std::size_t f = 0; p.count(pn::head_factor(f)); ++f) {
      logits = ad::matmul(logits, get(p, pn::head_factor(f)));
      any = true;
    }
    if (!any) throw IndexError("model has neither head.weight nor head factors");
  }
  out.logits = ad::add_row(logits, get(p, std::string(pn::kHeadBias)));
  return out;
}

ForwardResult forward(const ModelParams& params, const Tensor& image, bool capture) {
  ad::Tape tape;
  auto bound = bind_params(tape, params);
  auto g = forward_graph(params.config(), bound, tape.leaf(image));
  ForwardResult r;
  r.logits = g.logits.value().reshaped({params.config().n_classes});
  if (capture) {
    AttentionRecord rec;
    rec.layers = params.config().n_layers;
    rec.heads = params.config().n_heads;
    for (const Var& a : g.attention) rec.weights.push_back(a.value());
    r.attention = std::move(rec);
  }
  return r;
}

std::size_t argmax(std::span<const double> values) {
  return static_cast<std::size_t>(std::distance(values.begin(), std::max_element(values.begin(), values.end())));
}

std::size_t predict(const ModelParams& params, const Tensor& image) {
  return argmax(forward(params, image).logits.data());
}

std::vector<std::size_t> predict_all(const ModelParams& params, const std::vector<Tensor>& images) {
  std::vector<std::size_t> out(images.size());
  parallel_for(images.size(), [&](std::size_t i) { out[i] = predict(params, images[i]); });
  return out;
}

ParamGradients cross_entropy_gradients(const ModelParams& params, const Tensor& image, std::size_t label,
                                       const ParamFilter& filter) {
  ad::Tape tape;
  const ParamFilter all = [](const std::string&) { return true; };
  auto bound = bind_params(tape, params, filter ? filter : all);
  auto g = forward_graph(params.config(), bound, tape.leaf(image));
  Var loss = ad::cross_entropy(g.logits, label);
  tape.backward(loss);
  ParamGradients out;
  out.loss = loss.value().item();
  for (const auto& [name, v] : bound)
    if (tape.requires_grad(v)) out.grads.emplace(name, tape.grad(v));
  return out;
}

ModelParams train_clean(const ModelParams& init, const Dataset& data, const TrainConfig& config) {
  if (data.empty()) throw InputError("train_clean: empty dataset");
  if (config.batch == 0) throw ParameterError("train_clean: batch size must be positive");
  data.validate(init.config().n_classes);
  ModelParams params = init;
  std::map<std::string, Tensor> velocity;  // keys mirror params
  for (const auto& [name, t] : params.tensors()) velocity.emplace(name, Tensor::zeros(t.shape()));

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(data.size());
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += config.batch) {
      const std::size_t end = std::min(order.size(), start + config.batch);
      std::vector<ParamGradients> per(end - start);
      parallel_for(per.size(), [&](std::size_t i) {
        const std::size_t s = order[start + i];
        per[i] = cross_entropy_gradients(params, data.images[s], data.labels[s]);
      });
      const double inv = 1.0 / static_cast<double>(per.size());
      for (auto& [name, vel] : velocity) {
        Tensor g = std::move(per[0].grads.at(name));
        for (std::size_t i = 1; i < per.size(); ++i) g += per[i].grads.at(name);
        Tensor& w = params.at(name);
        for (std::size_t j = 0; j < w.size(); ++j) {
          vel[j] = config.momentum * vel[j] + g[j] * inv;
          w[j] -= config.lr * vel[j];
        }
      }
    }
  }
  return params;
}

}  // namespace vtlab
