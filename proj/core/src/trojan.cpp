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
#include "vtlab/trojan.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "vtlab/errors.hpp"
#include "vtlab/parallel.hpp"

namespace vtlab {

std::vector<std::string> target_tensor_names(const ModelParams& params) {
  namespace pn = param_names;
  const std::size_t layers = params.config().n_layers;
  if (layers == 0) throw ParameterError("model has no transformer layers");
  std::vector<std::string> names = {pn::block(layers - 1, "attn.proj.weight"), pn::block(layers - 1, "attn.proj.bias")};
  if (params.contains(std::string(pn::kHeadWeight))) {
    names.emplace_back(pn::kHeadWeight);
  } else {
    for (std::size_t f = 0; params.contains(pn::head_factor(f)); ++f) names.push_back(pn::head_factor(f));
  }
  names.emplace_back(pn::kHeadBias);
  for (const auto& n : names)
    if (!params.contains(n)) throw ParameterError("model is missing target tensor '" + n + "'");
  return names;
}

TargetWeightSet init_target_weights(const ModelParams& params) {
  TargetWeightSet w;
  for (const auto& name : target_tensor_names(params)) {
    const Tensor& t = params.at(name);
    for (std::size_t i = 0; i < t.size(); ++i) {
      w.ids.push_back({name, i});
      w.values.push_back(t[i]);
      w.baseline.push_back(t[i]);
    }
  }
  return w;
}

void InsertionConfig::validate() const {
  if (!(threshold >= 0.0)) throw ParameterError("insertion threshold e must be >= 0");
  if (epochs < 1) throw ParameterError("insertion needs at least one epoch");
  if (batch < 1) throw ParameterError("insertion batch size must be positive");
  if (!(lr > 0.0)) throw ParameterError("insertion learning rate must be positive");
}

InsertionResult trojan_insertion(const ModelParams& clean, const TriggerSpec& trigger,
                                 const std::vector<Tensor>& batch, const InsertionConfig& config) {
  config.validate();
  if (batch.empty()) throw InputError("trojan insertion needs a nonempty image batch");
  const ViTConfig& mc = clean.config();
  trigger.validate(mc);

  const auto labels = predict_all(clean, batch);
  std::vector<Tensor> triggered(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) triggered[i] = apply_trigger(batch[i], trigger, mc);

  const auto names = target_tensor_names(clean);
  const ParamFilter is_target = [&names](const std::string& n) {
    return std::find(names.begin(), names.end(), n) != names.end();
  };
  TargetWeightSet w = init_target_weights(clean);
  const std::size_t total = w.size();

  InsertionResult result;
  result.initial_size = total;
  ModelParams params = clean;

  auto flatten = [&](const std::map<std::string, Tensor>& grads, std::vector<double>& out,
                     const std::vector<std::size_t>& live) {
    out.resize(live.size());
    for (std::size_t k = 0; k < live.size(); ++k) {
      const auto& id = w.ids[live[k]];
      out[k] = grads.at(id.param)[id.element];
    }
  };

  std::vector<std::size_t> live(total);
  for (std::size_t k = 0; k < total; ++k) live[k] = k;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<double> start(live.size());
    for (std::size_t k = 0; k < live.size(); ++k) {
      const auto& id = w.ids[live[k]];
      start[k] = params.at(id.param)[id.element];
    }
    for (std::size_t b0 = 0; b0 < batch.size() && !live.empty(); b0 += config.batch) {
      const std::size_t b1 = std::min(batch.size(), b0 + config.batch);
      std::vector<ParamGradients> clean_g(b1 - b0), troj_g(b1 - b0);
      parallel_for(b1 - b0, [&](std::size_t i) {
        clean_g[i] = cross_entropy_gradients(params, batch[b0 + i], labels[b0 + i], is_target);
        troj_g[i] = cross_entropy_gradients(params, triggered[b0 + i], trigger.target_class, is_target);
      });
      std::map<std::string, Tensor> gc = std::move(clean_g[0].grads), gt = std::move(troj_g[0].grads);
      for (std::size_t i = 1; i < clean_g.size(); ++i)
        for (const auto& n : names) {
          gc.at(n) += clean_g[i].grads.at(n);
          gt.at(n) += troj_g[i].grads.at(n);
        }
      const double inv = 1.0 / static_cast<double>(b1 - b0);
      std::vector<double> fc, ft;
      flatten(gc, fc, live);
      flatten(gt, ft, live);
      for (auto& v : fc) v *= inv;
      for (auto& v : ft) v *= inv;
      const auto g = gradient_surgery(fc, ft, config.surgery);
      for (std::size_t k = 0; k < live.size(); ++k) {
        const auto& id = w.ids[live[k]];
        params.at(id.param)[id.element] -= config.lr * g[k];
      }
    }
    std::vector<std::size_t> kept;
    kept.reserve(live.size());
    for (std::size_t k = 0; k < live.size(); ++k) {
      const auto& id = w.ids[live[k]];
      double& v = params.at(id.param)[id.element];
      if (std::abs(v - start[k]) < config.threshold) {
        v = w.baseline[live[k]];
      } else {
        kept.push_back(live[k]);
      }
    }
    live = std::move(kept);
    result.id_set_sizes.push_back(live.size());
  }

  TargetWeightSet final_set;
  for (auto k : live) {
    const auto& id = w.ids[k];
    final_set.ids.push_back(id);
    final_set.values.push_back(params.at(id.param)[id.element]);
    final_set.baseline.push_back(w.baseline[k]);
  }
  result.n_p = final_set.size();
  result.weights = std::move(final_set);
  result.backdoored = std::move(params);
  return result;
}

}  // namespace vtlab
