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
#include "vtlab/metrics.hpp"

#include <cmath>

#include "vtlab/errors.hpp"
#include "vtlab/parallel.hpp"

namespace vtlab {

double round2(double percent) { return std::round(percent * 100.0) / 100.0; }

namespace {

std::vector<std::size_t> triggered_predictions(const ModelParams& params, const Dataset& data,
                                               const TriggerSpec& trigger) {
  std::vector<std::size_t> out(data.size());
  parallel_for(data.size(), [&](std::size_t i) {
    out[i] = predict(params, apply_trigger(data.images[i], trigger, params.config()));
  });
  return out;
}

struct AsrCounts {
  std::size_t hits = 0, eligible = 0, hits_all = 0;
};

AsrCounts count_asr(const std::vector<std::size_t>& preds, const Dataset& data, std::size_t target) {
  AsrCounts c;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const bool hit = preds[i] == target;
    c.hits_all += hit;
    if (data.labels[i] == target) continue;
    ++c.eligible;
    c.hits += hit;
  }
  return c;
}

double pct(std::size_t num, std::size_t den) { return 100.0 * static_cast<double>(num) / static_cast<double>(den); }

}  // namespace

double compute_cda(const ModelParams& params, const Dataset& data) {
  if (data.empty()) throw InputError("CDA needs a nonempty labeled dataset");
  data.validate(params.config().n_classes);
  const auto preds = predict_all(params, data.images);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) correct += preds[i] == data.labels[i];
  return pct(correct, data.size());
}

double compute_asr(const ModelParams& params, const Dataset& data, const TriggerSpec& trigger,
                   std::size_t target_class) {
  if (data.empty()) throw InputError("ASR needs a nonempty dataset");
  const auto c = count_asr(triggered_predictions(params, data, trigger), data, target_class);
  if (c.eligible == 0) throw InputError("ASR has no images outside the target class");
  return pct(c.hits, c.eligible);
}

double compute_asr_inclusive(const ModelParams& params, const Dataset& data, const TriggerSpec& trigger,
                             std::size_t target_class) {
  if (data.empty()) throw InputError("ASR needs a nonempty dataset");
  const auto c = count_asr(triggered_predictions(params, data, trigger), data, target_class);
  return pct(c.hits_all, data.size());
}

double compute_tar(std::size_t n_patches, std::size_t patch_size, std::size_t image_side) {
  if (image_side == 0) throw ParameterError("image side must be positive");
  const double p = static_cast<double>(patch_size), s = static_cast<double>(image_side);
  return 100.0 * static_cast<double>(n_patches) * p * p / (s * s);
}

MetricsReport evaluate_metrics(const ModelParams& params, const Dataset& data, const TriggerSpec& trigger,
                               std::size_t tpn, std::size_t tbn) {
  MetricsReport r;
  r.cda = compute_cda(params, data);
  const auto c = count_asr(triggered_predictions(params, data, trigger), data, trigger.target_class);
  if (c.eligible == 0) throw InputError("ASR has no images outside the target class");
  r.asr = pct(c.hits, c.eligible);
  r.asr_inclusive = pct(c.hits_all, data.size());
  const ViTConfig& mc = params.config();
  if (trigger.pixel_mask.empty()) {
    r.tar = compute_tar(trigger.budget, mc.patch_size, mc.image_side);
  } else {
    double area = 0.0;
    for (double v : trigger.pixel_mask.data()) area += v;
    r.tar = 100.0 * area / static_cast<double>(trigger.pixel_mask.size());
  }
  r.tpn = tpn;
  r.tbn = tbn;
  r.n_eval = data.size();
  r.target_class = trigger.target_class;
  return r;
}

}  // namespace vtlab
