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

#include <cstddef>

#include "vtlab/dataset.hpp"
#include "vtlab/trigger.hpp"
#include "vtlab/vit.hpp"

namespace vtlab {

struct MetricsReport {
  double cda = 0.0;            // % clean images classified correctly
  double asr = 0.0;            // % triggered non-target images classified as y_k
  double asr_inclusive = 0.0;  // same, with target-class images kept in the denominator
  double tar = 0.0;            // % image area covered by the trigger
  std::size_t tpn = 0;
  std::size_t tbn = 0;
  std::size_t n_eval = 0;
  std::size_t target_class = 0;
};

// Rounds a percentage to two decimals for reporting.
double round2(double percent);

double compute_cda(const ModelParams& params, const Dataset& data);
// Images whose true label is target_class are excluded; InputError if none remain.
double compute_asr(const ModelParams& params, const Dataset& data, const TriggerSpec& trigger,
                   std::size_t target_class);
double compute_asr_inclusive(const ModelParams& params, const Dataset& data, const TriggerSpec& trigger,
                             std::size_t target_class);
// 100 * N * patch^2 / side^2
double compute_tar(std::size_t n_patches, std::size_t patch_size, std::size_t image_side);

// CDA, both ASR figures and TAR in one pass over the data. Not rounded.
MetricsReport evaluate_metrics(const ModelParams& params, const Dataset& data, const TriggerSpec& trigger,
                               std::size_t tpn = 0, std::size_t tbn = 0);

}  // namespace vtlab
