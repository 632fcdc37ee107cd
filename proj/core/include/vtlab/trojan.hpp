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
#include <string>
#include <vector>

#include "vtlab/trigger.hpp"
#include "vtlab/vit.hpp"

namespace vtlab {

struct WeightRef {
  std::string param;
  std::size_t element = 0;
  bool operator==(const WeightRef&) const = default;
};

/// The attacker-modifiable weights W_T: ordered identifiers, their current
/// values and the clean values they were copied from.
struct TargetWeightSet {
  std::vector<WeightRef> ids;
  std::vector<double> values;
  std::vector<double> baseline;

  std::size_t size() const { return ids.size(); }
};

// Tensors the attacker starts from: the last block's attention output
// projection followed by the classification head (or its factors) and bias.
std::vector<std::string> target_tensor_names(const ModelParams& params);

TargetWeightSet init_target_weights(const ModelParams& params);

struct InsertionConfig {
  double threshold = 5e-4;  // e
  std::size_t epochs = 20;
  double lr = 4.0;
  std::size_t batch = 16;
  SurgeryMode surgery = SurgeryMode::project;

  void validate() const;
};

struct InsertionResult {
  TargetWeightSet weights;            // surviving id set with final values
  std::size_t n_p = 0;                // weights.size()
  std::size_t initial_size = 0;       // |W_T| before pruning
  ModelParams backdoored;             // clean params with W_T written in
  std::vector<std::size_t> id_set_sizes;  // |id_set| after each epoch
};

// Tuned parameter distillation. Clean-loss labels are the clean model's own
// predictions on the batch. Each epoch walks the batch in fixed-order
// minibatches, merges the clean gradient (primary) with the trigger gradient by
// gradient surgery and takes a descent step; at the end of the epoch every
// element that moved less than the threshold is dropped for good and reset to
// its clean value.
InsertionResult trojan_insertion(const ModelParams& clean, const TriggerSpec& trigger,
                                 const std::vector<Tensor>& batch, const InsertionConfig& config);

}  // namespace vtlab
