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
#include <span>
#include <vector>

#include "vtlab/dataset.hpp"
#include "vtlab/metrics.hpp"
#include "vtlab/trigger.hpp"
#include "vtlab/trojan.hpp"
#include "vtlab/vit.hpp"

namespace vtlab {

/// Classification head stored as a chain of factor matrices F0 . F1 ... Fk-1.
struct DecomposedHead {
  std::vector<Tensor> factors;
  double reconstruction_error = 0.0;  // max |product - original|

  Tensor product() const;
};

// Repeated orthogonal-triangular factorization: the running matrix M (r x c)
// is split into Q[:, :inner] and R[:inner, :], Q becomes the next factor and R
// carries on. The final R is the last factor. Exact whenever
// min(r, c) <= inner <= r at every step. inner_dims must hold k - 1 entries;
// an empty span picks inner = r at every step.
DecomposedHead decompose_head(const Tensor& head, std::size_t k_factors,
                              std::span<const std::size_t> inner_dims = {});

// Copy of params whose head.weight is replaced by head.f0 ... head.f<k-1>.
ModelParams with_decomposed_head(const ModelParams& params, const DecomposedHead& head);
Tensor forward_with_decomposed(const ModelParams& params, const DecomposedHead& head, const Tensor& image);

struct DefenseConfig {
  std::size_t k_factors = 2;
  std::vector<std::size_t> inner_dims;  // empty = exact default
};

struct DefenseReport {
  MetricsReport no_defense;
  MetricsReport with_defense;
  std::size_t n_p_no_defense = 0;
  std::size_t n_p_with_defense = 0;
  std::size_t wt_no_defense = 0;    // initial |W_T|
  std::size_t wt_with_defense = 0;
  double clean_cda = 0.0;           // real-valued model, plain head
  double clean_cda_factored = 0.0;  // real-valued model, factored head
  double reconstruction_error = 0.0;
};

// Runs the same insertion (shared trigger, batch and budgets) against the
// plain 8-bit model and against the 8-bit model whose head is stored factored.
DefenseReport evaluate_defense(const ModelParams& clean, const TriggerSpec& trigger,
                               const std::vector<Tensor>& attack_batch, const Dataset& eval,
                               const InsertionConfig& insertion, const DefenseConfig& defense);

}  // namespace vtlab
