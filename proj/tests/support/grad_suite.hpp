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

// Finite-difference checks for every tape primitive and the attack losses,
// shared by the unit tests and the acceptance runner.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "vtlab/autodiff.hpp"
#include "vtlab/tensor.hpp"
#include "vtlab/vit.hpp"

namespace vtlab::testing {

using Builder = std::function<ad::Var(ad::Tape&, std::span<const ad::Var>)>;

// Largest relative error between tape and central-difference gradients over
// every input. Non-scalar outputs are reduced with a fixed random projection.
double check_gradient(const std::vector<Tensor>& inputs, const Builder& build, std::uint64_t seed,
                      double h = 1e-5);

struct GradCase {
  std::string name;
  std::function<double(std::uint64_t seed)> run;  // returns the max relative error
};

// One case per primitive plus the ViT-level losses.
std::vector<GradCase> gradient_cases();

// Two-layer config small enough for exhaustive finite differences.
ViTConfig tiny_config();

Tensor random_tensor(const Shape& shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0);

}  // namespace vtlab::testing
