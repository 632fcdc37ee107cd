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

#include <functional>

#include "vtlab/tensor.hpp"

namespace vtlab {

using ScalarFn = std::function<double(const Tensor&)>;

// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h for every coordinate.
Tensor finite_difference_gradient(const ScalarFn& f, const Tensor& x, double h = 1e-5);

// ||a - b|| / max(||a||, ||b||), or 0 when both are exactly zero.
double relative_error(const Tensor& a, const Tensor& b);

}  // namespace vtlab
