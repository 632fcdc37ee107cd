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
#include "vtlab/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "vtlab/errors.hpp"

namespace vtlab {

Tensor finite_difference_gradient(const ScalarFn& f, const Tensor& x, double h) {
  if (!(h > 0.0)) throw ParameterError("finite-difference step must be positive");
  Tensor g(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double fp = f(probe);
    probe[i] = orig - h;
    const double fm = f(probe);
    probe[i] = orig;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

double relative_error(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw DimensionError("relative_error shape mismatch");
  double diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) diff += (a[i] - b[i]) * (a[i] - b[i]);
  const double denom = std::max(norm2(a.data()), norm2(b.data()));
  if (denom == 0.0) return 0.0;
  return std::sqrt(diff) / denom;
}

}  // namespace vtlab
