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
#include <functional>

namespace vtlab {

// Worker count used by parallel_for. Defaults to 1.
void set_num_threads(unsigned n);
unsigned num_threads();

// Runs fn(i) for i in [0, n). Each index is owned by exactly one worker, so
// callers that write results into slot i and reduce afterwards in index order
// get the same answer for any thread count. The first exception is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace vtlab
