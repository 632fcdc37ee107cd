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
#include <benchmark/benchmark.h>

#include "vtlab/dataset.hpp"
#include "vtlab/defense.hpp"
#include "vtlab/quant.hpp"
#include "vtlab/trigger.hpp"
#include "vtlab/vit.hpp"

namespace {

using namespace vtlab;

void BM_Forward(benchmark::State& state) {
  const auto params = init_params(ViTConfig{}, 1);
  const auto img = gen_synthetic(4, 1, 2).images[0];
  for (auto _ : state) benchmark::DoNotOptimize(forward(params, img, state.range(0) != 0));
}
BENCHMARK(BM_Forward)->Arg(0)->Arg(1);

void BM_ForwardBackward(benchmark::State& state) {
  const auto params = init_params(ViTConfig{}, 1);
  const auto img = gen_synthetic(4, 1, 2).images[0];
  for (auto _ : state) benchmark::DoNotOptimize(cross_entropy_gradients(params, img, 1));
}
BENCHMARK(BM_ForwardBackward);

void BM_PixelSalience(benchmark::State& state) {
  const auto params = init_params(ViTConfig{}, 1);
  const auto img = gen_synthetic(4, 1, 2).images[0];
  for (auto _ : state) benchmark::DoNotOptimize(pixel_salience(params, img, 0));
}
BENCHMARK(BM_PixelSalience);

void BM_QuantizeModel(benchmark::State& state) {
  const auto params = init_params(ViTConfig{}, 1);
  for (auto _ : state) benchmark::DoNotOptimize(quantize_model(params));
}
BENCHMARK(BM_QuantizeModel);

void BM_DiffAndApply(benchmark::State& state) {
  const auto clean = quantize_model(init_params(ViTConfig{}, 1));
  auto trojan = clean;
  auto& codes = trojan.tensors.begin()->second.codes;
  for (std::size_t i = 0; i < codes.size(); i += 7) codes[i] = static_cast<std::int8_t>(~codes[i]);
  for (auto _ : state) {
    auto d = diff_bits(clean, trojan);
    benchmark::DoNotOptimize(apply_flips(clean, d.record));
  }
}
BENCHMARK(BM_DiffAndApply);

void BM_DecomposeHead(benchmark::State& state) {
  const auto params = init_params(ViTConfig{}, 1);
  const Tensor& head = params.at(std::string(param_names::kHeadWeight));
  for (auto _ : state) benchmark::DoNotOptimize(decompose_head(head, 2));
}
BENCHMARK(BM_DecomposeHead);

}  // namespace

BENCHMARK_MAIN();
