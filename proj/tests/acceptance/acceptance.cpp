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
// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <random>
#include <set>
#include <string>
#include <thread>

#include "grad_suite.hpp"
#include "vtlab/checkpoint.hpp"
#include "vtlab/metrics.hpp"
#include "vtlab/pipeline.hpp"
#include "vtlab/quant.hpp"

namespace {

using namespace vtlab;
using Clock = std::chrono::steady_clock;

int failures = 0;

void verdict(int id, bool ok, const std::string& detail) {
  std::printf("%s criterion %d: %s\n", ok ? "PASS" : "FAIL", id, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

void gradient_suite() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string worst_case;
  const auto cases = testing::gradient_cases();
  for (const auto& c : cases)
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      const double e = c.run(seed);
      if (e > worst) {
        worst = e;
        worst_case = c.name;
      }
    }
  const double dt = seconds_since(t0);
  verdict(1, worst <= 1e-4 && dt <= 120.0,
          fmt("%zu cases x 20 seeds, max rel err %.2e (%s), %.1fs", cases.size(), worst, worst_case.c_str(), dt));
}

void tar_table() {
  const double expected[] = {0.51, 1.53, 2.55, 3.57, 4.59};
  double worst = 0.0;
  for (std::size_t k = 0; k < 5; ++k) worst = std::max(worst, std::abs(compute_tar(2 * k + 1, 16, 224) - expected[k]));
  verdict(2, worst <= 0.01, fmt("N in {1,3,5,7,9}, max deviation %.4f", worst));
}

// Random clean/trojan pairs on the desk model's tensor layout with shared scales.
void flip_oracle() {
  const auto t0 = Clock::now();
  const auto base = quantize_model(init_params(ViTConfig{}, 99));
  std::size_t mismatches = 0, pairs = 0;
  for (std::uint64_t s = 0; s < 1000; ++s, ++pairs) {
    std::mt19937_64 rng(s);
    std::uniform_real_distribution<double> u(0, 1);
    std::uniform_int_distribution<int> code(-128, 127);
    const double p = 0.001 + 0.05 * u(rng);
    QuantizedModel trojan = base;
    for (auto& [name, q] : trojan.tensors)
      for (auto& c : q.codes)
        if (u(rng) < p) c = static_cast<std::int8_t>(code(rng));
    const auto d = diff_bits(base, trojan);
    std::size_t tbn = 0;
    for (const auto& [name, q] : base.tensors)
      for (std::size_t i = 0; i < q.size(); ++i)
        tbn += static_cast<std::size_t>(
            std::popcount(static_cast<std::uint8_t>(q.codes[i] ^ trojan.tensors.at(name).codes[i])));
    const bool ok = apply_flips(base, d.record) == trojan && d.tbn == tbn &&
                    toggle_flips(toggle_flips(base, d.record), d.record) == base &&
                    toggle_flips(trojan, d.record) == base;
    mismatches += !ok;
  }
  const double dt = seconds_since(t0);
  verdict(5, mismatches == 0 && dt <= 60.0, fmt("%zu pairs, %zu mismatches, %.1fs", pairs, mismatches, dt));
}

double stage_time(const ExperimentReport& r, const std::set<std::string>& names) {
  double t = 0;
  for (const auto& [k, v] : r.timings)
    if (names.count(k)) t += v;
  return t;
}

void end_to_end(const ExperimentReport& r) {
  const auto& a = *r.attack;
  const double drop = a.clean.cda - a.backdoored.cda;
  const double dt = stage_time(r, {"data", "train-clean", "quantize", "gen-trigger", "insert-trojan", "diff-bits",
                                   "flip-apply", "evaluate"});
  const bool ok = r.clean_accuracy >= 90.0 && a.backdoored.tar == 6.25 && a.backdoored.asr >= 95.0 && drop <= 2.0 &&
                  a.insertion.n_p < a.insertion.initial_size && dt <= 600.0;
  verdict(3, ok,
          fmt("clean acc %.2f, TAR %.2f, ASR %.2f, CDA %.2f -> %.2f (drop %.2f), n_p %zu of %zu, %.0fs", r.clean_accuracy,
              a.backdoored.tar, a.backdoored.asr, a.clean.cda, a.backdoored.cda, drop, a.insertion.n_p,
              a.insertion.initial_size, dt));
}

void ablations(const ExperimentReport& r) {
  const SweepRow* lam0 = nullptr;
  const SweepRow* lam1 = nullptr;
  for (const auto& row : r.lambda_sweep) {
    if (row.value == 0.0) lam0 = &row;
    if (row.value == 1.0) lam1 = &row;
  }
  const bool a_ok = lam0 && lam1 && lam1->metrics.asr >= lam0->metrics.asr;
  const auto& patch = r.area_ablation.at(0).metrics;
  const auto& area = r.area_ablation.at(1).metrics;
  const bool b_ok = patch.tar == area.tar && patch.asr >= area.asr - 0.5;
  bool c_ok = r.threshold_sweep.size() == 5;
  double first = 0, min_asr = 100;
  std::string tpn, tbn;
  for (std::size_t i = 0; i < r.threshold_sweep.size(); ++i) {
    const auto& m = r.threshold_sweep[i].metrics;
    if (i == 0) first = m.asr;
    min_asr = std::min(min_asr, m.asr);
    if (i > 0) {
      const auto& prev = r.threshold_sweep[i - 1].metrics;
      c_ok = c_ok && m.tpn <= prev.tpn && m.tbn <= prev.tbn;
    }
    tpn += (i ? "," : "") + std::to_string(m.tpn);
    tbn += (i ? "," : "") + std::to_string(m.tbn);
  }
  c_ok = c_ok && first - min_asr <= 5.0;
  verdict(4, a_ok && b_ok && c_ok,
          fmt("(a) %s ASR lambda0 %.2f lambda1 %.2f; (b) %s patch %.2f area %.2f at TAR %.2f; "
              "(c) %s TPN [%s] TBN [%s] ASR drop %.2f",
              a_ok ? "ok" : "violated", lam0 ? lam0->metrics.asr : -1.0, lam1 ? lam1->metrics.asr : -1.0,
              b_ok ? "ok" : "violated", patch.asr, area.asr, patch.tar, c_ok ? "ok" : "violated", tpn.c_str(),
              tbn.c_str(), first - min_asr));
}

void untouched(const ExperimentReport& r, const std::filesystem::path& dir) {
  const auto clean_q = load_quantized_checkpoint(dir / "clean_q.tvck");
  const auto trojan_q = load_quantized_checkpoint(dir / "trojan_q.tvck");
  const auto clean = dequantize_model(clean_q);
  const auto& ins = r.attack->insertion;
  std::set<std::pair<std::string, std::size_t>> kept;
  for (const auto& id : ins.weights.ids) kept.emplace(id.param, id.element);
  std::size_t real_bad = 0, code_bad = 0, checked = 0, pruned_bad = 0;
  const auto initial = init_target_weights(clean);
  for (const auto& [name, t] : clean.tensors()) {
    const Tensor& b = ins.backdoored.at(name);
    const auto& cq = clean_q.tensors.at(name).codes;
    const auto& tq = trojan_q.tensors.at(name).codes;
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (kept.count({name, i})) continue;
      ++checked;
      real_bad += std::bit_cast<std::uint64_t>(b[i]) != std::bit_cast<std::uint64_t>(t[i]);
      code_bad += cq[i] != tq[i];
    }
  }
  for (std::size_t k = 0; k < initial.size(); ++k) {
    const auto& id = initial.ids[k];
    if (kept.count({id.param, id.element})) continue;
    pruned_bad += std::bit_cast<std::uint64_t>(ins.backdoored.at(id.param)[id.element]) !=
                  std::bit_cast<std::uint64_t>(initial.baseline[k]);
  }
  verdict(6, real_bad == 0 && code_bad == 0 && pruned_bad == 0 && checked > 0,
          fmt("%zu elements outside id_set: %zu real and %zu code differences; %zu pruned, %zu not restored", checked,
              real_bad, code_bad, initial.size() - ins.n_p, pruned_bad));
}

void defense(const ExperimentReport& r) {
  const auto& d = *r.defense;
  const double dt = stage_time(r, {"defend"});
  const bool ok = d.with_defense.asr < d.no_defense.asr && d.with_defense.tpn > d.no_defense.tpn &&
                  d.clean_cda_factored == d.clean_cda && dt <= 900.0;
  verdict(7, ok,
          fmt("ASR %.2f -> %.2f, TPN %zu -> %zu, clean CDA %.2f vs factored %.2f, CDA after attack %.2f -> %.2f, "
              "%.0fs",
              d.no_defense.asr, d.with_defense.asr, d.no_defense.tpn, d.with_defense.tpn, d.clean_cda,
              d.clean_cda_factored, d.no_defense.cda, d.with_defense.cda, dt));
}

}  // namespace

int main() {
  gradient_suite();
  tar_table();

  const auto dir = std::filesystem::temp_directory_path() / "vtlab_acceptance";
  std::filesystem::remove_all(dir);
  PipelineConfig cfg;
  cfg.threads = 1;
  ExperimentReport first;
  try {
    first = run_pipeline(cfg, {dir, ""});
  } catch (const std::exception& e) {
    std::printf("pipeline failed: %s\n", e.what());
    for (int id : {3, 4, 6, 7, 8}) verdict(id, false, "pipeline did not complete");
    flip_oracle();
    return 1;
  }
  end_to_end(first);
  ablations(first);
  flip_oracle();
  untouched(first, dir);
  defense(first);

  const auto again = run_pipeline(cfg);
  PipelineConfig threaded = cfg;
  threaded.threads = std::max(4u, std::thread::hardware_concurrency());
  const auto parallel = run_pipeline(threaded);
  const auto ref = to_json(first, false);
  const bool same_run = to_json(again, false) == ref;
  const bool same_threads = to_json(parallel, false) == ref;
  verdict(8, same_run && same_threads,
          fmt("repeat run %s, 1 vs %zu threads %s (%zu report bytes)", same_run ? "identical" : "differs",
              threaded.threads, same_threads ? "identical" : "differs", ref.size()));

  std::filesystem::remove_all(dir);
  std::printf("%d of 8 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
