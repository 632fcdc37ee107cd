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

#include <cstdint>
#include <exception>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "vtlab/config.hpp"
#include "vtlab/dataset.hpp"
#include "vtlab/defense.hpp"
#include "vtlab/errors.hpp"
#include "vtlab/metrics.hpp"
#include "vtlab/quant.hpp"
#include "vtlab/trigger.hpp"
#include "vtlab/trojan.hpp"

namespace vtlab {

// Pipeline stages in execution order.
inline constexpr std::string_view kStages[] = {"data",          "train-clean", "quantize", "gen-trigger",
                                               "insert-trojan", "diff-bits",   "flip-apply", "evaluate",
                                               "sweep",         "defend"};
bool is_stage(std::string_view name);

// Process exit code for a failure class.
enum class ExitCode : int {
  ok = 0,
  internal = 1,
  config = 2,
  input = 3,
  format = 4,
  incompatible = 5,
  verification = 6,
  parameter = 7,
};
ExitCode classify(const std::exception& e);

/// Any pipeline failure, tagged with the stage it happened in.
class StageError : public Error {
 public:
  StageError(std::string stage, ExitCode code, const std::string& message)
      : Error("[" + stage + "] " + message), stage_(std::move(stage)), code_(code) {}
  const std::string& stage() const { return stage_; }
  ExitCode code() const { return code_; }

 private:
  std::string stage_;
  ExitCode code_;
};

struct PipelineData {
  Dataset train;
  Dataset test;
  std::vector<std::size_t> attack_indices;  // into test
  std::vector<Tensor> attack_batch;
  Dataset eval;  // test minus the attack batch
};

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);
PipelineData prepare_data(const PipelineConfig& config);
// Loads config.clean_checkpoint when set, otherwise trains from a seeded init.
ModelParams obtain_clean_model(const PipelineConfig& config, const Dataset& train);

/// Insertion against one 8-bit checkpoint, followed by bit accounting and
/// flip-record verification.
struct AttackOutcome {
  InsertionResult insertion;
  QuantizedModel trojan;
  BitDiff diff;
  std::size_t real_changed = 0;  // real-valued elements that differ from clean
  MetricsReport clean;           // deployed clean model
  MetricsReport backdoored;      // deployed trojaned model, with TPN / TBN
};

// Throws VerificationError if clean + flip record does not rebuild the trojan bitwise.
AttackOutcome run_attack(const QuantizedModel& clean, const TriggerSpec& trigger,
                         const std::vector<Tensor>& attack_batch, const Dataset& eval,
                         const InsertionConfig& insertion);

struct SweepRow {
  std::string variable;  // "threshold", "lambda" or "trigger"
  std::string label;
  double value = 0.0;
  MetricsReport metrics;
  std::size_t n_p = 0;
  std::size_t initial_size = 0;
  double attention_after = 0.0;
};

struct ExperimentReport {
  std::vector<std::pair<std::string, std::string>> config;
  std::uint64_t seed = 0;
  std::vector<std::string> stages;  // completed stages
  double clean_accuracy = 0.0;      // real-valued clean model on the eval split
  std::vector<std::size_t> trigger_patches;
  double attention_before = 0.0;
  double attention_after = 0.0;
  double trigger_loss_first = 0.0;
  double trigger_loss_last = 0.0;
  std::optional<AttackOutcome> attack;
  bool flips_verified = false;
  std::vector<SweepRow> threshold_sweep;
  std::vector<SweepRow> lambda_sweep;
  std::vector<SweepRow> area_ablation;  // patch-wise row then area-wise row
  std::optional<DefenseReport> defense;
  std::vector<std::pair<std::string, double>> timings;  // seconds per stage
};

// JSON text with fixed key names. Timings are dropped when include_timings is false.
std::string to_json(const ExperimentReport& report, bool include_timings = true);
std::string to_json(const MetricsReport& metrics);
std::string to_json(const DefenseReport& report);

struct PipelineOptions {
  std::filesystem::path out_dir;  // artifacts and report.json; empty = none
  std::string stop_after;         // stage name; empty = run everything
};

// Stage failures surface as StageError.
ExperimentReport run_pipeline(const PipelineConfig& config, const PipelineOptions& options = {});

}  // namespace vtlab
