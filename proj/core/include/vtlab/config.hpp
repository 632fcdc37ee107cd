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
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "vtlab/defense.hpp"
#include "vtlab/trigger.hpp"
#include "vtlab/trojan.hpp"
#include "vtlab/vit.hpp"

namespace vtlab {

/// Everything one pipeline run needs. Loaded from a flat "key = value" file;
/// '#' starts a comment, blank lines are ignored, list values are
/// comma-separated. See kConfigKeys for the full key set.
struct PipelineConfig {
  std::string dataset = "synthetic";  // synthetic | cifar10
  std::string cifar_train;            // paths to CIFAR-10 binary batches
  std::string cifar_test;
  std::size_t train_per_class = 250;
  std::size_t test_per_class = 100;
  std::uint64_t seed = 1;
  std::size_t threads = 0;  // 0 = hardware concurrency

  ViTConfig model;
  TrainConfig train;
  std::string clean_checkpoint;  // load instead of training when set

  std::size_t attack_batch = 64;
  TriggerConfig trigger;
  InsertionConfig insertion;

  std::vector<double> threshold_sweep{0.0, 5e-4, 1e-3, 2e-3, 3e-3};
  std::vector<double> lambda_sweep{0.0, 1.0};
  bool area_ablation = true;

  bool defense_enabled = true;
  DefenseConfig defense;

  // key/value pairs in canonical order, for echoing into reports.
  std::vector<std::pair<std::string, std::string>> entries() const;
  void validate() const;
};

struct ConfigKey {
  const char* key;
  const char* help;
};
extern const std::vector<ConfigKey> kConfigKeys;

// Throws ConfigError naming the line for unknown keys, duplicates or bad values.
PipelineConfig parse_config(std::string_view text);
PipelineConfig load_config(const std::filesystem::path& path);
// Applies one key = value assignment on top of an existing config.
void set_config_value(PipelineConfig& config, std::string_view key, std::string_view value);
std::string to_config_text(const PipelineConfig& config);

}  // namespace vtlab
