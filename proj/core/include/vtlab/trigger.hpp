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
#include <span>
#include <vector>

#include "vtlab/autodiff.hpp"
#include "vtlab/tensor.hpp"
#include "vtlab/vit.hpp"

namespace vtlab {

/// How two conflicting gradients are merged.
///   project:      conflicting part of the secondary along the primary is removed
///   primary_only: the primary alone is kept when the two conflict
enum class SurgeryMode { project, primary_only };

std::string to_string(SurgeryMode mode);
SurgeryMode parse_surgery_mode(std::string_view s);  // "eq6" | "ce_only"

// If cos(primary, secondary) > 0 or either is zero: primary + secondary.
// Otherwise: primary + secondary - (primary.secondary / |primary|^2) primary
// (or just primary under SurgeryMode::primary_only).
std::vector<double> gradient_surgery(std::span<const double> primary, std::span<const double> secondary,
                                     SurgeryMode mode = SurgeryMode::project);
Tensor gradient_surgery(const Tensor& primary, const Tensor& secondary, SurgeryMode mode = SurgeryMode::project);

/// Patch-wise trigger M (.) P and the settings it was optimized under.
struct TriggerSpec {
  std::size_t n_patches = 0;
  std::vector<std::uint8_t> mask;    // M, one entry per patch
  std::vector<std::size_t> patches;  // T, ascending indices where M = 1
  std::size_t budget = 0;            // N
  Tensor perturbation;               // P, image-shaped, zero outside the footprint
  std::size_t target_class = 0;      // y_k
  double lambda = 1.0;
  std::vector<std::size_t> layer_set;  // zero-based layers summed in the attention term
  // Optional pixel-level restriction inside T's footprint (area-wise baseline).
  // Empty means the full footprint of T.
  Tensor pixel_mask;

  // Image-shaped 0/1 tensor of the pixels P may touch.
  Tensor footprint(const ViTConfig& config) const;
  // Throws ParameterError if any structural invariant is violated.
  void validate(const ViTConfig& config) const;
};

Tensor patch_footprint(const ViTConfig& config, std::span<const std::size_t> patches);

// clamp(X + P (.) footprint, 0, 1)
Tensor apply_trigger(const Tensor& image, const TriggerSpec& trigger, const ViTConfig& config);
ad::Var apply_trigger(ad::Var image, ad::Var perturbation, const Tensor& footprint);

// |dL_CE(X, y_k) / dX| per pixel, image-shaped.
Tensor pixel_salience(const ModelParams& params, const Tensor& image, std::size_t target_class);
// Per-patch sums of pixel scores, length n.
std::vector<double> patch_scores(const Tensor& pixel_scores, const ViTConfig& config);
// Top-N mask; ties go to the lower patch index.
std::vector<std::uint8_t> patch_salience_rank(std::span<const double> scores, std::size_t budget);

// -log sum_{h,i} attn[l,h][i, t+1] over t in T and every query i.
double attention_loss(const AttentionRecord& record, std::span<const std::size_t> patches, std::size_t layer);
ad::Var attention_loss(std::span<const ad::Var> layer_heads, std::span<const std::size_t> patches);

// L_CE(X, y_k) + lambda * sum_{l in layer_set} L_ATTN^l(X, T)
double attention_target_loss(const ModelParams& params, const Tensor& image, std::size_t target_class,
                             std::span<const std::size_t> patches, double lambda,
                             std::span<const std::size_t> layer_set);

struct TriggerConfig {
  std::size_t target_class = 0;
  std::size_t budget = 1;
  double lambda = 1.0;
  std::vector<std::size_t> layer_set;  // empty = every layer
  std::size_t steps = 300;
  double lr = 0.05;
  SurgeryMode surgery = SurgeryMode::project;
};

struct TriggerResult {
  TriggerSpec spec;
  std::vector<double> loss_history;  // batch-mean L_ATL before each step, then after the last
  double attention_before = 0.0;     // mean share of attention mass on T with P = 0
  double attention_after = 0.0;
};

TriggerResult generate_trigger(const ModelParams& params, const std::vector<Tensor>& batch,
                               const TriggerConfig& config);

// Area-wise baseline: a contiguous side x side pixel block at (top, left),
// optimized with the same objective; T is every patch the block touches.
TriggerResult generate_area_trigger(const ModelParams& params, const std::vector<Tensor>& batch,
                                    const TriggerConfig& config, std::size_t top, std::size_t left,
                                    std::size_t side);

// Mean over images, layers and heads of sum_i attn[i, T'] / (n + 1).
double trigger_attention_share(const ModelParams& params, const std::vector<Tensor>& images,
                               const TriggerSpec& trigger);

// "TVTG" trigger file: magic, version byte, u32 n, u32 N, N x u32 T (ascending),
// u32 y_k, f64 lambda, then P over T's footprint in patch-row order as f64.
std::vector<std::uint8_t> encode_trigger(const TriggerSpec& trigger, const ViTConfig& config);
TriggerSpec decode_trigger(const std::vector<std::uint8_t>& bytes, const ViTConfig& config);
void save_trigger(const std::filesystem::path& path, const TriggerSpec& trigger, const ViTConfig& config);
TriggerSpec load_trigger(const std::filesystem::path& path, const ViTConfig& config);

}  // namespace vtlab
