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
#include <vector>

#include "vtlab/quant.hpp"
#include "vtlab/vit.hpp"

namespace vtlab {

enum class CheckpointKind { real, quantized };

// "TVCK" container, little-endian:
//   magic, version byte, kind byte,
//   config block: 8 x u32 (image_side, channels, patch_size, embed_dim, n_heads, n_layers, mlp_dim, n_classes),
//   u32 tensor count, then per tensor (identifier order):
//     u32-length identifier, u8 rank, rank x u32 dims, u8 dtype (0 = real64, 1 = int8),
//     f64 scale (int8 only), u64 payload byte count, payload.
std::vector<std::uint8_t> encode_checkpoint(const ModelParams& params);
std::vector<std::uint8_t> encode_checkpoint(const QuantizedModel& model);

CheckpointKind checkpoint_kind(const std::vector<std::uint8_t>& bytes);
// A quantized checkpoint decodes to its dequantized values.
ModelParams decode_checkpoint(const std::vector<std::uint8_t>& bytes);
// Refuses real-valued checkpoints with CheckpointIncompatibleError.
QuantizedModel decode_quantized_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params);
void save_checkpoint(const std::filesystem::path& path, const QuantizedModel& model);
ModelParams load_checkpoint(const std::filesystem::path& path);
QuantizedModel load_quantized_checkpoint(const std::filesystem::path& path);

}  // namespace vtlab
