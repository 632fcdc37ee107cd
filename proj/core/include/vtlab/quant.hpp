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
#include <map>
#include <string>
#include <vector>

#include "vtlab/tensor.hpp"
#include "vtlab/vit.hpp"

namespace vtlab {

/// Per-tensor symmetric int8 storage: value = code * scale.
struct QuantizedTensor {
  Shape shape;
  std::vector<std::int8_t> codes;
  double scale = 1.0;

  std::size_t size() const { return codes.size(); }
  bool operator==(const QuantizedTensor&) const = default;
};

// scale = max|w| / 127 (1 for an all-zero tensor); codes = round-half-even(w / scale) in [-127, 127].
QuantizedTensor quantize(const Tensor& w);
// Same rounding against a fixed, pre-existing scale.
QuantizedTensor quantize_with_scale(const Tensor& w, double scale);
Tensor dequantize(const QuantizedTensor& q);

/// An 8-bit checkpoint: the memory image a RowHammer attacker flips bits in.
struct QuantizedModel {
  ViTConfig config;
  std::map<std::string, QuantizedTensor> tensors;

  bool operator==(const QuantizedModel&) const = default;
};

QuantizedModel quantize_model(const ModelParams& params);
// Re-encodes real weights against the scales of an existing checkpoint; scales never change.
QuantizedModel requantize_model(const ModelParams& params, const QuantizedModel& reference);
ModelParams dequantize_model(const QuantizedModel& model);

struct BitFlip {
  std::string param;
  std::uint64_t element = 0;
  std::uint8_t bit = 0;  // 0 = least significant
  std::uint8_t old_bit = 0;
  std::uint8_t new_bit = 0;

  bool operator==(const BitFlip&) const = default;
};

struct BitFlipRecord {
  std::vector<BitFlip> entries;

  std::size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }
  // Throws ParameterError on old == new, bit > 7 or duplicate (param, element, bit).
  void validate() const;
  bool operator==(const BitFlipRecord&) const = default;
};

struct BitDiff {
  std::size_t tpn = 0;  // elements whose codes differ
  std::size_t tbn = 0;  // total popcount of code XOR
  BitFlipRecord record;
};

// Throws CheckpointIncompatibleError when identifiers, shapes or scales differ.
BitDiff diff_bits(const QuantizedModel& clean, const QuantizedModel& trojan);

// Flips exactly the recorded bits after checking each old bit (StaleRecordError otherwise).
QuantizedModel apply_flips(const QuantizedModel& clean, const BitFlipRecord& record);
// Toggles the recorded bits without checking their current state. Self-inverse.
QuantizedModel toggle_flips(const QuantizedModel& model, const BitFlipRecord& record);

// "TVBF": magic, version byte, u64 entry count, then per entry a u32
// length-prefixed identifier, u64 element index, u8 bit position and one byte
// packing (old_bit << 1) | new_bit.
std::vector<std::uint8_t> encode_flips(const BitFlipRecord& record);
BitFlipRecord decode_flips(const std::vector<std::uint8_t>& bytes);
void save_flips(const std::filesystem::path& path, const BitFlipRecord& record);
BitFlipRecord load_flips(const std::filesystem::path& path);

}  // namespace vtlab
