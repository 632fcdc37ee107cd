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
#include <vector>

#include "vtlab/tensor.hpp"

namespace vtlab {

/// Images in [0,1] with shape [C x S x S] and their class labels.
struct Dataset {
  std::vector<Tensor> images;
  std::vector<std::size_t> labels;
  std::string provenance;  // "synthetic" or "cifar10"

  std::size_t size() const { return images.size(); }
  bool empty() const { return images.empty(); }
  // Throws InputError when lengths disagree or a label is >= n_classes.
  void validate(std::size_t n_classes) const;
  Dataset subset(const std::vector<std::size_t>& indices) const;
};

/// Single-channel images holding one class-conditional object on a flat grey
/// background plus seeded Gaussian noise. The object fills a randomly placed
/// window of half the image side; classes cycle through horizontal grating,
/// vertical grating, diagonal grating and blob. Samples are class-interleaved.
Dataset gen_synthetic(std::size_t n_classes, std::size_t n_per_class, std::uint64_t seed,
                      std::size_t image_side = 16);

struct CifarOptions {
  std::size_t image_side = 16;  // <= 32 centre-crops, > 32 nearest-neighbour upsamples
  bool grayscale = true;
  std::size_t max_records = 0;  // 0 = all
};

inline constexpr std::size_t kCifarRecordBytes = 3073;

// Public CIFAR-10 binary batches: 1 label byte followed by 3072 channel-planar pixel bytes.
Dataset load_cifar10(const std::filesystem::path& path, const CifarOptions& options = {});
Dataset decode_cifar10(const std::vector<std::uint8_t>& bytes, const CifarOptions& options = {});

// Uniform sample of k distinct indices from [0, n), returned in draw order.
std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, std::uint64_t seed);

}  // namespace vtlab
