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
#include "vtlab/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>
#include <random>

#include "vtlab/errors.hpp"

namespace vtlab {

void Dataset::validate(std::size_t n_classes) const {
  if (images.size() != labels.size())
    throw InputError("dataset has " + std::to_string(images.size()) + " images but " + std::to_string(labels.size()) +
                     " labels");
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] >= n_classes)
      throw InputError("label " + std::to_string(labels[i]) + " at index " + std::to_string(i) + " is not below " +
                       std::to_string(n_classes));
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
  Dataset out;
  out.provenance = provenance;
  out.images.reserve(indices.size());
  out.labels.reserve(indices.size());
  for (auto i : indices) {
    if (i >= size()) throw IndexError("dataset index " + std::to_string(i) + " out of range");
    out.images.push_back(images[i]);
    out.labels.push_back(labels[i]);
  }
  return out;
}

Dataset gen_synthetic(std::size_t n_classes, std::size_t n_per_class, std::uint64_t seed, std::size_t image_side) {
  if (n_classes == 0 || n_per_class == 0) throw InputError("gen_synthetic: class and per-class counts must be >= 1");
  if (image_side < 4) throw InputError("gen_synthetic: image side must be at least 4");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.08);
  const std::size_t win = image_side / 2;
  const double w = static_cast<double>(win);
  const double two_pi = 2.0 * std::numbers::pi;

  Dataset ds;
  ds.provenance = "synthetic";
  for (std::size_t k = 0; k < n_per_class; ++k) {
    for (std::size_t c = 0; c < n_classes; ++c) {
      // Classes beyond the four base patterns reuse them at a shorter period.
      const double period = w * (0.5 - 0.1 * static_cast<double>(c / 4 % 3)) * (0.9 + 0.2 * unit(rng));
      const double phase = two_pi * unit(rng);
      const double amp = 0.45 + 0.05 * unit(rng);
      const auto oy = static_cast<std::size_t>(unit(rng) * static_cast<double>(image_side - win + 1));
      const auto ox = static_cast<std::size_t>(unit(rng) * static_cast<double>(image_side - win + 1));
      const double sigma = w * (0.2 + 0.05 * unit(rng));
      Tensor img({1, image_side, image_side});
      for (std::size_t y = 0; y < image_side; ++y) {
        for (std::size_t x = 0; x < image_side; ++x) {
          double v = 0.5;
          if (y >= oy && y < oy + win && x >= ox && x < ox + win) {
            const double fy = static_cast<double>(y - oy), fx = static_cast<double>(x - ox);
            switch (c % 4) {
              case 0: v += amp * std::sin(two_pi * fy / period + phase); break;
              case 1: v += amp * std::sin(two_pi * fx / period + phase); break;
              case 2: v += amp * std::sin(two_pi * (fx + fy) / (period * std::numbers::sqrt2) + phase); break;
              default: {
                const double cy = 0.5 * (w - 1.0), r2 = (fx - cy) * (fx - cy) + (fy - cy) * (fy - cy);
                v += (c / 4 % 2 ? -1.0 : 1.0) * amp * std::exp(-r2 / (2.0 * sigma * sigma));
              }
            }
          }
          img[y * image_side + x] = std::clamp(v + noise(rng), 0.0, 1.0);
        }
      }
      ds.images.push_back(std::move(img));
      ds.labels.push_back(c);
    }
  }
  return ds;
}

Dataset decode_cifar10(const std::vector<std::uint8_t>& bytes, const CifarOptions& options) {
  constexpr std::size_t kSide = 32, kPlane = kSide * kSide;
  if (options.image_side == 0) throw ConfigError("CIFAR image side must be positive");
  if (bytes.size() % kCifarRecordBytes != 0) {
    const std::size_t complete = bytes.size() / kCifarRecordBytes;
    throw FormatError("truncated CIFAR-10 file: " + std::to_string(bytes.size()) + " bytes is not a multiple of " +
                          std::to_string(kCifarRecordBytes),
                      complete * kCifarRecordBytes);
  }
  std::size_t records = bytes.size() / kCifarRecordBytes;
  if (options.max_records) records = std::min(records, options.max_records);
  const std::size_t side = options.image_side;
  const std::size_t channels = options.grayscale ? 1 : 3;
  const std::size_t off = side <= kSide ? (kSide - side) / 2 : 0;

  Dataset ds;
  ds.provenance = "cifar10";
  ds.images.reserve(records);
  ds.labels.reserve(records);
  for (std::size_t r = 0; r < records; ++r) {
    const std::size_t base = r * kCifarRecordBytes;
    const std::uint8_t label = bytes[base];
    if (label > 9) throw FormatError("CIFAR-10 label byte " + std::to_string(label) + " exceeds 9", base);
    const std::uint8_t* px = bytes.data() + base + 1;
    auto pixel = [&](std::size_t ch, std::size_t y, std::size_t x) {
      return static_cast<double>(px[ch * kPlane + y * kSide + x]) / 255.0;
    };
    Tensor img({channels, side, side});
    for (std::size_t y = 0; y < side; ++y) {
      for (std::size_t x = 0; x < side; ++x) {
        const std::size_t sy = side <= kSide ? y + off : y * kSide / side;
        const std::size_t sx = side <= kSide ? x + off : x * kSide / side;
        if (options.grayscale) {
          img[y * side + x] = 0.299 * pixel(0, sy, sx) + 0.587 * pixel(1, sy, sx) + 0.114 * pixel(2, sy, sx);
        } else {
          for (std::size_t c = 0; c < 3; ++c) img[(c * side + y) * side + x] = pixel(c, sy, sx);
        }
      }
    }
    ds.images.push_back(std::move(img));
    ds.labels.push_back(label);
  }
  return ds;
}

Dataset load_cifar10(const std::filesystem::path& path, const CifarOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open CIFAR-10 file " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_cifar10(bytes, options);
}

std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k > n) throw ParameterError("cannot sample " + std::to_string(k) + " of " + std::to_string(n) + " items");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(k);
  return idx;
}

}  // namespace vtlab
