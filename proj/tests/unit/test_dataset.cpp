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
#include <gtest/gtest.h>

#include <algorithm>

#include "vtlab/dataset.hpp"
#include "vtlab/errors.hpp"

namespace vtlab {
namespace {

std::vector<std::uint8_t> cifar_records(std::size_t n, std::uint8_t label) {
  std::vector<std::uint8_t> bytes(n * kCifarRecordBytes);
  for (std::size_t r = 0; r < n; ++r) {
    bytes[r * kCifarRecordBytes] = label;
    for (std::size_t i = 1; i < kCifarRecordBytes; ++i)
      bytes[r * kCifarRecordBytes + i] = static_cast<std::uint8_t>((i + r) % 256);
  }
  return bytes;
}

TEST(Cifar, SingleRecord) {
  auto d = decode_cifar10(cifar_records(1, 7));
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d.labels[0], 7u);
  EXPECT_EQ(d.images[0].shape(), (Shape{1, 16, 16}));
  for (double v : d.images[0].data()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Cifar, FullBatchFile) {
  auto bytes = cifar_records(10000, 3);
  ASSERT_EQ(bytes.size(), 30730000u);
  EXPECT_EQ(decode_cifar10(bytes).size(), 10000u);
}

TEST(Cifar, FullResolutionColour) {
  CifarOptions o;
  o.image_side = 32;
  o.grayscale = false;
  auto d = decode_cifar10(cifar_records(1, 0), o);
  EXPECT_EQ(d.images[0].shape(), (Shape{3, 32, 32}));
  // red plane, first pixel
  EXPECT_DOUBLE_EQ(d.images[0][0], 1.0 / 255.0);
}

TEST(Cifar, TruncatedFileIsFormatError) {
  std::vector<std::uint8_t> bytes(3072);
  EXPECT_THROW(decode_cifar10(bytes), FormatError);
}

TEST(Cifar, LabelOutOfRangeIsFormatError) {
  EXPECT_THROW(decode_cifar10(cifar_records(2, 10)), FormatError);
}

TEST(Cifar, MissingFileIsInputError) {
  EXPECT_THROW(load_cifar10("/nonexistent/data_batch_1.bin"), InputError);
}

TEST(Synthetic, DeterministicForSeed) {
  auto a = gen_synthetic(4, 5, 42);
  auto b = gen_synthetic(4, 5, 42);
  ASSERT_EQ(a.size(), 20u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_TRUE(bitwise_equal(a.images[i], b.images[i]));
    EXPECT_EQ(a.labels[i], b.labels[i]);
  }
  auto c = gen_synthetic(4, 5, 43);
  EXPECT_FALSE(bitwise_equal(a.images[0], c.images[0]));
}

TEST(Synthetic, BalancedAndInRange) {
  auto d = gen_synthetic(4, 6, 1);
  std::vector<std::size_t> counts(4);
  for (auto l : d.labels) ++counts.at(l);
  for (auto c : counts) EXPECT_EQ(c, 6u);
  for (const auto& img : d.images)
    for (double v : img.data()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  EXPECT_NO_THROW(d.validate(4));
}

TEST(Synthetic, ZeroCountsAreInputErrors) {
  EXPECT_THROW(gen_synthetic(4, 0, 1), InputError);
  EXPECT_THROW(gen_synthetic(0, 3, 1), InputError);
}

TEST(Dataset, SubsetAndValidation) {
  auto d = gen_synthetic(4, 2, 1);
  auto s = d.subset({3, 0});
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s.labels[0], d.labels[3]);
  EXPECT_THROW(d.validate(2), InputError);
  EXPECT_THROW(d.subset({100}), IndexError);
}

TEST(Sampling, DistinctAndDeterministic) {
  auto a = sample_indices(100, 10, 5);
  EXPECT_EQ(a, sample_indices(100, 10, 5));
  ASSERT_EQ(a.size(), 10u);
  std::sort(a.begin(), a.end());
  EXPECT_EQ(std::adjacent_find(a.begin(), a.end()), a.end());
  EXPECT_LT(a.back(), 100u);
  EXPECT_THROW(sample_indices(5, 6, 1), ParameterError);
}

}  // namespace
}  // namespace vtlab
