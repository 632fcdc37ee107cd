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

#include <cmath>

#include "grad_suite.hpp"
#include "vtlab/autodiff.hpp"
#include "vtlab/errors.hpp"
#include "vtlab/gradcheck.hpp"

namespace vtlab {
namespace {

using ad::Tape;
using ad::Var;

TEST(Autodiff, MatmulByIdentity) {
  Tape t;
  Var a = t.leaf(Tensor({2, 2}, {1, 2, 3, 4}), true);
  Var eye = t.leaf(Tensor({2, 2}, {1, 0, 0, 1}));
  Var y = ad::matmul(a, eye);
  EXPECT_EQ(y.value().vec(), (std::vector<double>{1, 2, 3, 4}));
  t.backward(ad::sum(y));
  EXPECT_EQ(t.grad(a).vec(), (std::vector<double>{1, 1, 1, 1}));
}

TEST(Autodiff, SoftmaxOfEqualLogits) {
  Tape t;
  Var y = ad::softmax(t.leaf(Tensor({1, 2}, {0, 0})));
  EXPECT_DOUBLE_EQ(y.value()[0], 0.5);
  EXPECT_DOUBLE_EQ(y.value()[1], 0.5);
}

TEST(Autodiff, SoftmaxIsStableForLargeLogits) {
  Tape t;
  Var y = ad::softmax(t.leaf(Tensor({1, 2}, {1000, 0})));
  EXPECT_TRUE(std::isfinite(y.value()[0]));
  EXPECT_NEAR(y.value()[0], 1.0, 1e-12);
  EXPECT_NEAR(y.value()[1], 0.0, 1e-12);
}

TEST(Autodiff, CrossEntropyOfUniformLogits) {
  Tape t;
  Var loss = ad::cross_entropy(t.leaf(Tensor({1, 4}, {0, 0, 0, 0})), 2);
  EXPECT_NEAR(loss.value().item(), std::log(4.0), 1e-12);
}

TEST(Autodiff, CrossEntropyGradientIsSoftmaxMinusOneHot) {
  Tape t;
  Var z = t.leaf(Tensor({1, 3}, {0.3, -1.0, 2.0}), true);
  t.backward(ad::cross_entropy(z, 1));
  Tape ref;
  Var p = ad::softmax(ref.leaf(z.value()));
  Tensor g = t.grad(z);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(g[i], p.value()[i] - (i == 1 ? 1.0 : 0.0), 1e-12);
}

TEST(Autodiff, LayerNormOfConstantRowIsZero) {
  Tape t;
  Var y = ad::layer_norm(t.leaf(Tensor::filled({2, 5}, 3.25)));
  for (double v : y.value().data()) EXPECT_EQ(v, 0.0);
}

TEST(Autodiff, GeluAtZero) {
  Tape t;
  EXPECT_EQ(ad::gelu(t.leaf(Tensor::scalar(0.0))).value().item(), 0.0);
}

TEST(Autodiff, SumOfSquaresGradient) {
  const Tensor x({2}, {1, 2});
  Tape t;
  Var v = t.leaf(x, true);
  t.backward(ad::sum(ad::mul(v, v)));
  EXPECT_EQ(t.grad(v).vec(), (std::vector<double>{2, 4}));
  Tensor fd = finite_difference_gradient(
      [](const Tensor& y) { return y[0] * y[0] + y[1] * y[1]; }, x);
  EXPECT_NEAR(fd[0], 2.0, 1e-8);
  EXPECT_NEAR(fd[1], 4.0, 1e-8);
}

TEST(Autodiff, GradientsAccumulateOverReuse) {
  Tape t;
  Var x = t.leaf(Tensor::scalar(3.0), true);
  t.backward(ad::add(ad::scale(x, 2.0), ad::mul(x, x)));
  EXPECT_DOUBLE_EQ(t.grad(x).item(), 8.0);
}

TEST(Autodiff, ClampBlocksGradientOutsideRange) {
  Tape t;
  Var x = t.leaf(Tensor({3}, {-0.5, 0.5, 1.5}), true);
  t.backward(ad::sum(ad::clamp(x, 0.0, 1.0)));
  EXPECT_EQ(t.grad(x).vec(), (std::vector<double>{0, 1, 0}));
}

TEST(Autodiff, ShapeMismatchThrows) {
  Tape t;
  Var a = t.leaf(Tensor::zeros({2, 3}));
  Var b = t.leaf(Tensor::zeros({2, 3}));
  EXPECT_THROW(ad::matmul(a, b), DimensionError);
  EXPECT_THROW(ad::add(a, t.leaf(Tensor::zeros({3, 2}))), DimensionError);
}

TEST(Autodiff, ConstantLeavesReceiveNoGradient) {
  Tape t;
  Var a = t.leaf(Tensor::scalar(2.0));
  Var b = t.leaf(Tensor::scalar(5.0), true);
  t.backward(ad::mul(a, b));
  EXPECT_FALSE(t.has_grad(a));
  EXPECT_DOUBLE_EQ(t.grad(b).item(), 2.0);
}

class GradientCase : public ::testing::TestWithParam<std::size_t> {};

TEST_P(GradientCase, MatchesFiniteDifferences) {
  const auto cases = testing::gradient_cases();
  const auto& c = cases.at(GetParam());
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const double err = c.run(seed);
    EXPECT_LE(err, 1e-4) << c.name << " seed " << seed;
  }
}

INSTANTIATE_TEST_SUITE_P(All, GradientCase, ::testing::Range<std::size_t>(0, testing::gradient_cases().size()),
                         [](const auto& info) { return testing::gradient_cases()[info.param].name; });

}  // namespace
}  // namespace vtlab
