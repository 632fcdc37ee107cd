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
#include <filesystem>

#include "grad_suite.hpp"
#include "vtlab/dataset.hpp"
#include "vtlab/errors.hpp"
#include "vtlab/gradcheck.hpp"
#include "vtlab/trigger.hpp"

namespace vtlab {
namespace {

std::vector<double> surgery(std::vector<double> a, std::vector<double> b, SurgeryMode m = SurgeryMode::project) {
  return gradient_surgery(a, b, m);
}

TEST(Surgery, AlignedGradientsAdd) {
  EXPECT_EQ(surgery({1, 0}, {2, 0}), (std::vector<double>{3, 0}));
}

TEST(Surgery, OpposingComponentIsRemoved) {
  EXPECT_EQ(surgery({1, 0}, {-1, 1}), (std::vector<double>{1, 1}));
}

TEST(Surgery, OrthogonalBoundary) {
  EXPECT_EQ(surgery({1, 0}, {0, 1}), (std::vector<double>{1, 1}));
}

TEST(Surgery, PrimaryOnlyModeDropsConflicts) {
  EXPECT_EQ(surgery({1, 0}, {-1, 1}, SurgeryMode::primary_only), (std::vector<double>{1, 0}));
  EXPECT_EQ(surgery({1, 0}, {2, 0}, SurgeryMode::primary_only), (std::vector<double>{3, 0}));
}

TEST(Surgery, ShapeMismatch) {
  EXPECT_THROW(surgery({1, 0}, {1, 0, 0}), DimensionError);
}

TEST(Surgery, NeverOpposesPrimary) {
  for (std::uint64_t s = 0; s < 500; ++s) {
    Tensor a = testing::random_tensor({7}, 2 * s);
    Tensor b = testing::random_tensor({7}, 2 * s + 1, -3, 3);
    Tensor r = gradient_surgery(a, b);
    double along = 0;
    for (std::size_t i = 0; i < 7; ++i) along += (r[i] - a[i]) * a[i];
    EXPECT_GE(along, -1e-12);
    if (dot(a.data(), b.data()) > 0)
      for (std::size_t i = 0; i < 7; ++i) EXPECT_EQ(r[i], a[i] + b[i]);
  }
}

TEST(Surgery, ModeNames) {
  EXPECT_EQ(parse_surgery_mode("eq6"), SurgeryMode::project);
  EXPECT_EQ(parse_surgery_mode("ce_only"), SurgeryMode::primary_only);
  EXPECT_EQ(to_string(SurgeryMode::primary_only), "ce_only");
  EXPECT_THROW(parse_surgery_mode("pcgrad"), ConfigError);
}

TEST(Ranking, TopTwo) {
  const std::vector<double> s{3, 1, 4, 1, 5};
  EXPECT_EQ(patch_salience_rank(s, 2), (std::vector<std::uint8_t>{0, 0, 1, 0, 1}));
}

TEST(Ranking, FullBudgetSelectsEverything) {
  const std::vector<double> s{3, 1, 4, 1, 5};
  EXPECT_EQ(patch_salience_rank(s, 5), (std::vector<std::uint8_t>(5, 1)));
}

TEST(Ranking, TiesPreferLowerIndex) {
  const std::vector<double> s{1, 1, 1};
  EXPECT_EQ(patch_salience_rank(s, 1), (std::vector<std::uint8_t>{1, 0, 0}));
}

TEST(Ranking, BudgetOutOfRange) {
  const std::vector<double> s{1, 2};
  EXPECT_THROW(patch_salience_rank(s, 0), ParameterError);
  EXPECT_THROW(patch_salience_rank(s, 3), ParameterError);
}

TEST(Ranking, PatchScoresSumPixels) {
  ViTConfig cfg = testing::tiny_config();
  Tensor px = Tensor::filled(cfg.image_shape(), 1.0);
  px[0] = 3.0;
  auto scores = patch_scores(px, cfg);
  ASSERT_EQ(scores.size(), 4u);
  EXPECT_DOUBLE_EQ(scores[0], 18.0);
  EXPECT_DOUBLE_EQ(scores[3], 16.0);
}

TEST(Salience, ZeroHeadGivesZero) {
  auto params = init_params(ViTConfig{}, 1);
  params.at(std::string(param_names::kHeadWeight)).fill(0.0);
  Tensor s = pixel_salience(params, testing::random_tensor(params.config().image_shape(), 2, 0, 1), 1);
  for (double v : s.data()) EXPECT_EQ(v, 0.0);
}

TEST(Salience, MatchesFiniteDifferences) {
  const auto cfg = testing::tiny_config();
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto params = init_params(cfg, seed);
    Tensor img = testing::random_tensor(cfg.image_shape(), seed + 100, 0.2, 0.8);
    Tensor s = pixel_salience(params, img, 2);
    Tensor fd = finite_difference_gradient(
        [&](const Tensor& x) { return attention_target_loss(params, x, 2, std::vector<std::size_t>{0}, 0.0, {}); },
        img);
    for (auto& v : fd.data()) v = std::abs(v);
    EXPECT_LE(relative_error(s, fd), 1e-3);
    for (double v : s.data()) EXPECT_GE(v, 0.0);
  }
}

TEST(AttentionLoss, UniformSingleHead) {
  AttentionRecord rec;
  rec.layers = 1;
  rec.heads = 1;
  rec.weights.push_back(Tensor::filled({4, 4}, 0.25));
  const std::vector<std::size_t> t{1};
  EXPECT_NEAR(attention_loss(rec, t, 0), 0.0, 1e-15);
}

TEST(AttentionLoss, AllMassOnTrigger) {
  // two heads, n = 3 patches, trigger patch 0 is key column 1
  AttentionRecord rec;
  rec.layers = 1;
  rec.heads = 2;
  for (int h = 0; h < 2; ++h) {
    Tensor a({4, 4});
    for (std::size_t i = 0; i < 4; ++i) a.at(i, 1) = 1.0;
    rec.weights.push_back(a);
  }
  const std::vector<std::size_t> t{0};
  EXPECT_NEAR(attention_loss(rec, t, 0), -std::log(2.0 * 4.0), 1e-12);
  EXPECT_LT(attention_loss(rec, t, 0), 0.0);
}

TEST(AttentionLoss, DecreasesAsMassMovesToTrigger) {
  const std::vector<std::size_t> t{0};
  double prev = INFINITY;
  for (double m : {0.1, 0.3, 0.5, 0.9}) {
    AttentionRecord rec;
    rec.layers = 1;
    rec.heads = 1;
    Tensor a({3, 3});
    for (std::size_t i = 0; i < 3; ++i) {
      a.at(i, 0) = (1 - m) / 2;
      a.at(i, 1) = m;
      a.at(i, 2) = (1 - m) / 2;
    }
    rec.weights.push_back(a);
    const double loss = attention_loss(rec, t, 0);
    EXPECT_LT(loss, prev);
    prev = loss;
  }
}

TEST(AttentionLoss, EmptyPatchSet) {
  AttentionRecord rec;
  rec.layers = 1;
  rec.heads = 1;
  rec.weights.push_back(Tensor::filled({2, 2}, 0.5));
  EXPECT_THROW(attention_loss(rec, {}, 0), ParameterError);
  const std::vector<std::size_t> t{0};
  EXPECT_THROW(attention_loss(rec, t, 1), ParameterError);
}

TEST(AttentionTargetLoss, ZeroLambdaIsCrossEntropy) {
  const auto cfg = testing::tiny_config();
  auto params = init_params(cfg, 4);
  Tensor img = testing::random_tensor(cfg.image_shape(), 5, 0, 1);
  auto z = forward(params, img).logits;
  ad::Tape t;
  const double ce = ad::cross_entropy(t.leaf(z.reshaped({1, cfg.n_classes})), 1).value().item();
  const std::vector<std::size_t> patches{2};
  EXPECT_NEAR(attention_target_loss(params, img, 1, patches, 0.0, {}), ce, 1e-12);
}

TEST(AttentionTargetLoss, LinearInLambda) {
  const auto cfg = testing::tiny_config();
  auto params = init_params(cfg, 4);
  Tensor img = testing::random_tensor(cfg.image_shape(), 5, 0, 1);
  const std::vector<std::size_t> patches{2};
  const std::vector<std::size_t> layers{0};
  auto rec = forward(params, img, true).attention.value();
  const double ce = attention_target_loss(params, img, 1, patches, 0.0, layers);
  EXPECT_NEAR(attention_target_loss(params, img, 1, patches, 1.0, layers), ce + attention_loss(rec, patches, 0),
              1e-12);
}

class TriggerFixture : public ::testing::Test {
 protected:
  void SetUp() override {
    params = init_params(ViTConfig{}, 7);
    auto d = gen_synthetic(4, 3, 8);
    batch = d.images;
  }
  ModelParams params;
  std::vector<Tensor> batch;
};

TEST_F(TriggerFixture, ZeroStepsGivesNoOpTrigger) {
  TriggerConfig tc;
  tc.steps = 0;
  auto r = generate_trigger(params, batch, tc);
  for (double v : r.spec.perturbation.data()) EXPECT_EQ(v, 0.0);
  EXPECT_TRUE(bitwise_equal(apply_trigger(batch[0], r.spec, params.config()), batch[0]));
}

TEST_F(TriggerFixture, SpecInvariantsHold) {
  TriggerConfig tc;
  tc.steps = 10;
  tc.budget = 3;
  tc.target_class = 2;
  auto r = generate_trigger(params, batch, tc);
  const auto& cfg = params.config();
  EXPECT_NO_THROW(r.spec.validate(cfg));
  EXPECT_EQ(r.spec.patches.size(), 3u);
  std::size_t ones = 0;
  for (auto m : r.spec.mask) ones += m;
  EXPECT_EQ(ones, 3u);
  Tensor fp = r.spec.footprint(cfg);
  for (const auto& img : batch) {
    Tensor x = apply_trigger(img, r.spec, cfg);
    for (std::size_t i = 0; i < x.size(); ++i) {
      EXPECT_GE(x[i], 0.0);
      EXPECT_LE(x[i], 1.0);
      if (fp[i] == 0.0) EXPECT_EQ(x[i], img[i]);
    }
  }
  EXPECT_EQ(r.loss_history.size(), 11u);
}

TEST_F(TriggerFixture, Deterministic) {
  TriggerConfig tc;
  tc.steps = 5;
  auto a = generate_trigger(params, batch, tc);
  auto b = generate_trigger(params, batch, tc);
  EXPECT_TRUE(bitwise_equal(a.spec.perturbation, b.spec.perturbation));
  EXPECT_EQ(a.spec.patches, b.spec.patches);
}

TEST_F(TriggerFixture, LossMostlyDecreases) {
  TriggerConfig tc;
  tc.steps = 40;
  auto r = generate_trigger(params, batch, tc);
  std::size_t down = 0;
  for (std::size_t i = 1; i < r.loss_history.size(); ++i) down += r.loss_history[i] <= r.loss_history[i - 1];
  EXPECT_GE(static_cast<double>(down) / (r.loss_history.size() - 1), 0.95);
  EXPECT_LT(r.loss_history.back(), r.loss_history.front());
}

TEST_F(TriggerFixture, InvalidConfigurations) {
  TriggerConfig tc;
  tc.budget = 0;
  EXPECT_THROW(generate_trigger(params, batch, tc), ParameterError);
  tc = TriggerConfig{};
  tc.target_class = 4;
  EXPECT_THROW(generate_trigger(params, batch, tc), ParameterError);
  tc = TriggerConfig{};
  EXPECT_THROW(generate_trigger(params, {}, tc), InputError);
}

TEST_F(TriggerFixture, ValidateRejectsLeaks) {
  TriggerConfig tc;
  tc.steps = 0;
  auto spec = generate_trigger(params, batch, tc).spec;
  const auto& cfg = params.config();
  Tensor fp = spec.footprint(cfg);
  for (std::size_t i = 0; i < fp.size(); ++i)
    if (fp[i] == 0.0) {
      spec.perturbation[i] = 0.1;
      break;
    }
  EXPECT_THROW(spec.validate(cfg), ParameterError);
}

TEST_F(TriggerFixture, AreaTriggerStaysInsideBlock) {
  TriggerConfig tc;
  tc.steps = 3;
  auto r = generate_area_trigger(params, batch, tc, 6, 6, 4);
  const auto& cfg = params.config();
  for (std::size_t y = 0; y < cfg.image_side; ++y)
    for (std::size_t x = 0; x < cfg.image_side; ++x)
      if (y < 6 || y >= 10 || x < 6 || x >= 10) EXPECT_EQ(r.spec.perturbation[y * cfg.image_side + x], 0.0);
  EXPECT_THROW(generate_area_trigger(params, batch, tc, 14, 0, 4), ParameterError);
}

TEST_F(TriggerFixture, FileRoundTrip) {
  TriggerConfig tc;
  tc.steps = 4;
  tc.budget = 2;
  tc.lambda = 0.5;
  tc.target_class = 3;
  auto spec = generate_trigger(params, batch, tc).spec;
  const auto& cfg = params.config();
  auto bytes = encode_trigger(spec, cfg);
  auto back = decode_trigger(bytes, cfg);
  EXPECT_EQ(back.patches, spec.patches);
  EXPECT_EQ(back.mask, spec.mask);
  EXPECT_EQ(back.target_class, 3u);
  EXPECT_EQ(back.lambda, 0.5);
  EXPECT_TRUE(bitwise_equal(back.perturbation, spec.perturbation));
  EXPECT_EQ(encode_trigger(back, cfg), bytes);

  const auto path = std::filesystem::temp_directory_path() / "vtlab_trigger_test.tvtg";
  save_trigger(path, spec, cfg);
  EXPECT_TRUE(bitwise_equal(load_trigger(path, cfg).perturbation, spec.perturbation));
  std::filesystem::remove(path);
}

TEST_F(TriggerFixture, FileErrors) {
  TriggerConfig tc;
  tc.steps = 0;
  const auto& cfg = params.config();
  auto bytes = encode_trigger(generate_trigger(params, batch, tc).spec, cfg);
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_trigger(bad, cfg), BadMagicError);
  bad = bytes;
  bad[4] = 99;
  EXPECT_THROW(decode_trigger(bad, cfg), UnknownVersionError);
  bad = bytes;
  bad.pop_back();
  EXPECT_THROW(decode_trigger(bad, cfg), CorruptPayloadError);
  bad = bytes;
  bad.push_back(0);
  EXPECT_THROW(decode_trigger(bad, cfg), CorruptPayloadError);
  ViTConfig other = cfg;
  other.patch_size = 8;
  EXPECT_THROW(decode_trigger(bytes, other), FormatError);
}

}  // namespace
}  // namespace vtlab
