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
#include <limits>
#include <bit>
#include <set>

#include "vtlab/dataset.hpp"
#include "vtlab/errors.hpp"
#include "vtlab/trojan.hpp"

namespace vtlab {
namespace {

class TrojanFixture : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    clean_ = new ModelParams(init_params(ViTConfig{}, 21));
    batch_ = new std::vector<Tensor>(gen_synthetic(4, 4, 22).images);
    TriggerConfig tc;
    tc.steps = 20;
    tc.lr = 0.5;
    trigger_ = new TriggerSpec(generate_trigger(*clean_, *batch_, tc).spec);
  }
  static void TearDownTestSuite() {
    delete clean_;
    delete batch_;
    delete trigger_;
  }
  static InsertionResult insert(double e, std::size_t epochs = 3) {
    InsertionConfig ic;
    ic.threshold = e;
    ic.epochs = epochs;
    ic.lr = 0.5;
    return trojan_insertion(*clean_, *trigger_, *batch_, ic);
  }
  static ModelParams* clean_;
  static std::vector<Tensor>* batch_;
  static TriggerSpec* trigger_;
};

ModelParams* TrojanFixture::clean_ = nullptr;
std::vector<Tensor>* TrojanFixture::batch_ = nullptr;
TriggerSpec* TrojanFixture::trigger_ = nullptr;

TEST_F(TrojanFixture, DefaultTargetSetSize) {
  auto w = init_target_weights(*clean_);
  EXPECT_EQ(w.size(), 1188u);
  std::set<std::pair<std::string, std::size_t>> seen;
  for (std::size_t i = 0; i < w.size(); ++i) {
    EXPECT_TRUE(seen.emplace(w.ids[i].param, w.ids[i].element).second);
    EXPECT_EQ(w.values[i], clean_->at(w.ids[i].param)[w.ids[i].element]);
    EXPECT_EQ(w.ids[i].param.find("patch_embed"), std::string::npos);
  }
}

TEST_F(TrojanFixture, TargetTensorsAreLastProjectionAndHead) {
  EXPECT_EQ(target_tensor_names(*clean_),
            (std::vector<std::string>{param_names::block(1, "attn.proj.weight"),
                                      param_names::block(1, "attn.proj.bias"), std::string(param_names::kHeadWeight),
                                      std::string(param_names::kHeadBias)}));
}

TEST_F(TrojanFixture, TargetSetIsDeterministic) {
  auto a = init_target_weights(*clean_);
  auto b = init_target_weights(*clean_);
  EXPECT_EQ(a.ids, b.ids);
}

TEST_F(TrojanFixture, ZeroThresholdKeepsEverything) {
  auto r = insert(0.0);
  EXPECT_EQ(r.n_p, 1188u);
  EXPECT_EQ(r.initial_size, 1188u);
  for (auto s : r.id_set_sizes) EXPECT_EQ(s, 1188u);
}

TEST_F(TrojanFixture, InfiniteThresholdRestoresClean) {
  auto r = insert(std::numeric_limits<double>::infinity());
  EXPECT_EQ(r.n_p, 0u);
  ASSERT_FALSE(r.id_set_sizes.empty());
  EXPECT_EQ(r.id_set_sizes[0], 0u);
  EXPECT_TRUE(bitwise_equal(r.backdoored, *clean_));
}

TEST_F(TrojanFixture, UntouchedAndRestoredWeights) {
  auto r = insert(1e-3, 4);
  EXPECT_LT(r.n_p, r.initial_size);
  EXPECT_GT(r.n_p, 0u);
  std::set<std::pair<std::string, std::size_t>> kept;
  for (const auto& id : r.weights.ids) kept.emplace(id.param, id.element);
  std::size_t changed = 0;
  for (const auto& [name, t] : clean_->tensors()) {
    const Tensor& b = r.backdoored.at(name);
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (kept.count({name, i})) {
        changed += b[i] != t[i];
        continue;
      }
      EXPECT_TRUE(std::bit_cast<std::uint64_t>(b[i]) == std::bit_cast<std::uint64_t>(t[i])) << name << "[" << i << "]";
    }
  }
  EXPECT_GT(changed, 0u);
}

TEST_F(TrojanFixture, IdSetShrinksMonotonically) {
  auto r = insert(2e-3, 5);
  ASSERT_EQ(r.id_set_sizes.size(), 5u);
  for (std::size_t i = 1; i < r.id_set_sizes.size(); ++i) EXPECT_LE(r.id_set_sizes[i], r.id_set_sizes[i - 1]);
  EXPECT_EQ(r.id_set_sizes.back(), r.n_p);
}

TEST_F(TrojanFixture, Deterministic) {
  auto a = insert(5e-4);
  auto b = insert(5e-4);
  EXPECT_TRUE(bitwise_equal(a.backdoored, b.backdoored));
  EXPECT_EQ(a.weights.ids, b.weights.ids);
}

TEST_F(TrojanFixture, RaisesTriggeredTargetScore) {
  auto r = insert(0.0, 5);
  double before = 0, after = 0;
  for (const auto& img : *batch_) {
    const Tensor x = apply_trigger(img, *trigger_, clean_->config());
    before += predict(*clean_, x) == trigger_->target_class;
    after += predict(r.backdoored, x) == trigger_->target_class;
  }
  EXPECT_GE(after, before);
}

TEST_F(TrojanFixture, InvalidInputs) {
  InsertionConfig ic;
  EXPECT_THROW(trojan_insertion(*clean_, *trigger_, {}, ic), InputError);
  ic.threshold = -1;
  EXPECT_THROW(trojan_insertion(*clean_, *trigger_, *batch_, ic), ParameterError);
  ic = InsertionConfig{};
  ic.epochs = 0;
  EXPECT_THROW(trojan_insertion(*clean_, *trigger_, *batch_, ic), ParameterError);
  TriggerSpec broken = *trigger_;
  broken.mask.assign(broken.mask.size(), 0);
  EXPECT_THROW(trojan_insertion(*clean_, broken, *batch_, InsertionConfig{}), ParameterError);
}

}  // namespace
}  // namespace vtlab
