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

#include <filesystem>
#include <fstream>

#include "vtlab/config.hpp"
#include "vtlab/errors.hpp"

namespace vtlab {
namespace {

TEST(Config, DefaultsAreValid) {
  PipelineConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.attack_batch, 64u);
  EXPECT_EQ(c.threshold_sweep, (std::vector<double>{0.0, 5e-4, 1e-3, 2e-3, 3e-3}));
  EXPECT_EQ(c.trigger.surgery, SurgeryMode::project);
}

TEST(Config, ParsesKeysCommentsAndLists) {
  auto c = parse_config(
      "# desk run\n"
      "seed = 9\n"
      "\n"
      "trigger.lambda = 0.25   # weight\n"
      "trigger.layers = 0, 1\n"
      "surgery = ce_only\n"
      "sweep.thresholds = 0,1e-3\n"
      "defense.enabled = false\n");
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.trigger.lambda, 0.25);
  EXPECT_EQ(c.trigger.layer_set, (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(c.trigger.surgery, SurgeryMode::primary_only);
  EXPECT_EQ(c.insertion.surgery, SurgeryMode::primary_only);
  EXPECT_EQ(c.threshold_sweep, (std::vector<double>{0.0, 1e-3}));
  EXPECT_FALSE(c.defense_enabled);
}

TEST(Config, UnknownKeyNamesLine) {
  try {
    parse_config("seed = 1\nbogus = 2\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("bogus"), std::string::npos);
  }
}

TEST(Config, RejectsMalformedInput) {
  EXPECT_THROW(parse_config("seed = 1\nseed = 2\n"), ConfigError);
  EXPECT_THROW(parse_config("seed 1\n"), ConfigError);
  EXPECT_THROW(parse_config("seed = -1\n"), ConfigError);
  EXPECT_THROW(parse_config("trigger.lr = fast\n"), ConfigError);
  EXPECT_THROW(parse_config("defense.enabled = maybe\n"), ConfigError);
  EXPECT_THROW(parse_config("surgery = pcgrad\n"), ConfigError);
}

TEST(Config, ValidationCatchesInconsistentValues) {
  EXPECT_THROW(parse_config("trigger.target = 4\n").validate(), ConfigError);
  EXPECT_THROW(parse_config("trigger.budget = 17\n").validate(), ConfigError);
  EXPECT_THROW(parse_config("trigger.layers = 2\n").validate(), ConfigError);
  EXPECT_THROW(parse_config("dataset = cifar10\n").validate(), ConfigError);
  EXPECT_THROW(parse_config("dataset = imagenet\n").validate(), ConfigError);
}

TEST(Config, TextRoundTrip) {
  auto c = parse_config("seed = 4\ntrigger.lr = 0.125\ninsert.threshold = 5e-4\ntrigger.layers = 1\n");
  const auto text = to_config_text(c);
  auto back = parse_config(text);
  EXPECT_EQ(to_config_text(back), text);
  EXPECT_EQ(back.entries(), c.entries());
}

TEST(Config, EveryDocumentedKeyIsSettable) {
  PipelineConfig c;
  for (const auto& k : kConfigKeys) {
    const auto entries = c.entries();
    bool found = false;
    for (const auto& [key, value] : entries)
      if (key == k.key) {
        EXPECT_NO_THROW(set_config_value(c, key, value)) << key;
        found = true;
      }
    EXPECT_TRUE(found) << k.key;
  }
}

TEST(Config, LoadFromFile) {
  const auto path = std::filesystem::temp_directory_path() / "vtlab_config_test.cfg";
  std::ofstream(path) << "attack.batch = 32\n";
  EXPECT_EQ(load_config(path).attack_batch, 32u);
  std::filesystem::remove(path);
  EXPECT_THROW(load_config(path), InputError);
}

}  // namespace
}  // namespace vtlab
