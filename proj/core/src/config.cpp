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
#include "vtlab/config.hpp"

#include <charconv>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "binary_io.hpp"
#include "vtlab/errors.hpp"

namespace vtlab {

namespace {

std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

std::string fmt(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string fmt(std::size_t v) { return std::to_string(v); }

template <class T>
T parse_number(std::string_view key, std::string_view s) {
  T v{};
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw ConfigError("bad value '" + std::string(s) + "' for " + std::string(key));
  return v;
}

bool parse_bool(std::string_view key, std::string_view s) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError("bad boolean '" + std::string(s) + "' for " + std::string(key));
}

template <class T>
std::vector<T> parse_list(std::string_view key, std::string_view s) {
  std::vector<T> out;
  if (trim(s).empty()) return out;
  std::size_t pos = 0;
  while (true) {
    const auto comma = s.find(',', pos);
    out.push_back(parse_number<T>(key, trim(s.substr(pos, comma == std::string_view::npos ? s.npos : comma - pos))));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

template <class T>
std::string join(const std::vector<T>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt(v[i]);
  return s;
}

struct Field {
  const char* help;
  std::function<void(PipelineConfig&, std::string_view key, std::string_view value)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

#define VT_SIZE(member) \
  [](PipelineConfig& c, std::string_view k, std::string_view v) { c.member = parse_number<std::size_t>(k, v); }, \
      [](const PipelineConfig& c) { return fmt(c.member); }
#define VT_REAL(member) \
  [](PipelineConfig& c, std::string_view k, std::string_view v) { c.member = parse_number<double>(k, v); }, \
      [](const PipelineConfig& c) { return fmt(c.member); }
#define VT_TEXT(member) \
  [](PipelineConfig& c, std::string_view, std::string_view v) { c.member = std::string(v); }, \
      [](const PipelineConfig& c) { return c.member; }
#define VT_BOOL(member) \
  [](PipelineConfig& c, std::string_view k, std::string_view v) { c.member = parse_bool(k, v); }, \
      [](const PipelineConfig& c) { return std::string(c.member ? "true" : "false"); }

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table{
      {"dataset", {"synthetic or cifar10", VT_TEXT(dataset)}},
      {"cifar.train", {"CIFAR-10 binary batch used for training", VT_TEXT(cifar_train)}},
      {"cifar.test", {"CIFAR-10 binary batch used for evaluation", VT_TEXT(cifar_test)}},
      {"synthetic.train_per_class", {"synthetic training images per class", VT_SIZE(train_per_class)}},
      {"synthetic.test_per_class", {"synthetic held-out images per class", VT_SIZE(test_per_class)}},
      {"seed", {"master seed", [](PipelineConfig& c, std::string_view k,
                                  std::string_view v) { c.seed = parse_number<std::uint64_t>(k, v); },
                [](const PipelineConfig& c) { return std::to_string(c.seed); }}},
      {"threads", {"worker threads, 0 = hardware concurrency", VT_SIZE(threads)}},
      {"model.image_side", {"image side in pixels", VT_SIZE(model.image_side)}},
      {"model.channels", {"image channels", VT_SIZE(model.channels)}},
      {"model.patch_size", {"patch side in pixels", VT_SIZE(model.patch_size)}},
      {"model.embed_dim", {"token width", VT_SIZE(model.embed_dim)}},
      {"model.heads", {"attention heads per layer", VT_SIZE(model.n_heads)}},
      {"model.layers", {"transformer blocks", VT_SIZE(model.n_layers)}},
      {"model.mlp_dim", {"hidden width of the block MLP", VT_SIZE(model.mlp_dim)}},
      {"model.classes", {"number of classes", VT_SIZE(model.n_classes)}},
      {"train.epochs", {"clean training epochs", VT_SIZE(train.epochs)}},
      {"train.lr", {"clean training learning rate", VT_REAL(train.lr)}},
      {"train.momentum", {"clean training momentum", VT_REAL(train.momentum)}},
      {"train.batch", {"clean training minibatch", VT_SIZE(train.batch)}},
      {"clean_checkpoint", {"TVCK file to load instead of training", VT_TEXT(clean_checkpoint)}},
      {"attack.batch", {"attacker's sampled test images", VT_SIZE(attack_batch)}},
      {"trigger.target", {"target class y_k", VT_SIZE(trigger.target_class)}},
      {"trigger.budget", {"trigger patches N", VT_SIZE(trigger.budget)}},
      {"trigger.lambda", {"attention loss weight", VT_REAL(trigger.lambda)}},
      {"trigger.layers",
       {"zero-based layers in the attention term, empty = all",
        [](PipelineConfig& c, std::string_view k, std::string_view v) {
          c.trigger.layer_set = parse_list<std::size_t>(k, v);
        },
        [](const PipelineConfig& c) { return join(c.trigger.layer_set); }}},
      {"trigger.steps", {"perturbation update steps", VT_SIZE(trigger.steps)}},
      {"trigger.lr", {"perturbation step size", VT_REAL(trigger.lr)}},
      {"surgery",
       {"gradient surgery: eq6 or ce_only",
        [](PipelineConfig& c, std::string_view, std::string_view v) {
          c.trigger.surgery = parse_surgery_mode(v);
          c.insertion.surgery = c.trigger.surgery;
        },
        [](const PipelineConfig& c) { return to_string(c.trigger.surgery); }}},
      {"insert.threshold", {"pruning threshold e", VT_REAL(insertion.threshold)}},
      {"insert.epochs", {"insertion epochs", VT_SIZE(insertion.epochs)}},
      {"insert.lr", {"insertion step size", VT_REAL(insertion.lr)}},
      {"insert.batch", {"insertion minibatch", VT_SIZE(insertion.batch)}},
      {"sweep.thresholds",
       {"pruning thresholds for the e sweep",
        [](PipelineConfig& c, std::string_view k, std::string_view v) {
          c.threshold_sweep = parse_list<double>(k, v);
        },
        [](const PipelineConfig& c) { return join(c.threshold_sweep); }}},
      {"sweep.lambdas",
       {"attention weights for the lambda sweep",
        [](PipelineConfig& c, std::string_view k, std::string_view v) { c.lambda_sweep = parse_list<double>(k, v); },
        [](const PipelineConfig& c) { return join(c.lambda_sweep); }}},
      {"sweep.area", {"run the contiguous-block trigger ablation", VT_BOOL(area_ablation)}},
      {"defense.enabled", {"run the factored-head defense pair", VT_BOOL(defense_enabled)}},
      {"defense.factors", {"number of head factors", VT_SIZE(defense.k_factors)}},
      {"defense.inner_dims",
       {"inner dims of the factor chain, empty = exact default",
        [](PipelineConfig& c, std::string_view k, std::string_view v) {
          c.defense.inner_dims = parse_list<std::size_t>(k, v);
        },
        [](const PipelineConfig& c) { return join(c.defense.inner_dims); }}},
  };
  return table;
}

#undef VT_SIZE
#undef VT_REAL
#undef VT_TEXT
#undef VT_BOOL

const Field& field(std::string_view key) {
  for (const auto& [k, f] : fields())
    if (k == key) return f;
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

}  // namespace

const std::vector<ConfigKey> kConfigKeys = [] {
  std::vector<ConfigKey> keys;
  for (const auto& [k, f] : fields()) keys.push_back({k.c_str(), f.help});
  return keys;
}();

std::vector<std::pair<std::string, std::string>> PipelineConfig::entries() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [k, f] : fields()) out.emplace_back(k, f.get(*this));
  return out;
}

void PipelineConfig::validate() const {
  if (dataset != "synthetic" && dataset != "cifar10") throw ConfigError("dataset must be synthetic or cifar10");
  if (dataset == "cifar10" && (cifar_train.empty() || cifar_test.empty()))
    throw ConfigError("cifar10 needs cifar.train and cifar.test");
  if (dataset == "synthetic" && (train_per_class == 0 || test_per_class == 0))
    throw ConfigError("synthetic split sizes must be positive");
  model.validate();
  if (train.batch == 0) throw ConfigError("train.batch must be positive");
  if (attack_batch == 0) throw ConfigError("attack.batch must be positive");
  if (trigger.target_class >= model.n_classes) throw ConfigError("trigger.target out of range");
  if (trigger.budget == 0 || trigger.budget > model.n_patches())
    throw ConfigError("trigger.budget must lie in [1, " + std::to_string(model.n_patches()) + "]");
  for (auto l : trigger.layer_set)
    if (l >= model.n_layers) throw ConfigError("trigger.layers entry " + std::to_string(l) + " out of range");
  insertion.validate();
  for (double e : threshold_sweep)
    if (!(e >= 0.0)) throw ConfigError("sweep.thresholds entries must be >= 0");
  if (defense_enabled && defense.k_factors < 1) throw ConfigError("defense.factors must be >= 1");
}

void set_config_value(PipelineConfig& config, std::string_view key, std::string_view value) {
  field(trim(key)).set(config, trim(key), trim(value));
}

PipelineConfig parse_config(std::string_view text) {
  PipelineConfig cfg;
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    auto line = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const auto where = "line " + std::to_string(line_no) + ": ";
    if (eq == std::string_view::npos) throw ConfigError(where + "expected key = value");
    const auto key = trim(line.substr(0, eq));
    if (!seen.insert(std::string(key)).second) throw ConfigError(where + "duplicate key '" + std::string(key) + "'");
    try {
      set_config_value(cfg, key, line.substr(eq + 1));
    } catch (const Error& e) {
      throw ConfigError(where + e.what());
    }
  }
  return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path.string());
  return parse_config(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

std::string to_config_text(const PipelineConfig& config) {
  std::ostringstream os;
  for (const auto& [k, v] : config.entries()) os << k << " = " << v << '\n';
  return os.str();
}

}  // namespace vtlab
