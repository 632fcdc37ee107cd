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
// vtlab: command line front end for the attack pipeline.

#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "vtlab/checkpoint.hpp"
#include "vtlab/config.hpp"
#include "vtlab/parallel.hpp"
#include "vtlab/pipeline.hpp"

namespace {

using namespace vtlab;

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out = "vtlab_out";
  std::vector<std::string> overrides;
  std::string stage;
  std::string model;
  std::string trigger;
  std::string flips;
  std::string reference;
  std::string output;
};

PipelineConfig resolve_config(const Common& c) {
  PipelineConfig cfg = c.config.empty() ? PipelineConfig{} : load_config(c.config);
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (c.seed_set) cfg.seed = c.seed;
  cfg.validate();
  return cfg;
}

std::filesystem::path out_path(const Common& c, const std::string& given, const char* fallback) {
  return given.empty() ? std::filesystem::path(c.out) / fallback : std::filesystem::path(given);
}

void emit(const Common& c, const char* file, const std::string& text) {
  std::filesystem::create_directories(c.out);
  std::ofstream(std::filesystem::path(c.out) / file) << text << '\n';
  std::cout << text << '\n';
}

int guarded(const std::string& stage, const std::function<void()>& body) {
  try {
    body();
    return 0;
  } catch (const StageError& e) {
    std::cerr << "vtlab: " << e.what() << '\n';
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "vtlab: [" << stage << "] " << e.what() << '\n';
    return static_cast<int>(classify(e));
  }
}

void cmd_train(const Common& c) {
  const auto cfg = resolve_config(c);
  set_num_threads(static_cast<unsigned>(cfg.threads ? cfg.threads : std::thread::hardware_concurrency()));
  const auto data = prepare_data(cfg);
  const auto clean = obtain_clean_model(cfg, data.train);
  std::filesystem::create_directories(c.out);
  save_checkpoint(std::filesystem::path(c.out) / "clean.tvck", clean);
  const auto q = quantize_model(clean);
  save_checkpoint(std::filesystem::path(c.out) / "clean_q.tvck", q);
  char buf[128];
  std::snprintf(buf, sizeof buf, "{\"clean_accuracy\": %.2f, \"clean_accuracy_int8\": %.2f}",
                round2(compute_cda(clean, data.eval)), round2(compute_cda(dequantize_model(q), data.eval)));
  emit(c, "train.json", buf);
}

void cmd_gen_trigger(const Common& c) {
  const auto cfg = resolve_config(c);
  set_num_threads(static_cast<unsigned>(cfg.threads ? cfg.threads : std::thread::hardware_concurrency()));
  const auto data = prepare_data(cfg);
  const auto model = load_checkpoint(out_path(c, c.model, "clean_q.tvck"));
  const auto res = generate_trigger(model, data.attack_batch, cfg.trigger);
  save_trigger(out_path(c, c.output, "trigger.tvtg"), res.spec, model.config());
  std::string patches;
  for (auto t : res.spec.patches) patches += (patches.empty() ? "" : ", ") + std::to_string(t);
  char buf[256];
  std::snprintf(buf, sizeof buf, "{\"patches\": [%s], \"attention_before\": %.6f, \"attention_after\": %.6f}",
                patches.c_str(), res.attention_before, res.attention_after);
  emit(c, "trigger.json", buf);
}

void cmd_insert(const Common& c) {
  const auto cfg = resolve_config(c);
  set_num_threads(static_cast<unsigned>(cfg.threads ? cfg.threads : std::thread::hardware_concurrency()));
  const auto data = prepare_data(cfg);
  const auto clean_q = load_quantized_checkpoint(out_path(c, c.model, "clean_q.tvck"));
  const auto trig = load_trigger(out_path(c, c.trigger, "trigger.tvtg"), clean_q.config);
  const auto outcome = run_attack(clean_q, trig, data.attack_batch, data.eval, cfg.insertion);
  save_checkpoint(out_path(c, c.output, "trojan_q.tvck"), outcome.trojan);
  save_flips(std::filesystem::path(c.out) / "flips.tvbf", outcome.diff.record);
  char buf[256];
  std::snprintf(buf, sizeof buf, "{\"n_p\": %zu, \"initial_wt\": %zu, \"tpn\": %zu, \"tbn\": %zu}",
                outcome.insertion.n_p, outcome.insertion.initial_size, outcome.diff.tpn, outcome.diff.tbn);
  emit(c, "insert.json", buf);
}

void cmd_flip_apply(const Common& c) {
  const auto clean_q = load_quantized_checkpoint(out_path(c, c.model, "clean_q.tvck"));
  const auto record = load_flips(out_path(c, c.flips, "flips.tvbf"));
  const auto trojan = apply_flips(clean_q, record);
  const auto dest = out_path(c, c.output, "trojan_q.tvck");
  if (dest.has_parent_path()) std::filesystem::create_directories(dest.parent_path());
  save_checkpoint(dest, trojan);
  std::cout << "{\"flipped_bits\": " << record.size() << "}\n";
}

void cmd_evaluate(const Common& c) {
  const auto cfg = resolve_config(c);
  set_num_threads(static_cast<unsigned>(cfg.threads ? cfg.threads : std::thread::hardware_concurrency()));
  const auto data = prepare_data(cfg);
  const auto bytes_path = out_path(c, c.model, "trojan_q.tvck");
  const auto model = load_checkpoint(bytes_path);
  const auto trig = load_trigger(out_path(c, c.trigger, "trigger.tvtg"), model.config());
  std::size_t tpn = 0, tbn = 0;
  if (!c.reference.empty()) {
    const auto d = diff_bits(load_quantized_checkpoint(c.reference), load_quantized_checkpoint(bytes_path));
    tpn = d.tpn;
    tbn = d.tbn;
  }
  emit(c, "metrics.json", to_json(evaluate_metrics(model, data.eval, trig, tpn, tbn)));
}

void cmd_defend(const Common& c) {
  const auto cfg = resolve_config(c);
  set_num_threads(static_cast<unsigned>(cfg.threads ? cfg.threads : std::thread::hardware_concurrency()));
  const auto data = prepare_data(cfg);
  const auto clean = dequantize_model(quantize_model(load_checkpoint(out_path(c, c.model, "clean.tvck"))));
  const auto trig = c.trigger.empty() && !std::filesystem::exists(std::filesystem::path(c.out) / "trigger.tvtg")
                        ? generate_trigger(clean, data.attack_batch, cfg.trigger).spec
                        : load_trigger(out_path(c, c.trigger, "trigger.tvtg"), clean.config());
  emit(c, "defense.json",
       to_json(evaluate_defense(clean, trig, data.attack_batch, data.eval, cfg.insertion, cfg.defense)));
}

void cmd_report(const Common& c, const std::string& stop) {
  const auto cfg = resolve_config(c);
  PipelineOptions opt;
  opt.out_dir = c.out;
  opt.stop_after = stop;
  std::cout << to_json(run_pipeline(cfg, opt)) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vtlab: patch-wise Trojan attack lab for a tiny vision transformer"};
  app.require_subcommand(1);
  Common c;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", c.config, "flat key = value config file")->check(CLI::ExistingFile);
    sub->add_option_function<std::uint64_t>(
        "--seed", [&](std::uint64_t s) { c.seed = s, c.seed_set = true; }, "override the config seed");
    sub->add_option("--out", c.out, "artifact directory")->capture_default_str();
    sub->add_option("--set", c.overrides, "key=value override, repeatable");
  };

  auto* train = app.add_subcommand("train-clean", "train (or load) the clean model and store TVCK checkpoints");
  add_common(train);

  auto* gen = app.add_subcommand("gen-trigger", "rank patches and optimize the trigger perturbation");
  add_common(gen);
  gen->add_option("--model", c.model, "clean checkpoint (default <out>/clean_q.tvck)");
  gen->add_option("--output", c.output, "trigger file (default <out>/trigger.tvtg)");

  auto* ins = app.add_subcommand("insert-trojan", "tune the target weights and emit the flip record");
  add_common(ins);
  ins->add_option("--model", c.model, "clean int8 checkpoint (default <out>/clean_q.tvck)");
  ins->add_option("--trigger", c.trigger, "trigger file (default <out>/trigger.tvtg)");
  ins->add_option("--output", c.output, "trojaned checkpoint (default <out>/trojan_q.tvck)");

  auto* flip = app.add_subcommand("flip-apply", "apply a TVBF flip record to a clean int8 checkpoint");
  add_common(flip);
  flip->add_option("--model", c.model, "clean int8 checkpoint (default <out>/clean_q.tvck)");
  flip->add_option("--flips", c.flips, "flip record (default <out>/flips.tvbf)");
  flip->add_option("--output", c.output, "result checkpoint (default <out>/trojan_q.tvck)");

  auto* eval = app.add_subcommand("evaluate", "CDA, ASR and TAR of a checkpoint under a trigger");
  add_common(eval);
  eval->add_option("--model", c.model, "checkpoint to evaluate (default <out>/trojan_q.tvck)");
  eval->add_option("--trigger", c.trigger, "trigger file (default <out>/trigger.tvtg)");
  eval->add_option("--reference", c.reference, "clean int8 checkpoint for TPN / TBN");

  auto* defend = app.add_subcommand("defend", "rerun the attack against a factored classification head");
  add_common(defend);
  defend->add_option("--model", c.model, "real-valued clean checkpoint (default <out>/clean.tvck)");
  defend->add_option("--trigger", c.trigger, "trigger file (default <out>/trigger.tvtg, generated if absent)");

  auto* sweep = app.add_subcommand("sweep", "threshold, lambda and trigger-shape sweeps");
  add_common(sweep);

  auto* report = app.add_subcommand("report", "run the whole pipeline and write report.json");
  add_common(report);
  report->add_option("--stage", c.stage, "stop after this stage");

  CLI11_PARSE(app, argc, argv);

  if (train->parsed()) return guarded("train-clean", [&] { cmd_train(c); });
  if (gen->parsed()) return guarded("gen-trigger", [&] { cmd_gen_trigger(c); });
  if (ins->parsed()) return guarded("insert-trojan", [&] { cmd_insert(c); });
  if (flip->parsed()) return guarded("flip-apply", [&] { cmd_flip_apply(c); });
  if (eval->parsed()) return guarded("evaluate", [&] { cmd_evaluate(c); });
  if (defend->parsed()) return guarded("defend", [&] { cmd_defend(c); });
  if (sweep->parsed()) return guarded("sweep", [&] { cmd_report(c, "sweep"); });
  return guarded("report", [&] { cmd_report(c, c.stage); });
}
