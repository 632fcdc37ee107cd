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
#include "vtlab/pipeline.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <functional>
#include <thread>

#include "binary_io.hpp"
#include "json.hpp"
#include "vtlab/checkpoint.hpp"
#include "vtlab/parallel.hpp"

namespace vtlab {

namespace {

using json = nlohmann::ordered_json;

enum Stream : std::uint64_t { kTrainData = 1, kTestData, kInit, kShuffle, kAttackSample };

json metrics_json(const MetricsReport& m) {
  return json{{"cda", round2(m.cda)},
              {"asr", round2(m.asr)},
              {"asr_inclusive", round2(m.asr_inclusive)},
              {"tar", round2(m.tar)},
              {"tpn", m.tpn},
              {"tbn", m.tbn},
              {"n_eval", m.n_eval},
              {"target_class", m.target_class}};
}

json row_json(const SweepRow& r, const ExperimentReport& rep) {
  json j = metrics_json(r.metrics);
  j["variable"] = r.variable;
  j["label"] = r.label;
  j["value"] = r.value;
  j["n_p"] = r.n_p;
  j["initial_size"] = r.initial_size;
  j["attention_after"] = r.attention_after;
  json prov;
  prov["seed"] = rep.seed;
  for (const auto& [k, v] : rep.config)
    if (k.rfind("trigger.", 0) == 0 || k.rfind("insert.", 0) == 0 || k == "surgery" || k == "attack.batch")
      prov[k] = v;
  j["provenance"] = std::move(prov);
  return j;
}

json defense_json(const DefenseReport& d) {
  return json{{"no_defense", metrics_json(d.no_defense)},
              {"with_defense", metrics_json(d.with_defense)},
              {"n_p_no_defense", d.n_p_no_defense},
              {"n_p_with_defense", d.n_p_with_defense},
              {"wt_no_defense", d.wt_no_defense},
              {"wt_with_defense", d.wt_with_defense},
              {"clean_cda", round2(d.clean_cda)},
              {"clean_cda_factored", round2(d.clean_cda_factored)},
              {"reconstruction_error", d.reconstruction_error}};
}

std::size_t count_real_changes(const ModelParams& a, const ModelParams& b) {
  std::size_t n = 0;
  for (const auto& [name, t] : a.tensors()) {
    const auto& u = b.at(name);
    for (std::size_t i = 0; i < t.size(); ++i)
      if (std::bit_cast<std::uint64_t>(t[i]) != std::bit_cast<std::uint64_t>(u[i])) ++n;
  }
  return n;
}

std::string label_of(double v) {
  json j = v;
  return j.dump();
}

}  // namespace

bool is_stage(std::string_view name) {
  return std::find(std::begin(kStages), std::end(kStages), name) != std::end(kStages);
}

ExitCode classify(const std::exception& e) {
  if (const auto* s = dynamic_cast<const StageError*>(&e)) return s->code();
  if (dynamic_cast<const ConfigError*>(&e)) return ExitCode::config;
  if (dynamic_cast<const InputError*>(&e)) return ExitCode::input;
  if (dynamic_cast<const FormatError*>(&e)) return ExitCode::format;
  if (dynamic_cast<const CheckpointIncompatibleError*>(&e) || dynamic_cast<const StaleRecordError*>(&e))
    return ExitCode::incompatible;
  if (dynamic_cast<const VerificationError*>(&e)) return ExitCode::verification;
  if (dynamic_cast<const ParameterError*>(&e)) return ExitCode::parameter;
  return ExitCode::internal;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

PipelineData prepare_data(const PipelineConfig& cfg) {
  cfg.validate();
  PipelineData d;
  if (cfg.dataset == "synthetic") {
    d.train = gen_synthetic(cfg.model.n_classes, cfg.train_per_class, derive_seed(cfg.seed, kTrainData),
                            cfg.model.image_side);
    d.test = gen_synthetic(cfg.model.n_classes, cfg.test_per_class, derive_seed(cfg.seed, kTestData),
                           cfg.model.image_side);
  } else {
    CifarOptions opt;
    opt.image_side = cfg.model.image_side;
    opt.grayscale = cfg.model.channels == 1;
    if (cfg.model.channels != 1 && cfg.model.channels != 3) throw ConfigError("cifar10 needs 1 or 3 channels");
    d.train = load_cifar10(cfg.cifar_train, opt);
    d.test = load_cifar10(cfg.cifar_test, opt);
  }
  d.train.validate(cfg.model.n_classes);
  d.test.validate(cfg.model.n_classes);
  if (cfg.attack_batch >= d.test.size())
    throw ConfigError("attack.batch " + std::to_string(cfg.attack_batch) + " must be smaller than the test split (" +
                      std::to_string(d.test.size()) + ")");
  d.attack_indices = sample_indices(d.test.size(), cfg.attack_batch, derive_seed(cfg.seed, kAttackSample));
  for (auto i : d.attack_indices) d.attack_batch.push_back(d.test.images[i]);
  std::vector<std::uint8_t> taken(d.test.size(), 0);
  for (auto i : d.attack_indices) taken[i] = 1;
  std::vector<std::size_t> rest;
  for (std::size_t i = 0; i < d.test.size(); ++i)
    if (!taken[i]) rest.push_back(i);
  d.eval = d.test.subset(rest);
  return d;
}

ModelParams obtain_clean_model(const PipelineConfig& cfg, const Dataset& train) {
  if (!cfg.clean_checkpoint.empty()) {
    auto p = load_checkpoint(cfg.clean_checkpoint);
    if (!(p.config() == cfg.model))
      throw CheckpointIncompatibleError("clean checkpoint was built for a different model config");
    return p;
  }
  TrainConfig tc = cfg.train;
  tc.seed = derive_seed(cfg.seed, kShuffle);
  return train_clean(init_params(cfg.model, derive_seed(cfg.seed, kInit)), train, tc);
}

AttackOutcome run_attack(const QuantizedModel& clean, const TriggerSpec& trigger,
                         const std::vector<Tensor>& attack_batch, const Dataset& eval,
                         const InsertionConfig& insertion) {
  AttackOutcome out;
  const ModelParams clean_real = dequantize_model(clean);
  out.insertion = trojan_insertion(clean_real, trigger, attack_batch, insertion);
  out.trojan = requantize_model(out.insertion.backdoored, clean);
  out.diff = diff_bits(clean, out.trojan);
  if (!(apply_flips(clean, out.diff.record) == out.trojan))
    throw VerificationError("clean checkpoint plus flip record does not reproduce the trojaned checkpoint");
  out.real_changed = count_real_changes(clean_real, out.insertion.backdoored);
  out.clean = evaluate_metrics(clean_real, eval, trigger);
  out.backdoored = evaluate_metrics(dequantize_model(out.trojan), eval, trigger, out.diff.tpn, out.diff.tbn);
  return out;
}

std::string to_json(const MetricsReport& m) { return metrics_json(m).dump(2); }

std::string to_json(const DefenseReport& d) { return defense_json(d).dump(2); }

std::string to_json(const ExperimentReport& rep, bool include_timings) {
  json j;
  json cfg = json::object();
  for (const auto& [k, v] : rep.config) cfg[k] = v;
  j["config"] = std::move(cfg);
  j["seed"] = rep.seed;
  j["stages"] = rep.stages;
  j["clean_accuracy"] = round2(rep.clean_accuracy);
  j["trigger"] = json{{"patches", rep.trigger_patches},
                      {"attention_before", rep.attention_before},
                      {"attention_after", rep.attention_after},
                      {"loss_first", rep.trigger_loss_first},
                      {"loss_last", rep.trigger_loss_last}};
  if (rep.attack) {
    const auto& a = *rep.attack;
    j["clean"] = metrics_json(a.clean);
    j["backdoored"] = metrics_json(a.backdoored);
    j["n_p"] = a.insertion.n_p;
    j["initial_wt"] = a.insertion.initial_size;
    j["real_changed"] = a.real_changed;
    j["id_set_sizes"] = a.insertion.id_set_sizes;
    j["cda_drop"] = round2(a.clean.cda - a.backdoored.cda);
    j["flips_verified"] = rep.flips_verified;
  }
  auto rows = [&](const std::vector<SweepRow>& v) {
    json arr = json::array();
    for (const auto& r : v) arr.push_back(row_json(r, rep));
    return arr;
  };
  j["threshold_sweep"] = rows(rep.threshold_sweep);
  j["lambda_sweep"] = rows(rep.lambda_sweep);
  j["area_ablation"] = rows(rep.area_ablation);
  if (rep.defense) j["defense"] = defense_json(*rep.defense);
  if (include_timings) {
    json t = json::object();
    for (const auto& [k, v] : rep.timings) t[k] = v;
    j["timings"] = std::move(t);
  }
  return j.dump(2);
}

ExperimentReport run_pipeline(const PipelineConfig& cfg, const PipelineOptions& opt) {
  if (!opt.stop_after.empty() && !is_stage(opt.stop_after))
    throw StageError("config", ExitCode::config, "unknown stage '" + opt.stop_after + "'");

  ExperimentReport rep;
  rep.seed = cfg.seed;
  // Thread count changes scheduling only, so it stays out of the report.
  for (auto& kv : cfg.entries())
    if (kv.first != "threads") rep.config.push_back(std::move(kv));
  bool stopped = false;
  auto stage = [&](std::string_view name, const std::function<void()>& body) {
    if (stopped) return;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      body();
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError(std::string(name), classify(e), e.what());
    }
    const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
    rep.timings.emplace_back(std::string(name), dt.count());
    rep.stages.emplace_back(name);
    if (opt.stop_after == name) stopped = true;
  };
  auto artifact = [&](const char* file) { return opt.out_dir / file; };
  const bool write = !opt.out_dir.empty();

  try {
    cfg.validate();
  } catch (const std::exception& e) {
    throw StageError("config", classify(e), e.what());
  }
  const unsigned saved_threads = num_threads();
  set_num_threads(cfg.threads ? static_cast<unsigned>(cfg.threads)
                              : std::max(1u, std::thread::hardware_concurrency()));
  struct Restore {
    unsigned n;
    ~Restore() { set_num_threads(n); }
  } restore{saved_threads};

  if (write) {
    std::error_code ec;
    std::filesystem::create_directories(opt.out_dir, ec);
    if (ec) throw StageError("config", ExitCode::input, "cannot create " + opt.out_dir.string() + ": " + ec.message());
  }

  PipelineData data;
  ModelParams clean_real;
  QuantizedModel clean_q;
  TriggerResult trig;

  stage("data", [&] { data = prepare_data(cfg); });
  stage("train-clean", [&] {
    clean_real = obtain_clean_model(cfg, data.train);
    rep.clean_accuracy = compute_cda(clean_real, data.eval);
    if (write) save_checkpoint(artifact("clean.tvck"), clean_real);
  });
  stage("quantize", [&] {
    clean_q = quantize_model(clean_real);
    if (write) save_checkpoint(artifact("clean_q.tvck"), clean_q);
  });
  stage("gen-trigger", [&] {
    trig = generate_trigger(dequantize_model(clean_q), data.attack_batch, cfg.trigger);
    rep.trigger_patches = trig.spec.patches;
    rep.attention_before = trig.attention_before;
    rep.attention_after = trig.attention_after;
    rep.trigger_loss_first = trig.loss_history.front();
    rep.trigger_loss_last = trig.loss_history.back();
    if (write) save_trigger(artifact("trigger.tvtg"), trig.spec, cfg.model);
  });

  const ModelParams clean_deployed = stopped ? ModelParams{} : dequantize_model(clean_q);
  AttackOutcome attack;
  stage("insert-trojan", [&] {
    attack.insertion = trojan_insertion(clean_deployed, trig.spec, data.attack_batch, cfg.insertion);
    attack.trojan = requantize_model(attack.insertion.backdoored, clean_q);
    attack.real_changed = count_real_changes(clean_deployed, attack.insertion.backdoored);
    if (write) save_checkpoint(artifact("trojan_q.tvck"), attack.trojan);
  });
  stage("diff-bits", [&] {
    attack.diff = diff_bits(clean_q, attack.trojan);
    if (write) save_flips(artifact("flips.tvbf"), attack.diff.record);
  });
  stage("flip-apply", [&] {
    if (!(apply_flips(clean_q, attack.diff.record) == attack.trojan))
      throw VerificationError("clean checkpoint plus flip record does not reproduce the trojaned checkpoint");
    rep.flips_verified = true;
  });
  stage("evaluate", [&] {
    attack.clean = evaluate_metrics(clean_deployed, data.eval, trig.spec);
    attack.backdoored =
        evaluate_metrics(dequantize_model(attack.trojan), data.eval, trig.spec, attack.diff.tpn, attack.diff.tbn);
    rep.attack = attack;
  });
  stage("sweep", [&] {
    for (double e : cfg.threshold_sweep) {
      InsertionConfig ic = cfg.insertion;
      ic.threshold = e;
      const auto o = run_attack(clean_q, trig.spec, data.attack_batch, data.eval, ic);
      rep.threshold_sweep.push_back(
          {"threshold", label_of(e), e, o.backdoored, o.insertion.n_p, o.insertion.initial_size, trig.attention_after});
    }
    for (double lam : cfg.lambda_sweep) {
      TriggerConfig tc = cfg.trigger;
      tc.lambda = lam;
      const auto t = lam == cfg.trigger.lambda ? trig : generate_trigger(clean_deployed, data.attack_batch, tc);
      const auto o = run_attack(clean_q, t.spec, data.attack_batch, data.eval, cfg.insertion);
      rep.lambda_sweep.push_back(
          {"lambda", label_of(lam), lam, o.backdoored, o.insertion.n_p, o.insertion.initial_size, t.attention_after});
    }
    if (cfg.area_ablation) {
      const auto& a = *rep.attack;
      rep.area_ablation.push_back({"trigger", "patch", static_cast<double>(cfg.trigger.budget), a.backdoored,
                                   a.insertion.n_p, a.insertion.initial_size, trig.attention_after});
      // Same pixel count as the patch-wise trigger, centred so it straddles patch borders.
      const std::size_t p = cfg.model.patch_size;
      std::size_t side = p;
      while ((side + 1) * (side + 1) <= cfg.trigger.budget * p * p) ++side;
      const std::size_t s = cfg.model.image_side;
      const std::size_t corner = s > side ? (s - side) / 2 : 0;
      const auto t = generate_area_trigger(clean_deployed, data.attack_batch, cfg.trigger, corner, corner, side);
      const auto o = run_attack(clean_q, t.spec, data.attack_batch, data.eval, cfg.insertion);
      rep.area_ablation.push_back({"trigger", "area", static_cast<double>(side), o.backdoored, o.insertion.n_p,
                                   o.insertion.initial_size, t.attention_after});
    }
  });
  stage("defend", [&] {
    if (cfg.defense_enabled)
      rep.defense =
          evaluate_defense(clean_deployed, trig.spec, data.attack_batch, data.eval, cfg.insertion, cfg.defense);
  });

  if (write) {
    const auto text = to_json(rep) + "\n";
    detail::write_file(artifact("report.json").string(), std::vector<std::uint8_t>(text.begin(), text.end()));
  }
  return rep;
}

}  // namespace vtlab
