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
#include "vtlab/trigger.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "binary_io.hpp"
#include "vtlab/errors.hpp"
#include "vtlab/parallel.hpp"

namespace vtlab {

using ad::Var;

std::string to_string(SurgeryMode mode) { return mode == SurgeryMode::project ? "eq6" : "ce_only"; }

SurgeryMode parse_surgery_mode(std::string_view s) {
  if (s == "eq6") return SurgeryMode::project;
  if (s == "ce_only") return SurgeryMode::primary_only;
  throw ConfigError("unknown surgery mode '" + std::string(s) + "' (expected eq6 or ce_only)");
}

std::vector<double> gradient_surgery(std::span<const double> primary, std::span<const double> secondary,
                                     SurgeryMode mode) {
  if (primary.size() != secondary.size())
    throw DimensionError("gradient_surgery: lengths " + std::to_string(primary.size()) + " and " +
                         std::to_string(secondary.size()) + " differ");
  const double d = dot(primary, secondary);
  const double pp = dot(primary, primary);
  std::vector<double> out(primary.size());
  const bool zero = pp == 0.0 || dot(secondary, secondary) == 0.0;
  if (zero || d > 0.0) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = primary[i] + secondary[i];
  } else if (mode == SurgeryMode::primary_only && d < 0.0) {
    std::copy(primary.begin(), primary.end(), out.begin());
  } else {
    const double c = d / pp;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = primary[i] + secondary[i] - c * primary[i];
  }
  return out;
}

Tensor gradient_surgery(const Tensor& primary, const Tensor& secondary, SurgeryMode mode) {
  if (primary.shape() != secondary.shape())
    throw DimensionError("gradient_surgery: shapes " + shape_str(primary.shape()) + " and " +
                         shape_str(secondary.shape()) + " differ");
  return Tensor(primary.shape(), gradient_surgery(primary.data(), secondary.data(), mode));
}

Tensor patch_footprint(const ViTConfig& config, std::span<const std::size_t> patches) {
  const auto idx = patch_index(config.channels, config.image_side, config.patch_size);
  const std::size_t d = config.patch_dim();
  Tensor fp(config.image_shape());
  for (auto t : patches) {
    if (t >= config.n_patches()) throw ParameterError("patch index " + std::to_string(t) + " out of range");
    for (std::size_t j = 0; j < d; ++j) fp[idx[t * d + j]] = 1.0;
  }
  return fp;
}

Tensor TriggerSpec::footprint(const ViTConfig& config) const {
  Tensor fp = patch_footprint(config, patches);
  if (!pixel_mask.empty()) {
    for (std::size_t i = 0; i < fp.size(); ++i) fp[i] *= pixel_mask[i];
  }
  return fp;
}

void TriggerSpec::validate(const ViTConfig& config) const {
  if (n_patches != config.n_patches())
    throw ParameterError("trigger built for " + std::to_string(n_patches) + " patches, model has " +
                         std::to_string(config.n_patches()));
  if (mask.size() != n_patches) throw ParameterError("trigger mask length differs from patch count");
  if (budget == 0 || budget > n_patches) throw ParameterError("trigger budget out of range");
  const auto ones = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
  if (ones != budget || patches.size() != budget) throw ParameterError("trigger mask cardinality differs from budget");
  if (!std::is_sorted(patches.begin(), patches.end())) throw ParameterError("trigger patch set must be ascending");
  for (auto t : patches)
    if (t >= n_patches || mask[t] != 1) throw ParameterError("trigger patch set disagrees with its mask");
  if (target_class >= config.n_classes) throw ParameterError("trigger target class out of range");
  if (!(lambda >= 0.0)) throw ParameterError("trigger lambda must be nonnegative");
  if (perturbation.shape() != config.image_shape()) throw ParameterError("trigger perturbation has the wrong shape");
  if (!pixel_mask.empty() && pixel_mask.shape() != config.image_shape())
    throw ParameterError("trigger pixel mask has the wrong shape");
  const Tensor fp = footprint(config);
  for (std::size_t i = 0; i < fp.size(); ++i)
    if (fp[i] == 0.0 && perturbation[i] != 0.0) throw ParameterError("trigger perturbation leaks outside its footprint");
}

Tensor apply_trigger(const Tensor& image, const TriggerSpec& trigger, const ViTConfig& config) {
  if (image.shape() != config.image_shape()) throw DimensionError("apply_trigger: image shape mismatch");
  const Tensor fp = trigger.footprint(config);
  Tensor out = image;
  for (std::size_t i = 0; i < out.size(); ++i)
    if (fp[i] != 0.0) out[i] = std::clamp(image[i] + trigger.perturbation[i] * fp[i], 0.0, 1.0);
  return out;
}

Var apply_trigger(Var image, Var perturbation, const Tensor& footprint) {
  Var masked = ad::mul(perturbation, image.tape().leaf(footprint));
  return ad::clamp(ad::add(image, masked), 0.0, 1.0);
}

Tensor pixel_salience(const ModelParams& params, const Tensor& image, std::size_t target_class) {
  ad::Tape tape;
  auto bound = bind_params(tape, params);
  Var x = tape.leaf(image, true);
  auto g = forward_graph(params.config(), bound, x);
  tape.backward(ad::cross_entropy(g.logits, target_class));
  Tensor s = tape.grad(x);
  for (auto& v : s.data()) v = std::abs(v);
  return s;
}

std::vector<double> patch_scores(const Tensor& pixel_scores, const ViTConfig& config) {
  const Tensor p = patchify(pixel_scores, config.patch_size);
  std::vector<double> out(p.rows(), 0.0);
  for (std::size_t t = 0; t < p.rows(); ++t)
    for (std::size_t j = 0; j < p.cols(); ++j) out[t] += p.at(t, j);
  return out;
}

std::vector<std::uint8_t> patch_salience_rank(std::span<const double> scores, std::size_t budget) {
  if (budget < 1 || budget > scores.size())
    throw ParameterError("patch budget " + std::to_string(budget) + " outside [1, " + std::to_string(scores.size()) +
                         "]");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<std::uint8_t> mask(scores.size(), 0);
  for (std::size_t i = 0; i < budget; ++i) mask[order[i]] = 1;
  return mask;
}

namespace {

std::vector<std::size_t> mask_to_patches(const std::vector<std::uint8_t>& mask) {
  std::vector<std::size_t> t;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) t.push_back(i);
  return t;
}

std::vector<std::size_t> key_columns(std::span<const std::size_t> patches) {
  if (patches.empty()) throw ParameterError("attention loss needs a nonempty patch set");
  std::vector<std::size_t> cols;
  cols.reserve(patches.size());
  for (auto t : patches) cols.push_back(t + 1);  // class token occupies key position 0
  return cols;
}

std::vector<std::size_t> resolve_layers(std::span<const std::size_t> layer_set, std::size_t n_layers) {
  std::vector<std::size_t> layers(layer_set.begin(), layer_set.end());
  if (layers.empty()) {
    layers.resize(n_layers);
    std::iota(layers.begin(), layers.end(), std::size_t{0});
  }
  for (auto l : layers)
    if (l >= n_layers) throw ParameterError("layer " + std::to_string(l) + " out of range");
  return layers;
}

Var attention_term(const GraphOutput& g, const ViTConfig& cfg, std::span<const std::size_t> layers,
                   std::span<const std::size_t> patches) {
  Var total;
  for (auto l : layers) {
    std::span<const Var> heads(g.attention.data() + l * cfg.n_heads, cfg.n_heads);
    Var term = attention_loss(heads, patches);
    total = total.valid() ? ad::add(total, term) : term;
  }
  return total;
}

struct StepEval {
  double loss = 0.0;
  Tensor grad_ce;
  Tensor grad_attn;  // already lambda-scaled
};

StepEval evaluate_step(const ModelParams& params, const Tensor& image, const Tensor& perturbation,
                       const Tensor& footprint, std::size_t target, double lambda,
                       std::span<const std::size_t> layers, std::span<const std::size_t> patches) {
  ad::Tape tape;
  auto bound = bind_params(tape, params);
  Var p = tape.leaf(perturbation, true);
  Var xhat = apply_trigger(tape.leaf(image), p, footprint);
  auto g = forward_graph(params.config(), bound, xhat);
  Var ce = ad::cross_entropy(g.logits, target);
  StepEval r;
  tape.backward(ce);
  r.grad_ce = tape.grad(p);
  r.loss = ce.value().item();
  if (lambda != 0.0) {
    Var attn = ad::scale(attention_term(g, params.config(), layers, patches), lambda);
    tape.backward(attn);
    r.grad_attn = tape.grad(p);
    r.loss += attn.value().item();
  } else {
    r.grad_attn = Tensor::zeros(perturbation.shape());
  }
  return r;
}

double attention_share(const ModelParams& params, const Tensor& image, std::span<const std::size_t> patches) {
  const auto rec = *forward(params, image, true).attention;
  const auto cols = key_columns(patches);
  double share = 0.0;
  for (const Tensor& a : rec.weights) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i)
      for (auto c : cols) s += a.at(i, c);
    share += s / static_cast<double>(a.rows());
  }
  return share / static_cast<double>(rec.weights.size());
}

double mean_share(const ModelParams& params, const std::vector<Tensor>& images, const TriggerSpec& trigger,
                  bool with_trigger) {
  std::vector<double> shares(images.size());
  parallel_for(images.size(), [&](std::size_t i) {
    const Tensor x = with_trigger ? apply_trigger(images[i], trigger, params.config()) : images[i];
    shares[i] = attention_share(params, x, trigger.patches);
  });
  double s = 0.0;
  for (double v : shares) s += v;
  return s / static_cast<double>(images.size());
}

TriggerResult optimize_perturbation(const ModelParams& params, const std::vector<Tensor>& batch,
                                    const TriggerConfig& cfg, TriggerSpec spec) {
  const ViTConfig& mc = params.config();
  const auto layers = resolve_layers(cfg.layer_set, mc.n_layers);
  spec.layer_set = layers;
  spec.perturbation = Tensor::zeros(mc.image_shape());
  const Tensor fp = spec.footprint(mc);

  TriggerResult result;
  result.attention_before = mean_share(params, batch, spec, false);

  const double inv = 1.0 / static_cast<double>(batch.size());
  std::vector<StepEval> per(batch.size());
  for (std::size_t step = 0; step <= cfg.steps; ++step) {
    parallel_for(batch.size(), [&](std::size_t i) {
      per[i] = evaluate_step(params, batch[i], spec.perturbation, fp, cfg.target_class, cfg.lambda, layers,
                             spec.patches);
    });
    double loss = 0.0;
    Tensor g_ce = Tensor::zeros(mc.image_shape());
    Tensor g_attn = Tensor::zeros(mc.image_shape());
    for (const auto& e : per) {
      loss += e.loss;
      g_ce += e.grad_ce;
      g_attn += e.grad_attn;
    }
    result.loss_history.push_back(loss * inv);
    if (step == cfg.steps) break;
    g_ce *= inv;
    g_attn *= inv;
    const Tensor g = gradient_surgery(g_ce, g_attn, cfg.surgery);
    Tensor& p = spec.perturbation;
    for (std::size_t j = 0; j < p.size(); ++j) p[j] = std::clamp((p[j] - cfg.lr * g[j]) * fp[j], -1.0, 1.0);
  }
  result.attention_after = mean_share(params, batch, spec, true);
  result.spec = std::move(spec);
  return result;
}

void check_trigger_inputs(const ModelParams& params, const std::vector<Tensor>& batch, const TriggerConfig& cfg) {
  if (batch.empty()) throw InputError("trigger generation needs a nonempty image batch");
  const ViTConfig& mc = params.config();
  if (cfg.budget < 1 || cfg.budget > mc.n_patches())
    throw ParameterError("patch budget " + std::to_string(cfg.budget) + " outside [1, " +
                         std::to_string(mc.n_patches()) + "]");
  if (cfg.target_class >= mc.n_classes) throw ParameterError("target class out of range");
  if (!(cfg.lambda >= 0.0)) throw ParameterError("lambda must be nonnegative");
}

}  // namespace

double attention_loss(const AttentionRecord& record, std::span<const std::size_t> patches, std::size_t layer) {
  if (layer >= record.layers) throw ParameterError("layer " + std::to_string(layer) + " out of range");
  const auto cols = key_columns(patches);
  double s = 0.0;
  for (std::size_t h = 0; h < record.heads; ++h) {
    const Tensor& a = record.at(layer, h);
    for (std::size_t i = 0; i < a.rows(); ++i)
      for (auto c : cols) s += a.at(i, c);
  }
  return -std::log(s);
}

Var attention_loss(std::span<const Var> layer_heads, std::span<const std::size_t> patches) {
  if (layer_heads.empty()) throw ParameterError("attention loss needs at least one head");
  const auto cols = key_columns(patches);
  Var mass;
  for (const Var& a : layer_heads) {
    Var s = ad::sum_cols(a, cols);
    mass = mass.valid() ? ad::add(mass, s) : s;
  }
  return ad::scale(ad::log(mass), -1.0);
}

double attention_target_loss(const ModelParams& params, const Tensor& image, std::size_t target_class,
                             std::span<const std::size_t> patches, double lambda,
                             std::span<const std::size_t> layer_set) {
  const auto layers = resolve_layers(layer_set, params.config().n_layers);
  ad::Tape tape;
  auto bound = bind_params(tape, params);
  auto g = forward_graph(params.config(), bound, tape.leaf(image));
  double loss = ad::cross_entropy(g.logits, target_class).value().item();
  if (lambda != 0.0) loss += lambda * attention_term(g, params.config(), layers, patches).value().item();
  return loss;
}

TriggerResult generate_trigger(const ModelParams& params, const std::vector<Tensor>& batch,
                               const TriggerConfig& cfg) {
  check_trigger_inputs(params, batch, cfg);
  const ViTConfig& mc = params.config();

  std::vector<Tensor> sal(batch.size());
  parallel_for(batch.size(), [&](std::size_t i) { sal[i] = pixel_salience(params, batch[i], cfg.target_class); });
  Tensor mean_sal = Tensor::zeros(mc.image_shape());
  for (const auto& s : sal) mean_sal += s;
  mean_sal *= 1.0 / static_cast<double>(batch.size());

  TriggerSpec spec;
  spec.n_patches = mc.n_patches();
  spec.budget = cfg.budget;
  spec.mask = patch_salience_rank(patch_scores(mean_sal, mc), cfg.budget);
  spec.patches = mask_to_patches(spec.mask);
  spec.target_class = cfg.target_class;
  spec.lambda = cfg.lambda;
  return optimize_perturbation(params, batch, cfg, std::move(spec));
}

TriggerResult generate_area_trigger(const ModelParams& params, const std::vector<Tensor>& batch,
                                    const TriggerConfig& cfg, std::size_t top, std::size_t left, std::size_t side) {
  const ViTConfig& mc = params.config();
  TriggerConfig c = cfg;
  c.budget = 1;
  check_trigger_inputs(params, batch, c);
  if (side == 0 || top + side > mc.image_side || left + side > mc.image_side)
    throw ParameterError("area trigger block does not fit in the image");
  TriggerSpec spec;
  spec.n_patches = mc.n_patches();
  spec.mask.assign(spec.n_patches, 0);
  spec.pixel_mask = Tensor::zeros(mc.image_shape());
  for (std::size_t ch = 0; ch < mc.channels; ++ch)
    for (std::size_t y = top; y < top + side; ++y)
      for (std::size_t x = left; x < left + side; ++x) {
        spec.pixel_mask[(ch * mc.image_side + y) * mc.image_side + x] = 1.0;
        spec.mask[(y / mc.patch_size) * mc.grid() + x / mc.patch_size] = 1;
      }
  spec.patches = mask_to_patches(spec.mask);
  spec.budget = spec.patches.size();
  spec.target_class = cfg.target_class;
  spec.lambda = cfg.lambda;
  return optimize_perturbation(params, batch, c, std::move(spec));
}

double trigger_attention_share(const ModelParams& params, const std::vector<Tensor>& images,
                               const TriggerSpec& trigger) {
  if (images.empty()) throw InputError("attention share needs images");
  return mean_share(params, images, trigger, true);
}

namespace {
constexpr char kTriggerMagic[] = "TVTG";
constexpr std::uint8_t kTriggerVersion = 1;
}  // namespace

std::vector<std::uint8_t> encode_trigger(const TriggerSpec& trigger, const ViTConfig& config) {
  trigger.validate(config);
  if (!trigger.pixel_mask.empty()) throw ParameterError("area-wise triggers have no TVTG encoding");
  detail::ByteWriter w;
  w.bytes(kTriggerMagic);
  w.u8(kTriggerVersion);
  w.u32(static_cast<std::uint32_t>(trigger.n_patches));
  w.u32(static_cast<std::uint32_t>(trigger.budget));
  for (auto t : trigger.patches) w.u32(static_cast<std::uint32_t>(t));
  w.u32(static_cast<std::uint32_t>(trigger.target_class));
  w.f64(trigger.lambda);
  const auto idx = patch_index(config.channels, config.image_side, config.patch_size);
  const std::size_t d = config.patch_dim();
  for (auto t : trigger.patches)
    for (std::size_t j = 0; j < d; ++j) w.f64(trigger.perturbation[idx[t * d + j]]);
  return w.take();
}

TriggerSpec decode_trigger(const std::vector<std::uint8_t>& bytes, const ViTConfig& config) {
  detail::ByteReader r(bytes, "trigger file");
  if (bytes.size() < 4 || r.bytes(4) != kTriggerMagic) throw BadMagicError("not a TVTG trigger file", 0);
  const auto version = r.u8();
  if (version != kTriggerVersion)
    throw UnknownVersionError("unsupported TVTG version " + std::to_string(version), 4);
  TriggerSpec spec;
  spec.n_patches = r.u32();
  if (spec.n_patches != config.n_patches())
    throw FormatError("trigger has " + std::to_string(spec.n_patches) + " patches but the model has " +
                          std::to_string(config.n_patches()),
                      5);
  spec.budget = r.u32();
  if (spec.budget == 0 || spec.budget > spec.n_patches)
    throw CorruptPayloadError("trigger budget out of range", 9);
  spec.mask.assign(spec.n_patches, 0);
  for (std::size_t i = 0; i < spec.budget; ++i) {
    const auto off = r.offset();
    const std::size_t t = r.u32();
    if (t >= spec.n_patches || (!spec.patches.empty() && t <= spec.patches.back()))
      throw CorruptPayloadError("trigger patch indices must be ascending and in range", off);
    spec.patches.push_back(t);
    spec.mask[t] = 1;
  }
  spec.target_class = r.u32();
  spec.lambda = r.f64();
  const std::size_t d = config.patch_dim();
  if (r.remaining() != spec.budget * d * 8)
    throw CorruptPayloadError("trigger payload holds " + std::to_string(r.remaining()) + " bytes, expected " +
                                  std::to_string(spec.budget * d * 8),
                              r.offset());
  const auto idx = patch_index(config.channels, config.image_side, config.patch_size);
  spec.perturbation = Tensor::zeros(config.image_shape());
  for (auto t : spec.patches)
    for (std::size_t j = 0; j < d; ++j) spec.perturbation[idx[t * d + j]] = r.f64();
  return spec;
}

void save_trigger(const std::filesystem::path& path, const TriggerSpec& trigger, const ViTConfig& config) {
  detail::write_file(path.string(), encode_trigger(trigger, config));
}

TriggerSpec load_trigger(const std::filesystem::path& path, const ViTConfig& config) {
  return decode_trigger(detail::read_file(path.string()), config);
}

}  // namespace vtlab
