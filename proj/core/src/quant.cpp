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
#include "vtlab/quant.hpp"

#include <algorithm>
#include <bit>
#include <cfenv>
#include <cmath>
#include <set>
#include <tuple>

#include "binary_io.hpp"
#include "vtlab/errors.hpp"

namespace vtlab {

QuantizedTensor quantize_with_scale(const Tensor& w, double scale) {
  if (!(scale > 0.0) || !std::isfinite(scale)) throw ParameterError("quantization scale must be positive and finite");
  QuantizedTensor q;
  q.shape = w.shape();
  q.scale = scale;
  q.codes.resize(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (!std::isfinite(w[i])) throw ParameterError("cannot quantize a non-finite weight");
    // nearbyint rounds half to even under the default FE_TONEAREST mode.
    const double r = std::nearbyint(w[i] / scale);
    q.codes[i] = static_cast<std::int8_t>(std::clamp(r, -127.0, 127.0));
  }
  return q;
}

QuantizedTensor quantize(const Tensor& w) {
  double m = 0.0;
  for (double v : w.data()) m = std::max(m, std::abs(v));
  return quantize_with_scale(w, m == 0.0 ? 1.0 : m / 127.0);
}

Tensor dequantize(const QuantizedTensor& q) {
  Tensor t(q.shape);
  for (std::size_t i = 0; i < q.codes.size(); ++i) t[i] = static_cast<double>(q.codes[i]) * q.scale;
  return t;
}

QuantizedModel quantize_model(const ModelParams& params) {
  QuantizedModel m;
  m.config = params.config();
  for (const auto& [name, t] : params.tensors()) m.tensors.emplace(name, quantize(t));
  return m;
}

QuantizedModel requantize_model(const ModelParams& params, const QuantizedModel& reference) {
  QuantizedModel m;
  m.config = params.config();
  for (const auto& [name, t] : params.tensors()) {
    auto it = reference.tensors.find(name);
    if (it == reference.tensors.end())
      throw CheckpointIncompatibleError("reference checkpoint has no tensor '" + name + "'");
    if (it->second.shape != t.shape())
      throw CheckpointIncompatibleError("shape of '" + name + "' differs from the reference checkpoint");
    m.tensors.emplace(name, quantize_with_scale(t, it->second.scale));
  }
  return m;
}

ModelParams dequantize_model(const QuantizedModel& model) {
  ModelParams p(model.config);
  for (const auto& [name, q] : model.tensors) p.set(name, dequantize(q));
  return p;
}

void BitFlipRecord::validate() const {
  std::set<std::tuple<std::string, std::uint64_t, std::uint8_t>> seen;
  for (const auto& e : entries) {
    if (e.bit > 7) throw ParameterError("bit position " + std::to_string(e.bit) + " exceeds 7");
    if (e.old_bit > 1 || e.new_bit > 1 || e.old_bit == e.new_bit)
      throw ParameterError("flip on " + e.param + "[" + std::to_string(e.element) + "] does not change its bit");
    if (!seen.emplace(e.param, e.element, e.bit).second)
      throw ParameterError("duplicate flip on " + e.param + "[" + std::to_string(e.element) + "] bit " +
                           std::to_string(e.bit));
  }
}

namespace {

std::uint8_t byte_of(std::int8_t code) { return static_cast<std::uint8_t>(code); }

void check_compatible(const QuantizedModel& a, const QuantizedModel& b) {
  if (a.tensors.size() != b.tensors.size())
    throw CheckpointIncompatibleError("checkpoints hold different numbers of tensors");
  for (const auto& [name, qa] : a.tensors) {
    auto it = b.tensors.find(name);
    if (it == b.tensors.end()) throw CheckpointIncompatibleError("tensor '" + name + "' missing from one checkpoint");
    if (qa.shape != it->second.shape) throw CheckpointIncompatibleError("shape of '" + name + "' differs");
    if (std::bit_cast<std::uint64_t>(qa.scale) != std::bit_cast<std::uint64_t>(it->second.scale))
      throw CheckpointIncompatibleError("scale of '" + name + "' differs; scales are immutable under attack");
  }
}

std::int8_t& locate(QuantizedModel& m, const BitFlip& e) {
  auto it = m.tensors.find(e.param);
  if (it == m.tensors.end()) throw IndexError("flip targets unknown tensor '" + e.param + "'");
  if (e.element >= it->second.codes.size())
    throw IndexError("flip element " + std::to_string(e.element) + " out of range for '" + e.param + "'");
  return it->second.codes[e.element];
}

}  // namespace

BitDiff diff_bits(const QuantizedModel& clean, const QuantizedModel& trojan) {
  check_compatible(clean, trojan);
  BitDiff d;
  for (const auto& [name, qc] : clean.tensors) {
    const auto& qt = trojan.tensors.at(name);
    for (std::size_t i = 0; i < qc.codes.size(); ++i) {
      const std::uint8_t x = byte_of(qc.codes[i]) ^ byte_of(qt.codes[i]);
      if (!x) continue;
      ++d.tpn;
      d.tbn += static_cast<std::size_t>(std::popcount(x));
      for (std::uint8_t b = 0; b < 8; ++b) {
        if (!((x >> b) & 1u)) continue;
        const auto old_bit = static_cast<std::uint8_t>((byte_of(qc.codes[i]) >> b) & 1u);
        d.record.entries.push_back({name, i, b, old_bit, static_cast<std::uint8_t>(old_bit ^ 1u)});
      }
    }
  }
  return d;
}

QuantizedModel toggle_flips(const QuantizedModel& model, const BitFlipRecord& record) {
  record.validate();
  QuantizedModel out = model;
  for (const auto& e : record.entries) {
    std::int8_t& c = locate(out, e);
    c = static_cast<std::int8_t>(byte_of(c) ^ static_cast<std::uint8_t>(1u << e.bit));
  }
  return out;
}

QuantizedModel apply_flips(const QuantizedModel& clean, const BitFlipRecord& record) {
  record.validate();
  QuantizedModel out = clean;
  for (std::size_t k = 0; k < record.entries.size(); ++k) {
    const auto& e = record.entries[k];
    std::int8_t& c = locate(out, e);
    const auto cur = static_cast<std::uint8_t>((byte_of(c) >> e.bit) & 1u);
    if (cur != e.old_bit)
      throw StaleRecordError("stale flip record entry " + std::to_string(k) + ": " + e.param + "[" +
                             std::to_string(e.element) + "] bit " + std::to_string(e.bit) + " is " +
                             std::to_string(cur) + ", record expects " + std::to_string(e.old_bit));
    c = static_cast<std::int8_t>(byte_of(c) ^ static_cast<std::uint8_t>(1u << e.bit));
  }
  return out;
}

namespace {
constexpr char kFlipMagic[] = "TVBF";
constexpr std::uint8_t kFlipVersion = 1;
}  // namespace

std::vector<std::uint8_t> encode_flips(const BitFlipRecord& record) {
  record.validate();
  detail::ByteWriter w;
  w.bytes(kFlipMagic);
  w.u8(kFlipVersion);
  w.u64(record.entries.size());
  for (const auto& e : record.entries) {
    w.str(e.param);
    w.u64(e.element);
    w.u8(e.bit);
    w.u8(static_cast<std::uint8_t>((e.old_bit << 1) | e.new_bit));
  }
  return w.take();
}

BitFlipRecord decode_flips(const std::vector<std::uint8_t>& bytes) {
  detail::ByteReader r(bytes, "flip record");
  if (bytes.size() < 4 || r.bytes(4) != kFlipMagic) throw BadMagicError("not a TVBF flip record", 0);
  const auto version = r.u8();
  if (version != kFlipVersion) throw UnknownVersionError("unsupported TVBF version " + std::to_string(version), 4);
  const std::uint64_t count = r.u64();
  BitFlipRecord rec;
  for (std::uint64_t k = 0; k < count; ++k) {
    const auto off = r.offset();
    BitFlip e;
    e.param = r.str();
    e.element = r.u64();
    e.bit = r.u8();
    const auto packed = r.u8();
    if (e.bit > 7 || packed > 3) throw CorruptPayloadError("malformed flip entry " + std::to_string(k), off);
    e.old_bit = static_cast<std::uint8_t>(packed >> 1);
    e.new_bit = static_cast<std::uint8_t>(packed & 1u);
    rec.entries.push_back(std::move(e));
  }
  if (!r.done()) throw CorruptPayloadError("trailing bytes after flip entries", r.offset());
  try {
    rec.validate();
  } catch (const ParameterError& e) {
    throw CorruptPayloadError(std::string("invalid flip record: ") + e.what());
  }
  return rec;
}

void save_flips(const std::filesystem::path& path, const BitFlipRecord& record) {
  detail::write_file(path.string(), encode_flips(record));
}

BitFlipRecord load_flips(const std::filesystem::path& path) { return decode_flips(detail::read_file(path.string())); }

}  // namespace vtlab
