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
#include "vtlab/checkpoint.hpp"

#include <array>
#include <map>

#include "binary_io.hpp"
#include "vtlab/errors.hpp"

namespace vtlab {

namespace {

constexpr std::string_view kMagic = "TVCK";
constexpr std::uint8_t kVersion = 1;
constexpr std::uint8_t kReal64 = 0;
constexpr std::uint8_t kInt8 = 1;

void write_header(detail::ByteWriter& w, const ViTConfig& c, CheckpointKind kind, std::size_t count) {
  w.bytes(kMagic);
  w.u8(kVersion);
  w.u8(kind == CheckpointKind::real ? 0 : 1);
  for (std::size_t v : {c.image_side, c.channels, c.patch_size, c.embed_dim, c.n_heads, c.n_layers, c.mlp_dim,
                        c.n_classes})
    w.u32(static_cast<std::uint32_t>(v));
  w.u32(static_cast<std::uint32_t>(count));
}

void write_shape(detail::ByteWriter& w, const Shape& s) {
  w.u8(static_cast<std::uint8_t>(s.size()));
  for (auto d : s) w.u32(static_cast<std::uint32_t>(d));
}

struct RawTensor {
  Shape shape;
  std::uint8_t dtype = kReal64;
  double scale = 1.0;
  std::vector<double> real;
  std::vector<std::int8_t> codes;
};

struct Decoded {
  CheckpointKind kind = CheckpointKind::real;
  ViTConfig config;
  std::map<std::string, RawTensor> tensors;
};

Decoded decode(const std::vector<std::uint8_t>& bytes) {
  detail::ByteReader r(bytes, "checkpoint");
  if (bytes.size() < 4 || r.bytes(4) != kMagic) throw BadMagicError("not a TVCK checkpoint", 0);
  const auto version = r.u8();
  if (version != kVersion) throw UnknownVersionError("unsupported TVCK version " + std::to_string(version), 4);
  Decoded d;
  const auto kind_off = r.offset();
  const auto kind = r.u8();
  if (kind > 1) throw CorruptPayloadError("unknown checkpoint kind " + std::to_string(kind), kind_off);
  d.kind = kind == 0 ? CheckpointKind::real : CheckpointKind::quantized;
  std::array<std::size_t*, 8> fields{&d.config.image_side, &d.config.channels, &d.config.patch_size,
                                     &d.config.embed_dim,  &d.config.n_heads,  &d.config.n_layers,
                                     &d.config.mlp_dim,    &d.config.n_classes};
  for (auto* f : fields) *f = r.u32();
  try {
    d.config.validate();
  } catch (const ConfigError& e) {
    throw CorruptPayloadError(std::string("invalid config block: ") + e.what(), 6);
  }
  const std::uint32_t count = r.u32();
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto entry_off = r.offset();
    std::string name = r.str();
    RawTensor t;
    const auto rank = r.u8();
    for (std::uint8_t i = 0; i < rank; ++i) t.shape.push_back(r.u32());
    const auto n = shape_numel(t.shape);
    if (rank == 0 || n == 0) throw CorruptPayloadError("tensor '" + name + "' has an empty shape", entry_off);
    t.dtype = r.u8();
    if (t.dtype != kReal64 && t.dtype != kInt8)
      throw CorruptPayloadError("tensor '" + name + "' has unknown dtype " + std::to_string(t.dtype), entry_off);
    if (t.dtype == kInt8) t.scale = r.f64();
    const auto len_off = r.offset();
    const std::uint64_t len = r.u64();
    const std::uint64_t expected = t.dtype == kReal64 ? n * 8 : n;
    if (len != expected)
      throw CorruptPayloadError("tensor '" + name + "' payload length " + std::to_string(len) + ", expected " +
                                    std::to_string(expected),
                                len_off);
    r.need(len);
    if (t.dtype == kReal64) {
      t.real.resize(n);
      for (auto& v : t.real) v = r.f64();
    } else {
      t.codes.resize(n);
      for (auto& v : t.codes) v = r.i8();
    }
    if (!d.tensors.emplace(std::move(name), std::move(t)).second)
      throw CorruptPayloadError("duplicate tensor identifier", entry_off);
  }
  if (!r.done()) throw CorruptPayloadError("trailing bytes after tensor table", r.offset());
  return d;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const ModelParams& params) {
  detail::ByteWriter w;
  write_header(w, params.config(), CheckpointKind::real, params.tensors().size());
  for (const auto& [name, t] : params.tensors()) {
    w.str(name);
    write_shape(w, t.shape());
    w.u8(kReal64);
    w.u64(t.size() * 8);
    for (double v : t.data()) w.f64(v);
  }
  return w.take();
}

std::vector<std::uint8_t> encode_checkpoint(const QuantizedModel& model) {
  detail::ByteWriter w;
  write_header(w, model.config, CheckpointKind::quantized, model.tensors.size());
  for (const auto& [name, q] : model.tensors) {
    w.str(name);
    write_shape(w, q.shape);
    w.u8(kInt8);
    w.f64(q.scale);
    w.u64(q.codes.size());
    for (auto c : q.codes) w.i8(c);
  }
  return w.take();
}

CheckpointKind checkpoint_kind(const std::vector<std::uint8_t>& bytes) { return decode(bytes).kind; }

ModelParams decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  auto d = decode(bytes);
  ModelParams p(d.config);
  for (auto& [name, t] : d.tensors) {
    if (t.dtype == kReal64) {
      p.set(name, Tensor(t.shape, std::move(t.real)));
    } else {
      p.set(name, dequantize(QuantizedTensor{t.shape, std::move(t.codes), t.scale}));
    }
  }
  return p;
}

QuantizedModel decode_quantized_checkpoint(const std::vector<std::uint8_t>& bytes) {
  auto d = decode(bytes);
  QuantizedModel m;
  m.config = d.config;
  for (auto& [name, t] : d.tensors) {
    if (t.dtype != kInt8) throw CheckpointIncompatibleError("tensor '" + name + "' is not int8");
    m.tensors.emplace(name, QuantizedTensor{t.shape, std::move(t.codes), t.scale});
  }
  return m;
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params) {
  detail::write_file(path.string(), encode_checkpoint(params));
}

void save_checkpoint(const std::filesystem::path& path, const QuantizedModel& model) {
  detail::write_file(path.string(), encode_checkpoint(model));
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(detail::read_file(path.string()));
}

QuantizedModel load_quantized_checkpoint(const std::filesystem::path& path) {
  return decode_quantized_checkpoint(detail::read_file(path.string()));
}

}  // namespace vtlab
