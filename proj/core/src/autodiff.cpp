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
#include "vtlab/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <string>

#include "vtlab/errors.hpp"

namespace vtlab::ad {

const Tensor& Var::value() const { return tape_->value(*this); }

void Tape::check(Var v) const {
  if (v.tape_ != this || v.id_ >= nodes_.size()) throw IndexError("variable does not belong to this tape");
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  nodes_.push_back(Node{std::move(value), Tensor{}, requires_grad, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(fn));
}

Var Tape::record(Tensor value, std::span<const Var> inputs, BackwardFn fn) {
  bool rg = false;
  for (const Var& in : inputs) {
    check(in);
    rg = rg || nodes_[in.id_].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), Tensor{}, rg, rg ? std::move(fn) : BackwardFn{}});
  return Var(this, nodes_.size() - 1);
}

const Tensor& Tape::value(Var v) const {
  check(v);
  return nodes_[v.id_].value;
}

bool Tape::requires_grad(Var v) const {
  check(v);
  return nodes_[v.id_].requires_grad;
}

Tensor* Tape::grad_sink(Var v) {
  check(v);
  Node& n = nodes_[v.id_];
  if (!n.requires_grad) return nullptr;
  if (n.grad.empty()) n.grad = Tensor::zeros(n.value.shape());
  return &n.grad;
}

void Tape::backward(Var root) {
  check(root);
  if (nodes_[root.id_].value.size() != 1)
    throw DimensionError("backward root must be a single element, got " + shape_str(nodes_[root.id_].value.shape()));
  for (auto& n : nodes_) n.grad = Tensor{};
  if (!nodes_[root.id_].requires_grad) return;
  nodes_[root.id_].grad = Tensor::filled(nodes_[root.id_].value.shape(), 1.0);
  for (std::size_t i = root.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || n.grad.empty()) continue;
    // Rules only write into input sinks, which never reallocate nodes_.
    const Tensor out_grad = n.grad;
    n.backward(*this, Var(this, i), out_grad);
  }
}

bool Tape::has_grad(Var v) const {
  check(v);
  return !nodes_[v.id_].grad.empty();
}

Tensor Tape::grad(Var v) const {
  check(v);
  const Node& n = nodes_[v.id_];
  if (!n.requires_grad) throw IndexError("tensor does not require gradients");
  return n.grad.empty() ? Tensor::zeros(n.value.shape()) : n.grad;
}

namespace {

Tape& same_tape(Var a, Var b) {
  if (&a.tape() != &b.tape()) throw IndexError("operands live on different tapes");
  return a.tape();
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) throw DimensionError(std::string(op) + " expects a rank-2 tensor, got " + shape_str(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + " shape mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

// c[m x p] += a[m x k] * b[k x p], with optional transposes of the stored operands.
void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t p, bool ta, bool tb) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = ta ? a[kk * m + i] : a[i * k + kk];
      if (av == 0.0) continue;
      double* crow = c + i * p;
      if (!tb) {
        const double* brow = b + kk * p;
        for (std::size_t j = 0; j < p; ++j) crow[j] += av * brow[j];
      } else {
        for (std::size_t j = 0; j < p; ++j) crow[j] += av * b[j * k + kk];
      }
    }
  }
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0))
    throw DimensionError("matmul shape mismatch: " + shape_str(av.shape()) + " x " + shape_str(bv.shape()));
  const std::size_t m = av.dim(0), k = av.dim(1), p = bv.dim(1);
  Tensor out({m, p});
  gemm(av.data().data(), bv.data().data(), out.data().data(), m, k, p, false, false);
  return t.record(std::move(out), {a, b}, [a, b, m, k, p](Tape& tp, Var, const Tensor& g) {
    if (Tensor* ga = tp.grad_sink(a))  // dA = dC . B^T
      gemm(g.data().data(), b.value().data().data(), ga->data().data(), m, p, k, false, true);
    if (Tensor* gb = tp.grad_sink(b))  // dB = A^T . dC
      gemm(a.value().data().data(), g.data().data(), gb->data().data(), k, m, p, true, false);
  });
}

Var transpose(Var a) {
  const Tensor& av = a.value();
  require_rank2(av, "transpose");
  const std::size_t m = av.dim(0), n = av.dim(1);
  Tensor out({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
  return a.tape().record(std::move(out), {a}, [a, m, n](Tape& tp, Var, const Tensor& g) {
    if (Tensor* ga = tp.grad_sink(a))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) (*ga)[i * n + j] += g[j * m + i];
  });
}

Var add(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  out += b.value();
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, Var, const Tensor& g) {
    if (Tensor* ga = tp.grad_sink(a)) *ga += g;
    if (Tensor* gb = tp.grad_sink(b)) *gb += g;
  });
}

Var sub(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, Var, const Tensor& g) {
    if (Tensor* ga = tp.grad_sink(a)) *ga += g;
    if (Tensor* gb = tp.grad_sink(b))
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i];
  });
}

Var mul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, Var, const Tensor& g) {
    if (Tensor* ga = tp.grad_sink(a))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * b.value()[i];
    if (Tensor* gb = tp.grad_sink(b))
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * a.value()[i];
  });
}

Var add_row(Var a, Var row) {
  Tape& t = same_tape(a, row);
  const Tensor& av = a.value();
  const std::size_t p = av.cols(), m = av.rows();
  if (row.value().size() != p)
    throw DimensionError("add_row: row of " + shape_str(row.value().shape()) + " does not match " + shape_str(av.shape()));
  Tensor out = av;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < p; ++j) out[i * p + j] += row.value()[j];
  return t.record(std::move(out), {a, row}, [a, row, m, p](Tape& tp, Var, const Tensor& g) {
    if (Tensor* ga = tp.grad_sink(a)) *ga += g;
    if (Tensor* gr = tp.grad_sink(row))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < p; ++j) (*gr)[j] += g[i * p + j];
  });
}

Var mul_row(Var a, Var row) {
  Tape& t = same_tape(a, row);
  const Tensor& av = a.value();
  const std::size_t p = av.cols(), m = av.rows();
  if (row.value().size() != p)
    throw DimensionError("mul_row: row of " + shape_str(row.value().shape()) + " does not match " + shape_str(av.shape()));
  Tensor out = av;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < p; ++j) out[i * p + j] *= row.value()[j];
  return t.record(std::move(out), {a, row}, [a, row, m, p](Tape& tp, Var, const Tensor& g) {
    if (Tensor* ga = tp.grad_sink(a))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < p; ++j) (*ga)[i * p + j] += g[i * p + j] * row.value()[j];
    if (Tensor* gr = tp.grad_sink(row))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < p; ++j) (*gr)[j] += g[i * p + j] * a.value()[i * p + j];
  });
}

Var scale(Var a, double s) {
  Tensor out = a.value();
  out *= s;
  return a.tape().record(std::move(out), {a}, [a, s](Tape& tp, Var, const Tensor& g) {
    if (Tensor* ga = tp.grad_sink(a))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += s * g[i];
  });
}

Var add_scalar(Var a, double s) {
  Tensor out = a.value();
  for (auto& v : out.data()) v += s;
  return a.tape().record(std::move(out), {a}, [a](Tape& tp, Var, const Tensor& g) {
    if (Tensor* ga = tp.grad_sink(a)) *ga += g;
  });
}

Var gelu(Var a) {
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double x = av[i];
    out[i] = 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  }
  return a.tape().record(std::move(out), {a}, [a](Tape& tp, Var, const Tensor& g) {
    Tensor* ga = tp.grad_sink(a);
    if (!ga) return;
    const Tensor& av = a.value();
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    for (std::size_t i = 0; i < av.size(); ++i) {
      const double x = av[i];
      const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * x * x);
      (*ga)[i] += g[i] * (cdf + x * pdf);
    }
  });
}

Var layer_norm(Var a, double eps) {
  const Tensor& av = a.value();
  const std::size_t n = av.cols(), m = av.rows();
  Tensor out(av.shape());
  auto inv_std = std::make_shared<std::vector<double>>(m);
  for (std::size_t r = 0; r < m; ++r) {
    const double* x = av.data().data() + r * n;
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += x[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (x[j] - mean) * (x[j] - mean);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = (x[j] - mean) * is;
  }
  return a.tape().record(std::move(out), {a}, [a, inv_std, m, n](Tape& tp, Var self, const Tensor& g) {
    Tensor* ga = tp.grad_sink(a);
    if (!ga) return;
    const Tensor& yv = self.value();
    for (std::size_t r = 0; r < m; ++r) {
      const double* gy = g.data().data() + r * n;
      const double* yr = yv.data().data() + r * n;
      double mean_g = 0.0, mean_gy = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        mean_g += gy[j];
        mean_gy += gy[j] * yr[j];
      }
      mean_g /= static_cast<double>(n);
      mean_gy /= static_cast<double>(n);
      for (std::size_t j = 0; j < n; ++j) (*ga)[r * n + j] += (*inv_std)[r] * (gy[j] - mean_g - yr[j] * mean_gy);
    }
  });
}

Var softmax(Var a) {
  const Tensor& av = a.value();
  if (av.rank() == 0 || av.cols() == 0) throw DimensionError("softmax needs a non-empty last axis");
  const std::size_t n = av.cols(), m = av.rows();
  Tensor out(av.shape());
  for (std::size_t r = 0; r < m; ++r) {
    const double* x = av.data().data() + r * n;
    double* y = out.data().data() + r * n;
    const double mx = *std::max_element(x, x + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      y[j] = std::exp(x[j] - mx);
      z += y[j];
    }
    for (std::size_t j = 0; j < n; ++j) y[j] /= z;
  }
  return a.tape().record(std::move(out), {a}, [a, m, n](Tape& tp, Var self, const Tensor& g) {
    Tensor* ga = tp.grad_sink(a);
    if (!ga) return;
    const Tensor& yv = self.value();
    for (std::size_t r = 0; r < m; ++r) {
      const double* gy = g.data().data() + r * n;
      const double* yr = yv.data().data() + r * n;
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += gy[j] * yr[j];
      for (std::size_t j = 0; j < n; ++j) (*ga)[r * n + j] += yr[j] * (gy[j] - s);
    }
  });
}

Var log(Var a) {
  Tensor out = a.value();
  for (auto& v : out.data()) v = std::log(v);
  return a.tape().record(std::move(out), {a}, [a](Tape& tp, Var, const Tensor& g) {
    if (Tensor* ga = tp.grad_sink(a))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] / a.value()[i];
  });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return a.tape().record(Tensor::scalar(s), {a}, [a](Tape& tp, Var, const Tensor& g) {
    if (Tensor* ga = tp.grad_sink(a))
      for (auto& v : ga->data()) v += g[0];
  });
}

Var cross_entropy(Var logits, std::size_t target) {
  const Tensor& lv = logits.value();
  const std::size_t n = lv.size();
  if (target >= n)
    throw IndexError("cross_entropy target " + std::to_string(target) + " out of range for " + std::to_string(n) +
                     " classes");
  const double mx = *std::max_element(lv.data().begin(), lv.data().end());
  double z = 0.0;
  for (double v : lv.data()) z += std::exp(v - mx);
  const double lse = mx + std::log(z);
  return logits.tape().record(Tensor::scalar(lse - lv[target]), {logits},
                              [logits, target, lse, n](Tape& tp, Var, const Tensor& g) {
                                Tensor* gl = tp.grad_sink(logits);
                                if (!gl) return;
                                const Tensor& lv = logits.value();
                                for (std::size_t i = 0; i < n; ++i) {
                                  const double p = std::exp(lv[i] - lse);
                                  (*gl)[i] += g[0] * (p - (i == target ? 1.0 : 0.0));
                                }
                              });
}

Var clamp(Var a, double lo, double hi) {
  Tensor out = a.value();
  for (auto& v : out.data()) v = std::clamp(v, lo, hi);
  return a.tape().record(std::move(out), {a}, [a, lo, hi](Tape& tp, Var, const Tensor& g) {
    Tensor* ga = tp.grad_sink(a);
    if (!ga) return;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double x = a.value()[i];
      if (x > lo && x < hi) (*ga)[i] += g[i];
    }
  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t end) {
  const Tensor& av = a.value();
  require_rank2(av, "slice_rows");
  if (begin >= end || end > av.dim(0))
    throw IndexError("slice_rows [" + std::to_string(begin) + "," + std::to_string(end) + ") out of range for " +
                     shape_str(av.shape()));
  const std::size_t n = av.dim(1);
  std::vector<double> d(av.data().begin() + begin * n, av.data().begin() + end * n);
  return a.tape().record(Tensor({end - begin, n}, std::move(d)), {a}, [a, begin, n](Tape& tp, Var, const Tensor& g) {
    if (Tensor* ga = tp.grad_sink(a))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[begin * n + i] += g[i];
  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  const Tensor& av = a.value();
  require_rank2(av, "slice_cols");
  if (begin >= end || end > av.dim(1))
    throw IndexError("slice_cols [" + std::to_string(begin) + "," + std::to_string(end) + ") out of range for " +
                     shape_str(av.shape()));
  const std::size_t m = av.dim(0), n = av.dim(1), w = end - begin;
  Tensor out({m, w});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = av[i * n + begin + j];
  return a.tape().record(std::move(out), {a}, [a, begin, m, n, w](Tape& tp, Var, const Tensor& g) {
    if (Tensor* ga = tp.grad_sink(a))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < w; ++j) (*ga)[i * n + begin + j] += g[i * w + j];
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_rows of nothing");
  Tape& t = parts[0].tape();
  const std::size_t n = parts[0].value().cols();
  std::vector<double> d;
  std::vector<std::size_t> offsets;
  for (const Var& p : parts) {
    require_rank2(p.value(), "concat_rows");
    if (p.value().dim(1) != n) throw DimensionError("concat_rows column mismatch at " + shape_str(p.value().shape()));
    offsets.push_back(d.size());
    d.insert(d.end(), p.value().data().begin(), p.value().data().end());
  }
  const std::size_t m = d.size() / n;
  std::vector<Var> inputs(parts.begin(), parts.end());
  return t.record(Tensor({m, n}, std::move(d)), parts, [inputs, offsets](Tape& tp, Var, const Tensor& g) {
    for (std::size_t k = 0; k < inputs.size(); ++k)
      if (Tensor* gk = tp.grad_sink(inputs[k]))
        for (std::size_t i = 0; i < gk->size(); ++i) (*gk)[i] += g[offsets[k] + i];
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols of nothing");
  Tape& t = parts[0].tape();
  const std::size_t m = parts[0].value().rows();
  std::vector<std::size_t> offsets, widths;
  std::size_t total = 0;
  for (const Var& p : parts) {
    require_rank2(p.value(), "concat_cols");
    if (p.value().dim(0) != m) throw DimensionError("concat_cols row mismatch at " + shape_str(p.value().shape()));
    offsets.push_back(total);
    widths.push_back(p.value().dim(1));
    total += p.value().dim(1);
  }
  Tensor out({m, total});
  for (std::size_t k = 0; k < parts.size(); ++k)
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < widths[k]; ++j) out[i * total + offsets[k] + j] = parts[k].value()[i * widths[k] + j];
  std::vector<Var> inputs(parts.begin(), parts.end());
  return t.record(std::move(out), parts, [inputs, offsets, widths, m, total](Tape& tp, Var, const Tensor& g) {
    for (std::size_t k = 0; k < inputs.size(); ++k)
      if (Tensor* gk = tp.grad_sink(inputs[k]))
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < widths[k]; ++j) (*gk)[i * widths[k] + j] += g[i * total + offsets[k] + j];
  });
}

Var sum_cols(Var a, std::span<const std::size_t> cols) {
  const Tensor& av = a.value();
  require_rank2(av, "sum_cols");
  const std::size_t m = av.dim(0), n = av.dim(1);
  for (auto c : cols)
    if (c >= n) throw IndexError("sum_cols column " + std::to_string(c) + " out of range for " + shape_str(av.shape()));
  double s = 0.0;
  for (std::size_t i = 0; i < m; ++i)
    for (auto c : cols) s += av[i * n + c];
  std::vector<std::size_t> cv(cols.begin(), cols.end());
  return a.tape().record(Tensor::scalar(s), {a}, [a, cv, m, n](Tape& tp, Var, const Tensor& g) {
    if (Tensor* ga = tp.grad_sink(a))
      for (std::size_t i = 0; i < m; ++i)
        for (auto c : cv) (*ga)[i * n + c] += g[0];
  });
}

Var gather(Var a, std::span<const std::size_t> index, Shape shape) {
  const Tensor& av = a.value();
  if (shape_numel(shape) != index.size())
    throw DimensionError("gather: " + std::to_string(index.size()) + " indices cannot fill " + shape_str(shape));
  Tensor out(std::move(shape));
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= av.size()) throw IndexError("gather index " + std::to_string(index[i]) + " out of range");
    out[i] = av[index[i]];
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  return a.tape().record(std::move(out), {a}, [a, idx](Tape& tp, Var, const Tensor& g) {
    if (Tensor* ga = tp.grad_sink(a))
      for (std::size_t i = 0; i < idx.size(); ++i) (*ga)[idx[i]] += g[i];
  });
}

Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return a.tape().record(std::move(out), {a}, [a](Tape& tp, Var, const Tensor& g) {
    if (Tensor* ga = tp.grad_sink(a))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
  });
}

}  // namespace vtlab::ad
