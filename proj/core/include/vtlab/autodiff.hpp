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
#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "vtlab/tensor.hpp"

namespace vtlab::ad {

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode tape. Operations append nodes in execution order; backward()
/// replays them in reverse. Nodes that do not depend on a gradient-requiring
/// leaf never receive a gradient buffer.
///
/// A tape is single-threaded. Separate tapes share nothing and may run on
/// separate threads.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, Var self, const Tensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad = false);
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn fn);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const;

  // Seeds d(root)/d(root) = 1 and propagates. Clears gradients from any
  // previous backward call first. root must hold a single element.
  void backward(Var root);

  // Gradient of the last backward root w.r.t. v. Zero if v was unreachable.
  // Throws IndexError for tensors that do not require gradients.
  Tensor grad(Var v) const;
  bool has_grad(Var v) const;

  // Gradient accumulator for v during backward, or nullptr when v does not
  // require a gradient. Used by backward rules.
  Tensor* grad_sink(Var v);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  void check(Var v) const;

  std::vector<Node> nodes_;
};

// Primitive operations. All operands must live on the same tape.

Var matmul(Var a, Var b);              // [m x k] . [k x p]
Var transpose(Var a);                  // rank-2
Var add(Var a, Var b);                 // same shape
Var sub(Var a, Var b);                 // same shape
Var mul(Var a, Var b);                 // elementwise, same shape
Var add_row(Var a, Var row);           // a [m x p] + row broadcast over rows (row has p elements)
Var mul_row(Var a, Var row);           // a [m x p] * row broadcast over rows
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var gelu(Var a);                       // exact erf form
Var layer_norm(Var a, double eps = 1e-5);  // per last-axis slice, no affine
Var softmax(Var a);                    // along the last axis
Var log(Var a);
Var sum(Var a);                        // -> [1]
Var cross_entropy(Var logits, std::size_t target);  // -> [1]
Var clamp(Var a, double lo, double hi);
Var slice_rows(Var a, std::size_t begin, std::size_t end);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
// Sum of the listed columns over every row of a rank-2 tensor -> [1].
Var sum_cols(Var a, std::span<const std::size_t> cols);
// out[i] = a[index[i]], reshaped to shape. Backward scatter-adds.
Var gather(Var a, std::span<const std::size_t> index, Shape shape);
Var reshape(Var a, Shape shape);

}  // namespace vtlab::ad
