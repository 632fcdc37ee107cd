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
#include "vtlab/defense.hpp"

#include <Eigen/Dense>
#include <algorithm>

#include "vtlab/errors.hpp"
#include "vtlab/pipeline.hpp"
#include "vtlab/quant.hpp"

namespace vtlab {

namespace {

Eigen::MatrixXd to_eigen(const Tensor& t) {
  Eigen::MatrixXd m(t.rows(), t.cols());
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = t.at(i, j);
  return m;
}

Tensor from_eigen(const Eigen::MatrixXd& m) {
  Tensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) t.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = m(i, j);
  return t;
}

}  // namespace

Tensor DecomposedHead::product() const {
  if (factors.empty()) throw ConfigError("decomposed head has no factors");
  Eigen::MatrixXd p = to_eigen(factors[0]);
  for (std::size_t i = 1; i < factors.size(); ++i) {
    if (factors[i].rows() != static_cast<std::size_t>(p.cols()))
      throw ConfigError("head factors do not chain at factor " + std::to_string(i));
    p = p * to_eigen(factors[i]);
  }
  return from_eigen(p);
}

DecomposedHead decompose_head(const Tensor& head, std::size_t k_factors, std::span<const std::size_t> inner_dims) {
  if (head.rank() != 2) throw ConfigError("head matrix must be rank 2, got " + shape_str(head.shape()));
  if (k_factors < 1) throw ConfigError("need at least one head factor");
  if (!inner_dims.empty() && inner_dims.size() != k_factors - 1)
    throw ConfigError("expected " + std::to_string(k_factors - 1) + " inner dims, got " +
                      std::to_string(inner_dims.size()));
  DecomposedHead out;
  Eigen::MatrixXd m = to_eigen(head);
  const auto c = static_cast<std::size_t>(m.cols());
  for (std::size_t i = 0; i + 1 < k_factors; ++i) {
    const auto r = static_cast<std::size_t>(m.rows());
    const std::size_t inner = inner_dims.empty() ? r : inner_dims[i];
    if (inner < std::min(r, c) || inner > r)
      throw ConfigError("inner dim " + std::to_string(inner) + " at step " + std::to_string(i) + " must lie in [" +
                        std::to_string(std::min(r, c)) + ", " + std::to_string(r) + "]");
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
    const Eigen::MatrixXd q = qr.householderQ();
    const Eigen::MatrixXd rr = qr.matrixQR().triangularView<Eigen::Upper>();
    const auto in = static_cast<Eigen::Index>(inner);
    out.factors.push_back(from_eigen(q.leftCols(in)));
    m = rr.topRows(in);
  }
  out.factors.push_back(from_eigen(m));
  out.reconstruction_error = max_abs_diff(out.product(), head);
  return out;
}

ModelParams with_decomposed_head(const ModelParams& params, const DecomposedHead& head) {
  const std::string w(param_names::kHeadWeight);
  const Tensor& orig = params.at(w);
  if (head.factors.empty() || head.factors.front().rows() != orig.rows() || head.factors.back().cols() != orig.cols())
    throw ConfigError("head factors do not match the head matrix " + shape_str(orig.shape()));
  ModelParams out = params;
  out.erase(w);
  for (std::size_t i = 0; i < head.factors.size(); ++i) out.set(param_names::head_factor(i), head.factors[i]);
  return out;
}

Tensor forward_with_decomposed(const ModelParams& params, const DecomposedHead& head, const Tensor& image) {
  return forward(with_decomposed_head(params, head), image).logits;
}

DefenseReport evaluate_defense(const ModelParams& clean, const TriggerSpec& trigger,
                               const std::vector<Tensor>& attack_batch, const Dataset& eval,
                               const InsertionConfig& insertion, const DefenseConfig& defense) {
  DefenseReport rep;
  const auto dh = decompose_head(clean.at(std::string(param_names::kHeadWeight)), defense.k_factors,
                                 defense.inner_dims);
  const ModelParams factored = with_decomposed_head(clean, dh);
  rep.reconstruction_error = dh.reconstruction_error;
  rep.clean_cda = compute_cda(clean, eval);
  rep.clean_cda_factored = compute_cda(factored, eval);

  const auto plain = run_attack(quantize_model(clean), trigger, attack_batch, eval, insertion);
  const auto guarded = run_attack(quantize_model(factored), trigger, attack_batch, eval, insertion);
  rep.no_defense = plain.backdoored;
  rep.with_defense = guarded.backdoored;
  rep.n_p_no_defense = plain.insertion.n_p;
  rep.n_p_with_defense = guarded.insertion.n_p;
  rep.wt_no_defense = plain.insertion.initial_size;
  rep.wt_with_defense = guarded.insertion.initial_size;
  return rep;
}

}  // namespace vtlab
