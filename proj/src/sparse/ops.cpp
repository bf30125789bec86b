// Copyright (c) 2026 The sdet Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "sdet/sparse/ops.hpp"

#include <string>

#include "sdet/common/error.hpp"
#include "sdet/sparse/kernels.hpp"

namespace sdet::sparse {

ConvPlan plan_conv(const CoordSetPtr& in, int kernel_size, ConvMode mode) {
  if (mode.kind == ConvMode::Submanifold) {
    return {in, in->submanifold_map(kernel_size)};
  }
  auto out = strided_coords(*in, mode.stride);
  auto map = std::make_shared<const KernelMap>(build_kernel_map(*in, out->coords(), kernel_size, mode.stride));
  return {std::move(out), std::move(map)};
}

ConvPlan plan_generative_transposed(const CoordSetPtr& in, int kernel_size, int upsample) {
  auto fine = generative_coords(*in, kernel_size, upsample);
  auto map = std::make_shared<const KernelMap>(build_kernel_map(*fine, in->coords(), kernel_size, upsample));
  return {std::move(fine), std::move(map)};
}

ConvPlan plan_transposed_onto(const CoordSetPtr& coarse, const CoordSetPtr& fine, int kernel_size) {
  if (coarse->stride() % fine->stride() != 0) throw ConfigError("transposed target is not finer than its input");
  const int ratio = coarse->stride() / fine->stride();
  auto map = std::make_shared<const KernelMap>(build_kernel_map(*fine, coarse->coords(), kernel_size, ratio));
  return {fine, std::move(map)};
}

void check_weights(std::size_t rows, std::size_t cols, int kernel_size, std::size_t c_in, std::size_t c_out) {
  const std::size_t vol = static_cast<std::size_t>(kernel_size) * kernel_size * kernel_size;
  if (rows != vol * c_in || (c_out != 0 && cols != c_out)) {
    throw ConfigError("weight shape " + std::to_string(rows) + "x" + std::to_string(cols) +
                      " does not match kernel " + std::to_string(kernel_size) + " with " +
                      std::to_string(c_in) + " input channels");
  }
}

template <class T>
SparseTensor<T> sparse_conv(const SparseTensor<T>& x, const Matrix<T>& weights, std::span<const T> bias,
                            int kernel_size, ConvMode mode) {
  check_weights(weights.rows(), weights.cols(), kernel_size, x.channels(), 0);
  if (!bias.empty() && bias.size() != weights.cols()) throw ConfigError("bias length mismatch");
  auto plan = plan_conv(x.geom, kernel_size, mode);
  Matrix<T> out;
  conv_forward(x.feats, Route{*plan.map, false}, weights, bias, out);
  return {plan.out, std::move(out)};
}

template <class T>
SparseTensor<T> generative_transposed_conv(const SparseTensor<T>& x, const Matrix<T>& weights,
                                           std::span<const T> bias, int kernel_size, int upsample) {
  check_weights(weights.rows(), weights.cols(), kernel_size, x.channels(), 0);
  if (!bias.empty() && bias.size() != weights.cols()) throw ConfigError("bias length mismatch");
  auto plan = plan_generative_transposed(x.geom, kernel_size, upsample);
  Matrix<T> out;
  conv_forward(x.feats, Route{*plan.map, true}, weights, bias, out);
  return {plan.out, std::move(out)};
}

std::vector<std::int32_t> prune_rows(std::span<const double> keep_scores, double threshold) {
  std::vector<std::int32_t> rows;
  for (std::size_t r = 0; r < keep_scores.size(); ++r) {
    if (keep_scores[r] > threshold) rows.push_back(static_cast<std::int32_t>(r));
  }
  return rows;
}

template <class T>
SparseTensor<T> gather_rows(const SparseTensor<T>& x, std::span<const std::int32_t> rows) {
  std::vector<Coord4> coords;
  coords.reserve(rows.size());
  Matrix<T> feats(rows.size(), x.channels());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    coords.push_back(x.coords()[rows[r]]);
    std::copy_n(x.feats.row(rows[r]), x.channels(), feats.row(r));
  }
  return {std::make_shared<const CoordSet>(std::move(coords), x.stride(), x.voxel_size()), std::move(feats)};
}

template <class T>
SparseTensor<T> prune(const SparseTensor<T>& x, std::span<const double> keep_scores, double threshold) {
  if (keep_scores.size() != x.size()) {
    throw InputError("prune: " + std::to_string(keep_scores.size()) + " scores for " +
                     std::to_string(x.size()) + " voxels");
  }
  const auto rows = prune_rows(keep_scores, threshold);
  return gather_rows(x, rows);
}

#define SDET_INSTANTIATE(T)                                                                             \
  template SparseTensor<T> sparse_conv(const SparseTensor<T>&, const Matrix<T>&, std::span<const T>, int, \
                                       ConvMode);                                                         \
  template SparseTensor<T> generative_transposed_conv(const SparseTensor<T>&, const Matrix<T>&,         \
                                                      std::span<const T>, int, int);                      \
  template SparseTensor<T> gather_rows(const SparseTensor<T>&, std::span<const std::int32_t>);          \
  template SparseTensor<T> prune(const SparseTensor<T>&, std::span<const double>, double);

SDET_INSTANTIATE(float)
SDET_INSTANTIATE(double)
#undef SDET_INSTANTIATE

}  // namespace sdet::sparse
