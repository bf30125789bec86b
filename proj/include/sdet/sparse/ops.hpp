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

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sdet/sparse/kernel_map.hpp"
#include "sdet/sparse/sparse_tensor.hpp"

namespace sdet::sparse {

struct ConvMode {
  enum Kind { Submanifold, Strided } kind = Submanifold;
  int stride = 1;

  static ConvMode submanifold() { return {Submanifold, 1}; }
  static ConvMode strided(int s) { return {Strided, s}; }
};

// Output geometry and kernel map of a convolution over `in`.
struct ConvPlan {
  CoordSetPtr out;
  std::shared_ptr<const KernelMap> map;
};
ConvPlan plan_conv(const CoordSetPtr& in, int kernel_size, ConvMode mode);

// Transposed plan: `out` is the generated finer geometry, `map` is built with
// the finer set on the input side, so it is used transposed.
ConvPlan plan_generative_transposed(const CoordSetPtr& in, int kernel_size, int upsample);

// Validates a (K^3 * Cin) x Cout weight matrix. Throws ConfigError.
// Transposed map from `coarse` onto the existing `fine` geometry; the output
// geometry is `fine`.
ConvPlan plan_transposed_onto(const CoordSetPtr& coarse, const CoordSetPtr& fine, int kernel_size);

void check_weights(std::size_t rows, std::size_t cols, int kernel_size, std::size_t c_in,
                   std::size_t c_out);

template <class T>
SparseTensor<T> sparse_conv(const SparseTensor<T>& x, const Matrix<T>& weights, std::span<const T> bias,
                            int kernel_size, ConvMode mode);

// `weights` maps the coarse channels to the fine ones: (K^3 * Cin) x Cout.
template <class T>
SparseTensor<T> generative_transposed_conv(const SparseTensor<T>& x, const Matrix<T>& weights,
                                           std::span<const T> bias, int kernel_size, int upsample);

// Rows with keep_scores > threshold, in their original order.
std::vector<std::int32_t> prune_rows(std::span<const double> keep_scores, double threshold);

template <class T>
SparseTensor<T> gather_rows(const SparseTensor<T>& x, std::span<const std::int32_t> rows);

template <class T>
SparseTensor<T> prune(const SparseTensor<T>& x, std::span<const double> keep_scores, double threshold);

}  // namespace sdet::sparse
