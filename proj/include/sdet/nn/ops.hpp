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

#include "sdet/nn/autograd.hpp"
#include "sdet/sparse/ops.hpp"

namespace sdet::nn {

// Dense ops.
template <class T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <class T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <class T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <class T> Var<T> scale(const Var<T>& a, T s);
template <class T> Var<T> neg(const Var<T>& a);
template <class T> Var<T> relu(const Var<T>& a);
template <class T> Var<T> sum(const Var<T>& a);
template <class T> Var<T> matmul(const Var<T>& a, const Var<T>& b);
// x (N x Cin) * w (Cin x Cout) + b (1 x Cout, optional).
template <class T> Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>* b);

// Sparse ops. Geometry is carried along; gradients flow through features.
template <class T>
SparseVar<T> conv(const SparseVar<T>& x, const Var<T>& w, const Var<T>* b, int kernel_size,
                  sparse::ConvMode mode);
template <class T>
SparseVar<T> transposed_conv(const SparseVar<T>& x, const Var<T>& w, const Var<T>* b, int kernel_size,
                             int upsample);
// Transposed convolution writing onto an existing finer geometry (no new
// coordinates). `target` must sit one factor-of-two level below x.
template <class T>
SparseVar<T> transposed_conv_onto(const SparseVar<T>& x, const sparse::CoordSetPtr& target, const Var<T>& w,
                                  const Var<T>* b, int kernel_size);

struct BatchNormOptions {
  bool training = true;
  bool affine_only = false;  // skip normalization, keep gamma * x + beta
  double momentum = 0.1;
  double eps = 1e-5;
};

// Per-channel normalization over every active voxel in the batch. In training
// mode the running statistics are updated in place.
template <class T>
SparseVar<T> batch_norm(const SparseVar<T>& x, const Var<T>& gamma, const Var<T>& beta,
                        Matrix<T>& running_mean, Matrix<T>& running_var, const BatchNormOptions& opt);

template <class T> SparseVar<T> relu(const SparseVar<T>& x);

// Element-wise sum. Equal geometries add row by row; otherwise the result
// lives on the coordinate union and missing rows count as zero.
template <class T> SparseVar<T> add(const SparseVar<T>& a, const SparseVar<T>& b);

// Adds a dense N x C update to the features; geometry unchanged.
template <class T> SparseVar<T> add_features(const SparseVar<T>& x, const Var<T>& delta);

template <class T>
SparseVar<T> gather_rows(const SparseVar<T>& x, std::span<const std::int32_t> rows);

// Stacks rows of several matrices with equal column counts.
template <class T> Var<T> concat_rows(const std::vector<Var<T>>& parts);

}  // namespace sdet::nn
