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

#include <span>

#include "sdet/common/matrix.hpp"
#include "sdet/sparse/kernel_map.hpp"

namespace sdet::sparse {

// A kernel map used in one direction. Forward convolution reads the input
// side and writes the output side; a transposed convolution over the same map
// reads the output side and writes the input side.
struct Route {
  const KernelMap& map;
  bool transposed = false;

  std::size_t n_src() const noexcept { return transposed ? map.n_out() : map.n_in(); }
  std::size_t n_dst() const noexcept { return transposed ? map.n_in() : map.n_out(); }
  const KernelMap::Csr& by_dst() const noexcept { return transposed ? map.by_in() : map.by_out(); }
  const KernelMap::Csr& by_src() const noexcept { return transposed ? map.by_out() : map.by_in(); }
};

// Weights are stored as a (K^3 * Cin) x Cout matrix; rows o*Cin .. o*Cin+Cin-1
// hold the Cin x Cout slab of offset o.
//
//   forward:          dst[d]  = bias + sum_o src[s] * W[o]
//   backward_src:     gsrc[s] += sum_o gdst[d] * W[o]^T
//   backward_weight:  gW[o]   += sum_pairs src[s]^T gdst[d]
//
// Contributions to one row are always summed in ascending offset order, so
// the serial and parallel variants produce the same bits.

enum class Backend { Serial, Parallel };

// Per-offset transpose of the weights: (K^3 * Cout) x Cin, slab o holding
// W[o]^T. Lets the input-gradient kernels run as row updates.
template <class T>
Matrix<T> transpose_slabs(const Matrix<T>& w, std::size_t volume, std::size_t ci);

void set_backend(Backend b) noexcept;
Backend backend() noexcept;

namespace serial {
template <class T>
void conv_forward(const Matrix<T>& src, const Route& r, const Matrix<T>& w, std::span<const T> bias,
                  Matrix<T>& dst);
template <class T>
void conv_backward_src(const Matrix<T>& gdst, const Route& r, const Matrix<T>& w, Matrix<T>& gsrc);
template <class T>
void conv_backward_weight(const Matrix<T>& src, const Matrix<T>& gdst, const Route& r, Matrix<T>& gw);
}  // namespace serial

namespace parallel {
template <class T>
void conv_forward(const Matrix<T>& src, const Route& r, const Matrix<T>& w, std::span<const T> bias,
                  Matrix<T>& dst);
template <class T>
void conv_backward_src(const Matrix<T>& gdst, const Route& r, const Matrix<T>& w, Matrix<T>& gsrc);
template <class T>
void conv_backward_weight(const Matrix<T>& src, const Matrix<T>& gdst, const Route& r, Matrix<T>& gw);
}  // namespace parallel

// Dispatch on backend().
template <class T>
void conv_forward(const Matrix<T>& src, const Route& r, const Matrix<T>& w, std::span<const T> bias,
                  Matrix<T>& dst) {
  backend() == Backend::Serial ? serial::conv_forward(src, r, w, bias, dst)
                               : parallel::conv_forward(src, r, w, bias, dst);
}
template <class T>
void conv_backward_src(const Matrix<T>& gdst, const Route& r, const Matrix<T>& w, Matrix<T>& gsrc) {
  backend() == Backend::Serial ? serial::conv_backward_src(gdst, r, w, gsrc)
                               : parallel::conv_backward_src(gdst, r, w, gsrc);
}
template <class T>
void conv_backward_weight(const Matrix<T>& src, const Matrix<T>& gdst, const Route& r, Matrix<T>& gw) {
  backend() == Backend::Serial ? serial::conv_backward_weight(src, gdst, r, gw)
                               : parallel::conv_backward_weight(src, gdst, r, gw);
}

}  // namespace sdet::sparse
