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

// OpenMP kernels. Each thread owns whole destination rows (or whole weight
// slabs), walking the CSR views in offset order, so results match the
// serial kernels bit for bit at any thread count.

#include <omp.h>

#include "sdet/sparse/kernels.hpp"

namespace sdet::sparse::parallel {

template <class T>
void conv_forward(const Matrix<T>& src, const Route& r, const Matrix<T>& w, std::span<const T> bias,
                  Matrix<T>& dst) {
  const std::size_t ci = src.cols();
  const std::size_t co = w.cols();
  const auto& csr = r.by_dst();
  const std::int64_t n = static_cast<std::int64_t>(r.n_dst());
  dst = Matrix<T>(r.n_dst(), co);
#pragma omp parallel for schedule(static) if (n > 64)
  for (std::int64_t d = 0; d < n; ++d) {
    T* y = dst.row(d);
    if (!bias.empty()) std::copy(bias.begin(), bias.end(), y);
    for (std::int32_t e = csr.ptr[d]; e < csr.ptr[d + 1]; ++e) {
      const T* x = src.row(csr.other[e]);
      const T* wo = w.row(static_cast<std::size_t>(csr.offset[e]) * ci);
      for (std::size_t c = 0; c < ci; ++c) {
        const T v = x[c];
        const T* wr = wo + c * co;
        for (std::size_t k = 0; k < co; ++k) y[k] += v * wr[k];
      }
    }
  }
}

template <class T>
void conv_backward_src(const Matrix<T>& gdst, const Route& r, const Matrix<T>& w, Matrix<T>& gsrc) {
  const std::size_t co = w.cols();
  const std::size_t ci = gsrc.cols();
  const auto& csr = r.by_src();
  const std::int64_t n = static_cast<std::int64_t>(r.n_src());
  const Matrix<T> wt = transpose_slabs(w, r.map.volume(), ci);
#pragma omp parallel for schedule(static) if (n > 64)
  for (std::int64_t s = 0; s < n; ++s) {
    T* x = gsrc.row(s);
    for (std::int32_t e = csr.ptr[s]; e < csr.ptr[s + 1]; ++e) {
      const T* g = gdst.row(csr.other[e]);
      const T* wo = wt.row(static_cast<std::size_t>(csr.offset[e]) * co);
      for (std::size_t k = 0; k < co; ++k) {
        const T v = g[k];
        const T* wr = wo + k * ci;
        for (std::size_t c = 0; c < ci; ++c) x[c] += v * wr[c];
      }
    }
  }
}

template <class T>
void conv_backward_weight(const Matrix<T>& src, const Matrix<T>& gdst, const Route& r, Matrix<T>& gw) {
  const std::size_t ci = src.cols();
  const std::size_t co = gdst.cols();
  const std::int64_t vol = static_cast<std::int64_t>(r.map.volume());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t o = 0; o < vol; ++o) {
    T* wo = gw.row(static_cast<std::size_t>(o) * ci);
    for (const auto& [a, b] : r.map.pairs(o)) {
      const T* x = src.row(r.transposed ? b : a);
      const T* g = gdst.row(r.transposed ? a : b);
      for (std::size_t c = 0; c < ci; ++c) {
        const T v = x[c];
        T* wr = wo + c * co;
        for (std::size_t k = 0; k < co; ++k) wr[k] += v * g[k];
      }
    }
  }
}

#define SDET_INSTANTIATE(T)                                                                               \
  template void conv_forward(const Matrix<T>&, const Route&, const Matrix<T>&, std::span<const T>,       \
                             Matrix<T>&);                                                                 \
  template void conv_backward_src(const Matrix<T>&, const Route&, const Matrix<T>&, Matrix<T>&);          \
  template void conv_backward_weight(const Matrix<T>&, const Matrix<T>&, const Route&, Matrix<T>&);

SDET_INSTANTIATE(float)
SDET_INSTANTIATE(double)
#undef SDET_INSTANTIATE

}  // namespace sdet::sparse::parallel
