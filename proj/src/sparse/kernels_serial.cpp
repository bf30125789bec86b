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

// Reference gather-scatter kernels: one pass per kernel offset over its pair
// list. Kept for testing the parallel variants and for benchmarking.

#include <atomic>

#include "sdet/sparse/kernels.hpp"

namespace sdet::sparse {

namespace {
std::atomic<Backend> g_backend{Backend::Parallel};
}

void set_backend(Backend b) noexcept { g_backend.store(b); }
Backend backend() noexcept { return g_backend.load(); }

template <class T>
Matrix<T> transpose_slabs(const Matrix<T>& w, std::size_t volume, std::size_t ci) {
  const std::size_t co = w.cols();
  Matrix<T> t(volume * co, ci);
  for (std::size_t o = 0; o < volume; ++o)
    for (std::size_t c = 0; c < ci; ++c)
      for (std::size_t k = 0; k < co; ++k) t(o * co + k, c) = w(o * ci + c, k);
  return t;
}

template Matrix<float> transpose_slabs(const Matrix<float>&, std::size_t, std::size_t);
template Matrix<double> transpose_slabs(const Matrix<double>&, std::size_t, std::size_t);

namespace serial {

template <class T>
void conv_forward(const Matrix<T>& src, const Route& r, const Matrix<T>& w, std::span<const T> bias,
                  Matrix<T>& dst) {
  const std::size_t ci = src.cols();
  const std::size_t co = w.cols();
  dst = Matrix<T>(r.n_dst(), co);
  if (!bias.empty()) {
    for (std::size_t d = 0; d < dst.rows(); ++d) std::copy(bias.begin(), bias.end(), dst.row(d));
  }
  for (std::size_t o = 0; o < r.map.volume(); ++o) {
    const T* wo = w.row(o * ci);
    for (const auto& [a, b] : r.map.pairs(o)) {
      const std::int32_t s = r.transposed ? b : a;
      const std::int32_t d = r.transposed ? a : b;
      const T* x = src.row(s);
      T* y = dst.row(d);
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
  const Matrix<T> wt = transpose_slabs(w, r.map.volume(), ci);
  for (std::size_t o = 0; o < r.map.volume(); ++o) {
    const T* wo = wt.row(o * co);
    for (const auto& [a, b] : r.map.pairs(o)) {
      const std::int32_t s = r.transposed ? b : a;
      const std::int32_t d = r.transposed ? a : b;
      const T* g = gdst.row(d);
      T* x = gsrc.row(s);
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
  for (std::size_t o = 0; o < r.map.volume(); ++o) {
    T* wo = gw.row(o * ci);
    for (const auto& [a, b] : r.map.pairs(o)) {
      const std::int32_t s = r.transposed ? b : a;
      const std::int32_t d = r.transposed ? a : b;
      const T* x = src.row(s);
      const T* g = gdst.row(d);
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

}  // namespace serial
}  // namespace sdet::sparse
