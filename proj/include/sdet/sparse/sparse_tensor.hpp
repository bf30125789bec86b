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

#include <array>
#include <compare>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include "sdet/common/matrix.hpp"

namespace sdet::sparse {

// Voxel coordinate in stride-1 grid units. A tensor at stride s only holds
// coordinates divisible by s; the voxel then covers [i, i + s) on each axis.
struct Coord4 {
  std::int32_t batch = 0;
  std::int32_t i = 0;
  std::int32_t j = 0;
  std::int32_t k = 0;

  friend auto operator<=>(const Coord4&, const Coord4&) = default;
};

// Floor division that rounds toward negative infinity.
inline std::int32_t floor_div(std::int32_t a, std::int32_t b) {
  const std::int32_t q = a / b;
  return (a % b != 0 && ((a < 0) != (b < 0))) ? q - 1 : q;
}

// Open-addressing coordinate -> row lookup. Coordinates are packed to 64 bits
// (10 bits batch, 18 bits per axis), so |i|, |j|, |k| < 2^17 and batch < 1024.
class CoordIndex {
 public:
  CoordIndex() = default;
  explicit CoordIndex(std::span<const Coord4> coords);

  // Row of `c`, or -1.
  std::int32_t find(const Coord4& c) const noexcept;
  std::size_t size() const noexcept { return count_; }

  static bool representable(const Coord4& c) noexcept;
  static std::uint64_t pack(const Coord4& c) noexcept;

 private:
  std::vector<std::uint64_t> keys_;
  std::vector<std::int32_t> rows_;
  std::uint64_t mask_ = 0;
  std::size_t count_ = 0;
};

class KernelMap;

// Immutable coordinate set shared by every tensor living on the same
// geometry. The hash index and submanifold kernel maps are built lazily and
// cached; both caches are safe to populate from several threads.
class CoordSet {
 public:
  // Validates uniqueness, stride divisibility and batch >= 0 but keeps the
  // given row order.
  CoordSet(std::vector<Coord4> coords, int stride, double voxel_size);

  // Sorts (batch, i, j, k) lexicographically and drops duplicates.
  static std::shared_ptr<const CoordSet> canonical(std::vector<Coord4> coords, int stride,
                                                   double voxel_size);

  const std::vector<Coord4>& coords() const noexcept { return coords_; }
  std::size_t size() const noexcept { return coords_.size(); }
  int stride() const noexcept { return stride_; }
  double voxel_size() const noexcept { return voxel_size_; }
  bool is_canonical() const noexcept;

  const CoordIndex& index() const;
  std::shared_ptr<const KernelMap> submanifold_map(int kernel_size) const;

  // World-space voxel center: (coord + stride / 2) * voxel_size.
  std::array<double, 3> center(std::size_t row) const noexcept;

 private:
  std::vector<Coord4> coords_;
  int stride_;
  double voxel_size_;

  mutable std::once_flag index_once_;
  mutable CoordIndex index_;
  mutable std::mutex cache_mutex_;
  mutable std::map<int, std::shared_ptr<const KernelMap>> maps_;
};

using CoordSetPtr = std::shared_ptr<const CoordSet>;

// Batched sparse voxel grid. Rows of `feats` are aligned with geom->coords().
template <class T>
struct SparseTensor {
  CoordSetPtr geom;
  Matrix<T> feats;

  SparseTensor() = default;
  SparseTensor(CoordSetPtr g, Matrix<T> f);

  std::size_t size() const noexcept { return geom ? geom->size() : 0; }
  std::size_t channels() const noexcept { return feats.cols(); }
  int stride() const noexcept { return geom->stride(); }
  double voxel_size() const noexcept { return geom->voxel_size(); }
  const std::vector<Coord4>& coords() const noexcept { return geom->coords(); }
};

// Returns the tensor with rows reordered into canonical coordinate order.
template <class T>
SparseTensor<T> canonicalize(const SparseTensor<T>& x);

// Row-permuted copy: row r of the result is row perm[r] of x.
template <class T>
SparseTensor<T> permute_rows(const SparseTensor<T>& x, std::span<const std::size_t> perm);

// Quantizes points: coordinate = floor(xyz / voxel_size), features averaged
// per voxel in point order. Output is canonical at stride 1.
template <class T>
SparseTensor<T> voxelize(std::span<const std::array<double, 3>> xyz, const Matrix<double>& point_feats,
                         double voxel_size, std::int32_t batch = 0);

// Concatenates per-scene tensors, rewriting batch indices to 0..n-1.
template <class T>
SparseTensor<T> stack_batch(std::span<const SparseTensor<T>> items);

}  // namespace sdet::sparse
