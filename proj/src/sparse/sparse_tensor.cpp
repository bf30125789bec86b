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

#include "sdet/sparse/sparse_tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <string>

#include "sdet/common/error.hpp"
#include "sdet/sparse/kernel_map.hpp"

namespace sdet::sparse {
namespace {

constexpr std::int32_t kAxisHalf = 1 << 17;
constexpr std::uint64_t kEmpty = ~std::uint64_t{0};

std::uint64_t mix(std::uint64_t x) noexcept {
  x ^= x >> 33;
  x *= 0xff51afd7ed558ccdULL;
  x ^= x >> 33;
  x *= 0xc4ceb9fe1a85ec53ULL;
  x ^= x >> 33;
  return x;
}

}  // namespace

bool CoordIndex::representable(const Coord4& c) noexcept {
  auto ok = [](std::int32_t v) { return v > -kAxisHalf && v < kAxisHalf; };
  return c.batch >= 0 && c.batch < 1024 && ok(c.i) && ok(c.j) && ok(c.k);
}

std::uint64_t CoordIndex::pack(const Coord4& c) noexcept {
  const auto u = [](std::int32_t v) { return static_cast<std::uint64_t>(v + kAxisHalf); };
  return (static_cast<std::uint64_t>(c.batch) << 54) | (u(c.i) << 36) | (u(c.j) << 18) | u(c.k);
}

CoordIndex::CoordIndex(std::span<const Coord4> coords) {
  const std::size_t cap = std::bit_ceil(std::max<std::size_t>(16, coords.size() * 2));
  keys_.assign(cap, kEmpty);
  rows_.assign(cap, -1);
  mask_ = cap - 1;
  for (std::size_t r = 0; r < coords.size(); ++r) {
    if (!representable(coords[r])) {
      throw InputError("voxel coordinate out of representable range");
    }
    const std::uint64_t key = pack(coords[r]);
    std::uint64_t h = mix(key) & mask_;
    while (keys_[h] != kEmpty) {
      if (keys_[h] == key) throw InputError("duplicate voxel coordinate at row " + std::to_string(r));
      h = (h + 1) & mask_;
    }
    keys_[h] = key;
    rows_[h] = static_cast<std::int32_t>(r);
  }
  count_ = coords.size();
}

std::int32_t CoordIndex::find(const Coord4& c) const noexcept {
  if (keys_.empty() || !representable(c)) return -1;
  const std::uint64_t key = pack(c);
  std::uint64_t h = mix(key) & mask_;
  while (keys_[h] != kEmpty) {
    if (keys_[h] == key) return rows_[h];
    h = (h + 1) & mask_;
  }
  return -1;
}

CoordSet::CoordSet(std::vector<Coord4> coords, int stride, double voxel_size)
    : coords_(std::move(coords)), stride_(stride), voxel_size_(voxel_size) {
  if (stride_ < 1) throw ConfigError("stride must be >= 1");
  if (!(voxel_size_ > 0.0)) throw ConfigError("voxel_size must be > 0");
  for (const auto& c : coords_) {
    if (c.batch < 0) throw InputError("negative batch index");
    if (c.i % stride_ != 0 || c.j % stride_ != 0 || c.k % stride_ != 0) {
      throw InputError("coordinate not divisible by stride " + std::to_string(stride_));
    }
  }
  // Builds the index eagerly so duplicates are rejected at construction.
  (void)index();
}

std::shared_ptr<const CoordSet> CoordSet::canonical(std::vector<Coord4> coords, int stride,
                                                    double voxel_size) {
  std::sort(coords.begin(), coords.end());
  coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
  return std::make_shared<const CoordSet>(std::move(coords), stride, voxel_size);
}

bool CoordSet::is_canonical() const noexcept {
  return std::adjacent_find(coords_.begin(), coords_.end(),
                            [](const Coord4& a, const Coord4& b) { return !(a < b); }) == coords_.end();
}

const CoordIndex& CoordSet::index() const {
  std::call_once(index_once_, [this] { index_ = CoordIndex(coords_); });
  return index_;
}

std::shared_ptr<const KernelMap> CoordSet::submanifold_map(int kernel_size) const {
  std::lock_guard<std::mutex> lock(cache_mutex_);
  auto it = maps_.find(kernel_size);
  if (it != maps_.end()) return it->second;
  auto map = std::make_shared<const KernelMap>(build_kernel_map(*this, coords_, kernel_size, 1));
  maps_.emplace(kernel_size, map);
  return map;
}

std::array<double, 3> CoordSet::center(std::size_t row) const noexcept {
  const auto& c = coords_[row];
  const double half = 0.5 * stride_;
  return {(c.i + half) * voxel_size_, (c.j + half) * voxel_size_, (c.k + half) * voxel_size_};
}

template <class T>
SparseTensor<T>::SparseTensor(CoordSetPtr g, Matrix<T> f) : geom(std::move(g)), feats(std::move(f)) {
  if (!geom) throw InputError("sparse tensor without geometry");
  if (feats.rows() != geom->size()) throw InputError("feature rows do not match coordinate count");
}

template <class T>
SparseTensor<T> permute_rows(const SparseTensor<T>& x, std::span<const std::size_t> perm) {
  if (perm.size() != x.size()) throw InputError("permutation length mismatch");
  std::vector<Coord4> coords(perm.size());
  Matrix<T> feats(perm.size(), x.channels());
  for (std::size_t r = 0; r < perm.size(); ++r) {
    coords[r] = x.coords()[perm[r]];
    std::copy_n(x.feats.row(perm[r]), x.channels(), feats.row(r));
  }
  return {std::make_shared<const CoordSet>(std::move(coords), x.stride(), x.voxel_size()),
          std::move(feats)};
}

template <class T>
SparseTensor<T> canonicalize(const SparseTensor<T>& x) {
  std::vector<std::size_t> perm(x.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  const auto& c = x.coords();
  std::sort(perm.begin(), perm.end(), [&](std::size_t a, std::size_t b) { return c[a] < c[b]; });
  return permute_rows(x, perm);
}

template <class T>
SparseTensor<T> voxelize(std::span<const std::array<double, 3>> xyz, const Matrix<double>& point_feats,
                         double voxel_size, std::int32_t batch) {
  if (!(voxel_size > 0.0)) throw ConfigError("voxel_size must be > 0");
  if (point_feats.rows() != xyz.size()) throw InputError("point feature count does not match points");
  const std::size_t n = xyz.size();
  const std::size_t nc = point_feats.cols();

  std::vector<Coord4> pc(n);
  for (std::size_t p = 0; p < n; ++p) {
    const auto& q = xyz[p];
    if (!std::isfinite(q[0]) || !std::isfinite(q[1]) || !std::isfinite(q[2])) {
      throw InputError("non-finite point coordinate at index " + std::to_string(p));
    }
    pc[p] = {batch, static_cast<std::int32_t>(std::floor(q[0] / voxel_size)),
             static_cast<std::int32_t>(std::floor(q[1] / voxel_size)),
             static_cast<std::int32_t>(std::floor(q[2] / voxel_size))};
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return pc[a] < pc[b]; });

  std::vector<Coord4> coords;
  std::vector<double> sums;
  std::vector<std::size_t> counts;
  for (std::size_t idx = 0; idx < n; ++idx) {
    const std::size_t p = order[idx];
    if (coords.empty() || coords.back() != pc[p]) {
      coords.push_back(pc[p]);
      sums.resize(sums.size() + nc, 0.0);
      counts.push_back(0);
    }
    double* s = sums.data() + (coords.size() - 1) * nc;
    for (std::size_t c = 0; c < nc; ++c) s[c] += point_feats(p, c);
    ++counts.back();
  }
  Matrix<T> feats(coords.size(), nc);
  for (std::size_t r = 0; r < coords.size(); ++r) {
    for (std::size_t c = 0; c < nc; ++c) {
      feats(r, c) = static_cast<T>(sums[r * nc + c] / static_cast<double>(counts[r]));
    }
  }
  return {std::make_shared<const CoordSet>(std::move(coords), 1, voxel_size), std::move(feats)};
}

template <class T>
SparseTensor<T> stack_batch(std::span<const SparseTensor<T>> items) {
  if (items.empty()) throw InputError("empty batch");
  const int stride = items[0].stride();
  const double vs = items[0].voxel_size();
  const std::size_t nc = items[0].channels();
  std::size_t total = 0;
  for (const auto& it : items) {
    if (it.stride() != stride || it.voxel_size() != vs || it.channels() != nc) {
      throw InputError("batch items disagree on stride, voxel size or channels");
    }
    total += it.size();
  }
  std::vector<Coord4> coords;
  coords.reserve(total);
  Matrix<T> feats(total, nc);
  std::size_t r = 0;
  for (std::size_t b = 0; b < items.size(); ++b) {
    for (std::size_t q = 0; q < items[b].size(); ++q, ++r) {
      Coord4 c = items[b].coords()[q];
      c.batch = static_cast<std::int32_t>(b);
      coords.push_back(c);
      std::copy_n(items[b].feats.row(q), nc, feats.row(r));
    }
  }
  return {std::make_shared<const CoordSet>(std::move(coords), stride, vs), std::move(feats)};
}

#define SDET_INSTANTIATE(T)                                                                          \
  template struct SparseTensor<T>;                                                                   \
  template SparseTensor<T> canonicalize(const SparseTensor<T>&);                                    \
  template SparseTensor<T> permute_rows(const SparseTensor<T>&, std::span<const std::size_t>);      \
  template SparseTensor<T> voxelize(std::span<const std::array<double, 3>>, const Matrix<double>&, \
                                    double, std::int32_t);                                           \
  template SparseTensor<T> stack_batch(std::span<const SparseTensor<T>>);

SDET_INSTANTIATE(float)
SDET_INSTANTIATE(double)
#undef SDET_INSTANTIATE

}  // namespace sdet::sparse
