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

#include "sdet/sparse/kernel_map.hpp"

#include <algorithm>
#include <string>

#include "sdet/common/error.hpp"

namespace sdet::sparse {
namespace {

KernelMap::Csr make_csr(std::size_t rows,
                        const std::vector<std::vector<std::pair<std::int32_t, std::int32_t>>>& pairs,
                        bool by_output) {
  KernelMap::Csr csr;
  csr.ptr.assign(rows + 1, 0);
  for (const auto& list : pairs) {
    for (const auto& [a, b] : list) ++csr.ptr[(by_output ? b : a) + 1];
  }
  for (std::size_t r = 0; r < rows; ++r) csr.ptr[r + 1] += csr.ptr[r];
  csr.offset.resize(csr.ptr.back());
  csr.other.resize(csr.ptr.back());
  std::vector<std::int32_t> fill(csr.ptr.begin(), csr.ptr.end() - 1);
  // Offsets are visited in ascending order, so every row's entries end up
  // sorted by offset.
  for (std::size_t o = 0; o < pairs.size(); ++o) {
    for (const auto& [a, b] : pairs[o]) {
      const std::int32_t row = by_output ? b : a;
      const std::int32_t slot = fill[row]++;
      csr.offset[slot] = static_cast<std::int32_t>(o);
      csr.other[slot] = by_output ? a : b;
    }
  }
  return csr;
}

void check_kernel_size(int kernel_size) {
  if (kernel_size != 1 && kernel_size != 2 && kernel_size != 3 && kernel_size != 5) {
    throw ConfigError("unsupported kernel size " + std::to_string(kernel_size));
  }
}

}  // namespace

std::vector<Offset3> kernel_offsets(int kernel_size) {
  check_kernel_size(kernel_size);
  const int lo = (kernel_size % 2 == 1) ? -(kernel_size - 1) / 2 : 0;
  const int hi = lo + kernel_size - 1;
  std::vector<Offset3> out;
  out.reserve(static_cast<std::size_t>(kernel_size) * kernel_size * kernel_size);
  for (int x = lo; x <= hi; ++x) {
    for (int y = lo; y <= hi; ++y) {
      for (int z = lo; z <= hi; ++z) out.push_back({x, y, z});
    }
  }
  return out;
}

KernelMap::KernelMap(int kernel_size, std::size_t n_in, std::size_t n_out,
                     std::vector<std::vector<std::pair<std::int32_t, std::int32_t>>> pairs)
    : kernel_size_(kernel_size), n_in_(n_in), n_out_(n_out), pairs_(std::move(pairs)) {
  for (const auto& list : pairs_) {
    for (const auto& [a, b] : list) {
      if (a < 0 || static_cast<std::size_t>(a) >= n_in_ || b < 0 || static_cast<std::size_t>(b) >= n_out_) {
        throw InputError("kernel map pair out of range");
      }
    }
    num_pairs_ += list.size();
  }
  by_out_ = make_csr(n_out_, pairs_, true);
  by_in_ = make_csr(n_in_, pairs_, false);
}

KernelMap build_kernel_map(const CoordSet& in, std::span<const Coord4> out_coords, int kernel_size,
                           int stride_ratio) {
  if (stride_ratio < 1) throw ConfigError("stride_ratio must be >= 1");
  const auto offsets = kernel_offsets(kernel_size);
  const int step = in.stride();
  const std::size_t vol = offsets.size();
  const std::size_t n_out = out_coords.size();
  const auto& index = in.index();

  // Dense (n_out x volume) table of matches, filled row-parallel; the pair
  // lists are then read off in a fixed order.
  std::vector<std::int32_t> match(n_out * vol, -1);
#pragma omp parallel for schedule(static)
  for (std::int64_t b = 0; b < static_cast<std::int64_t>(n_out); ++b) {
    const Coord4& oc = out_coords[b];
    for (std::size_t o = 0; o < vol; ++o) {
      const Coord4 q{oc.batch, oc.i + offsets[o][0] * step, oc.j + offsets[o][1] * step,
                     oc.k + offsets[o][2] * step};
      match[b * vol + o] = index.find(q);
    }
  }
  std::vector<std::vector<std::pair<std::int32_t, std::int32_t>>> pairs(vol);
  for (std::size_t b = 0; b < n_out; ++b) {
    for (std::size_t o = 0; o < vol; ++o) {
      const std::int32_t a = match[b * vol + o];
      if (a >= 0) pairs[o].emplace_back(a, static_cast<std::int32_t>(b));
    }
  }
  return KernelMap(kernel_size, in.size(), n_out, std::move(pairs));
}

CoordSetPtr strided_coords(const CoordSet& in, int s) {
  if (s < 1) throw ConfigError("stride must be >= 1");
  const int out_stride = in.stride() * s;
  std::vector<Coord4> out;
  out.reserve(in.size());
  for (const auto& c : in.coords()) {
    out.push_back({c.batch, floor_div(c.i, out_stride) * out_stride, floor_div(c.j, out_stride) * out_stride,
                   floor_div(c.k, out_stride) * out_stride});
  }
  return CoordSet::canonical(std::move(out), out_stride, in.voxel_size());
}

CoordSetPtr generative_coords(const CoordSet& in, int kernel_size, int s) {
  if (s < 1 || in.stride() % s != 0) {
    throw ConfigError("stride " + std::to_string(in.stride()) + " not divisible by upsample factor " +
                      std::to_string(s));
  }
  const int fine = in.stride() / s;
  const auto offsets = kernel_offsets(kernel_size);
  std::vector<Coord4> out;
  out.reserve(in.size() * offsets.size());
  for (const auto& c : in.coords()) {
    for (const auto& o : offsets) {
      out.push_back({c.batch, c.i + o[0] * fine, c.j + o[1] * fine, c.k + o[2] * fine});
    }
  }
  return CoordSet::canonical(std::move(out), fine, in.voxel_size());
}

CoordUnion union_coords(const CoordSet& a, const CoordSet& b) {
  if (a.stride() != b.stride()) throw ConfigError("union of coordinate sets with different strides");
  std::vector<Coord4> all(a.coords());
  all.insert(all.end(), b.coords().begin(), b.coords().end());
  CoordUnion u;
  u.geom = CoordSet::canonical(std::move(all), a.stride(), a.voxel_size());
  const auto& idx = u.geom->index();
  u.rows_a.reserve(a.size());
  u.rows_b.reserve(b.size());
  for (const auto& c : a.coords()) u.rows_a.push_back(idx.find(c));
  for (const auto& c : b.coords()) u.rows_b.push_back(idx.find(c));
  return u;
}

}  // namespace sdet::sparse
