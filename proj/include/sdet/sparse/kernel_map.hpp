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
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "sdet/sparse/sparse_tensor.hpp"

namespace sdet::sparse {

using Offset3 = std::array<int, 3>;

// Kernel offsets in lexicographic order. Odd sizes are centered
// (-(K-1)/2 .. (K-1)/2); even sizes start at 0 (0 .. K-1).
std::vector<Offset3> kernel_offsets(int kernel_size);

// Gather-scatter map between an input and an output coordinate set.
//
// Pair (a, b) is listed under offset o iff
//     in[a] == out[b] + o * in_stride   (same batch),
// i.e. in stride-normalized units in = out * stride_ratio + o.
//
// Besides the per-offset pair lists, two CSR views are kept: grouped by
// output row and grouped by input row, each ordered by offset. Kernels that
// own one row per thread use them, which keeps reductions in a fixed order.
class KernelMap {
 public:
  KernelMap(int kernel_size, std::size_t n_in, std::size_t n_out,
            std::vector<std::vector<std::pair<std::int32_t, std::int32_t>>> pairs);

  int kernel_size() const noexcept { return kernel_size_; }
  std::size_t volume() const noexcept { return pairs_.size(); }
  std::size_t n_in() const noexcept { return n_in_; }
  std::size_t n_out() const noexcept { return n_out_; }
  std::size_t num_pairs() const noexcept { return num_pairs_; }

  // (input_row, output_row) pairs for offset index `o`, sorted by output row.
  const std::vector<std::pair<std::int32_t, std::int32_t>>& pairs(std::size_t o) const {
    return pairs_[o];
  }

  struct Csr {
    std::vector<std::int32_t> ptr;     // rows + 1
    std::vector<std::int32_t> offset;  // kernel offset index
    std::vector<std::int32_t> other;   // row on the opposite side
  };
  const Csr& by_out() const noexcept { return by_out_; }
  const Csr& by_in() const noexcept { return by_in_; }

 private:
  int kernel_size_;
  std::size_t n_in_;
  std::size_t n_out_;
  std::size_t num_pairs_ = 0;
  std::vector<std::vector<std::pair<std::int32_t, std::int32_t>>> pairs_;
  Csr by_out_;
  Csr by_in_;
};

KernelMap build_kernel_map(const CoordSet& in, std::span<const Coord4> out_coords, int kernel_size,
                           int stride_ratio);

// Output coordinates of a strided convolution: unique floor-division of the
// input coordinates by in_stride * s, canonical.
CoordSetPtr strided_coords(const CoordSet& in, int s);

// Coordinates produced by a generative transposed convolution: every
// c + o * (stride / s) over inputs c and kernel offsets o, canonical.
CoordSetPtr generative_coords(const CoordSet& in, int kernel_size, int s);

// Sorted union of two coordinate sets of equal stride, plus, for each input,
// the row of each of its coordinates inside the union.
struct CoordUnion {
  CoordSetPtr geom;
  std::vector<std::int32_t> rows_a;
  std::vector<std::int32_t> rows_b;
};
CoordUnion union_coords(const CoordSet& a, const CoordSet& b);

}  // namespace sdet::sparse
