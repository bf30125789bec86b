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
#include <string>
#include <vector>

#include "sdet/nn/optim.hpp"

namespace sdet::nn {

// Checkpoint container, all integers little-endian:
//
//   magic    8 bytes  "SDETCKPT"
//   version  u32      (currently 1)
//   count    u32      number of entries
//   entries  count times:
//     name_len u32, name bytes (UTF-8, no terminator)
//     dtype    u8     0 = f32, 1 = f64, 2 = u8 (raw bytes)
//     ndim     u32, dims u64[ndim]
//     payload  prod(dims) elements, little-endian
//
// Model arrays use their parameter path as name. Optimizer state is stored
// as "optim/step" and "optim/lr" (f64 [1]) plus "optim/m/<name>" and
// "optim/v/<name>". "meta/<key>" entries carry u8 text.
struct CheckpointEntry {
  enum class DType : std::uint8_t { F32 = 0, F64 = 1, U8 = 2 };

  std::string name;
  DType dtype = DType::F64;
  std::vector<std::uint64_t> shape;
  std::vector<unsigned char> payload;  // raw little-endian bytes

  std::size_t element_count() const;
  static std::size_t element_size(DType d);
};

constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(const std::string& path, const std::vector<CheckpointEntry>& entries);
std::vector<CheckpointEntry> read_checkpoint(const std::string& path);

template <class T>
CheckpointEntry make_entry(const std::string& name, const Matrix<T>& m);
CheckpointEntry make_text_entry(const std::string& name, const std::string& text);
// Converts the payload to T (f32 and f64 entries both accepted).
template <class T>
Matrix<T> entry_matrix(const CheckpointEntry& e);
std::string entry_text(const CheckpointEntry& e);

// Saves every array of `params` plus, if given, the optimizer state and meta
// text entries.
template <class T>
void save_checkpoint(const std::string& path, const ParamStore<T>& params, const AdamW<T>* optimizer,
                     const std::vector<std::pair<std::string, std::string>>& meta = {});

// Restores arrays by name; every parameter of `params` must be present with a
// matching shape. Returns the meta entries.
template <class T>
std::vector<std::pair<std::string, std::string>> load_checkpoint(const std::string& path, ParamStore<T>& params,
                                                                 AdamW<T>* optimizer);

// Reads only the meta entries.
std::vector<std::pair<std::string, std::string>> read_checkpoint_meta(const std::string& path);

}  // namespace sdet::nn
