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

#include "sdet/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <type_traits>

#include "sdet/common/error.hpp"

namespace sdet::nn {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'S', 'D', 'E', 'T', 'C', 'K', 'P', 'T'};

template <class U>
void put(std::ofstream& out, U v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(U));
}

template <class U>
U get(std::ifstream& in, const std::string& path) {
  U v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(U));
  if (!in) throw ParseError(path + ": truncated checkpoint at offset " + std::to_string(static_cast<long long>(in.tellg())));
  return v;
}

}  // namespace

std::size_t CheckpointEntry::element_size(DType d) {
  switch (d) {
    case DType::F32: return 4;
    case DType::F64: return 8;
    case DType::U8: return 1;
  }
  return 0;
}

std::size_t CheckpointEntry::element_count() const {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

void write_checkpoint(const std::string& path, const std::vector<CheckpointEntry>& entries) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw UsageError("cannot write checkpoint: " + path);
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    put<std::uint8_t>(out, static_cast<std::uint8_t>(e.dtype));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.shape.size()));
    for (auto d : e.shape) put<std::uint64_t>(out, d);
    out.write(reinterpret_cast<const char*>(e.payload.data()), static_cast<std::streamsize>(e.payload.size()));
  }
  if (!out) throw UsageError("failed writing checkpoint: " + path);
}

std::vector<CheckpointEntry> read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("missing checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) throw ParseError(path + ": not a checkpoint (bad magic)");
  const auto version = get<std::uint32_t>(in, path);
  if (version != kCheckpointVersion) {
    throw ParseError(path + ": unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = get<std::uint32_t>(in, path);
  std::vector<CheckpointEntry> entries(count);
  for (auto& e : entries) {
    const auto len = get<std::uint32_t>(in, path);
    if (len > (1u << 16)) throw ParseError(path + ": entry name too long");
    e.name.resize(len);
    in.read(e.name.data(), len);
    const auto dt = get<std::uint8_t>(in, path);
    if (dt > 2) throw ParseError(path + ": unknown dtype in entry '" + e.name + "'");
    e.dtype = static_cast<CheckpointEntry::DType>(dt);
    const auto ndim = get<std::uint32_t>(in, path);
    if (ndim > 8) throw ParseError(path + ": bad rank in entry '" + e.name + "'");
    e.shape.resize(ndim);
    for (auto& d : e.shape) d = get<std::uint64_t>(in, path);
    e.payload.resize(e.element_count() * CheckpointEntry::element_size(e.dtype));
    in.read(reinterpret_cast<char*>(e.payload.data()), static_cast<std::streamsize>(e.payload.size()));
    if (!in) throw ParseError(path + ": truncated payload in entry '" + e.name + "'");
  }
  return entries;
}

template <class T>
CheckpointEntry make_entry(const std::string& name, const Matrix<T>& m) {
  CheckpointEntry e;
  e.name = name;
  e.dtype = std::is_same_v<T, float> ? CheckpointEntry::DType::F32 : CheckpointEntry::DType::F64;
  e.shape = {m.rows(), m.cols()};
  e.payload.resize(m.size() * sizeof(T));
  std::memcpy(e.payload.data(), m.data(), e.payload.size());
  return e;
}

CheckpointEntry make_text_entry(const std::string& name, const std::string& text) {
  CheckpointEntry e;
  e.name = name;
  e.dtype = CheckpointEntry::DType::U8;
  e.shape = {text.size()};
  e.payload.assign(text.begin(), text.end());
  return e;
}

template <class T>
Matrix<T> entry_matrix(const CheckpointEntry& e) {
  std::size_t rows = 1, cols = 1;
  if (e.shape.size() == 2) {
    rows = e.shape[0];
    cols = e.shape[1];
  } else if (e.shape.size() == 1) {
    cols = e.shape[0];
  } else {
    throw ParseError("entry '" + e.name + "' is not a matrix");
  }
  Matrix<T> m(rows, cols);
  if (e.dtype == CheckpointEntry::DType::F32) {
    const auto* p = reinterpret_cast<const float*>(e.payload.data());
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = static_cast<T>(p[i]);
  } else if (e.dtype == CheckpointEntry::DType::F64) {
    const auto* p = reinterpret_cast<const double*>(e.payload.data());
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = static_cast<T>(p[i]);
  } else {
    throw ParseError("entry '" + e.name + "' holds bytes, not numbers");
  }
  return m;
}

std::string entry_text(const CheckpointEntry& e) {
  return std::string(e.payload.begin(), e.payload.end());
}

template <class T>
void save_checkpoint(const std::string& path, const ParamStore<T>& params, const AdamW<T>* optimizer,
                     const std::vector<std::pair<std::string, std::string>>& meta) {
  std::vector<CheckpointEntry> entries;
  for (const auto& [k, v] : meta) entries.push_back(make_text_entry("meta/" + k, v));
  for (const auto& p : params.all()) entries.push_back(make_entry(p.name, p.var.value()));
  if (optimizer) {
    Matrix<double> step(1, 1, static_cast<double>(optimizer->step_count()));
    Matrix<double> lr(1, 1, optimizer->config().lr);
    entries.push_back(make_entry("optim/step", step));
    entries.push_back(make_entry("optim/lr", lr));
    for (const auto& [name, st] : optimizer->state()) {
      entries.push_back(make_entry("optim/m/" + name, st.m));
      entries.push_back(make_entry("optim/v/" + name, st.v));
    }
  }
  write_checkpoint(path, entries);
}

template <class T>
std::vector<std::pair<std::string, std::string>> load_checkpoint(const std::string& path, ParamStore<T>& params,
                                                                 AdamW<T>* optimizer) {
  const auto entries = read_checkpoint(path);
  std::map<std::string, const CheckpointEntry*> by_name;
  for (const auto& e : entries) by_name[e.name] = &e;

  for (auto& p : params.all()) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw ParseError(path + ": missing array '" + p.name + "'");
    Matrix<T> m = entry_matrix<T>(*it->second);
    const auto& cur = p.var.value();
    if (m.size() != cur.size()) throw ParseError(path + ": shape mismatch for '" + p.name + "'");
    std::copy_n(m.data(), m.size(), p.var.mutable_value().data());
  }
  std::vector<std::pair<std::string, std::string>> meta;
  for (const auto& e : entries) {
    if (e.name.rfind("meta/", 0) == 0) meta.emplace_back(e.name.substr(5), entry_text(e));
  }
  if (optimizer) {
    auto st = by_name.find("optim/step");
    if (st != by_name.end()) {
      optimizer->set_step_count(static_cast<std::int64_t>(entry_matrix<double>(*st->second)[0]));
      for (const auto& p : params.all()) {
        auto m = by_name.find("optim/m/" + p.name);
        auto v = by_name.find("optim/v/" + p.name);
        if (m != by_name.end() && v != by_name.end()) {
          auto& s = optimizer->state()[p.name];
          s.m = Matrix<T>(p.var.rows(), p.var.cols());
          std::copy_n(entry_matrix<T>(*m->second).data(), s.m.size(), s.m.data());
          s.v = Matrix<T>(p.var.rows(), p.var.cols());
          std::copy_n(entry_matrix<T>(*v->second).data(), s.v.size(), s.v.data());
        }
      }
    }
  }
  return meta;
}

std::vector<std::pair<std::string, std::string>> read_checkpoint_meta(const std::string& path) {
  std::vector<std::pair<std::string, std::string>> meta;
  for (const auto& e : read_checkpoint(path)) {
    if (e.name.rfind("meta/", 0) == 0) meta.emplace_back(e.name.substr(5), entry_text(e));
  }
  return meta;
}

#define SDET_INSTANTIATE(T)                                                                             \
  template CheckpointEntry make_entry(const std::string&, const Matrix<T>&);                            \
  template Matrix<T> entry_matrix(const CheckpointEntry&);                                              \
  template void save_checkpoint(const std::string&, const ParamStore<T>&, const AdamW<T>*,              \
                                const std::vector<std::pair<std::string, std::string>>&);               \
  template std::vector<std::pair<std::string, std::string>> load_checkpoint(const std::string&,         \
                                                                            ParamStore<T>&, AdamW<T>*);

SDET_INSTANTIATE(float)
SDET_INSTANTIATE(double)
#undef SDET_INSTANTIATE

}  // namespace sdet::nn
