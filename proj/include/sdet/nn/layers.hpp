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
#include <random>
#include <string>
#include <vector>

#include "sdet/nn/ops.hpp"

namespace sdet::nn {

template <class T>
struct Parameter {
  std::string name;
  Var<T> var;
  bool trainable = true;
};

// Owns every named array of a model: trainable weights plus buffers such as
// batch-norm running statistics (trainable = false).
template <class T>
class ParamStore {
 public:
  Var<T> add(const std::string& name, Matrix<T> init, bool trainable = true);

  const std::vector<Parameter<T>>& all() const noexcept { return params_; }
  std::vector<Parameter<T>>& all() noexcept { return params_; }
  const Parameter<T>* find(const std::string& name) const;
  Parameter<T>* find(const std::string& name);

  // Sum of trainable element counts.
  std::size_t count_trainable() const;
  void zero_grad();

 private:
  std::vector<Parameter<T>> params_;
};

// Fills with N(0, std^2) from a seeded engine.
template <class T>
Matrix<T> normal_matrix(std::size_t rows, std::size_t cols, double std, std::mt19937_64& rng);

template <class T>
class Linear {
 public:
  Linear() = default;
  Linear(ParamStore<T>& store, const std::string& name, std::size_t c_in, std::size_t c_out, bool bias,
         std::mt19937_64& rng, double init_std = -1.0);

  Var<T> operator()(const Var<T>& x) const;

  Var<T> weight;
  Var<T> bias;  // undefined when constructed without bias
};

template <class T>
class SparseConvLayer {
 public:
  SparseConvLayer() = default;
  SparseConvLayer(ParamStore<T>& store, const std::string& name, std::size_t c_in, std::size_t c_out,
                  int kernel_size, sparse::ConvMode mode, bool bias, std::mt19937_64& rng);

  SparseVar<T> operator()(const SparseVar<T>& x) const;

  Var<T> weight;
  Var<T> bias;
  int kernel_size = 3;
  sparse::ConvMode mode;
};

// Generative transposed convolution: creates the finer coordinates it writes.
template <class T>
class TransposedConvLayer {
 public:
  TransposedConvLayer() = default;
  TransposedConvLayer(ParamStore<T>& store, const std::string& name, std::size_t c_in, std::size_t c_out,
                      int kernel_size, int upsample, bool bias, std::mt19937_64& rng);

  SparseVar<T> operator()(const SparseVar<T>& x) const;
  // Non-generative use: writes onto an existing finer geometry.
  SparseVar<T> onto(const SparseVar<T>& x, const sparse::CoordSetPtr& target) const;

  Var<T> weight;
  Var<T> bias;
  int kernel_size = 2;
  int upsample = 2;
};

template <class T>
class BatchNormLayer {
 public:
  BatchNormLayer() = default;
  BatchNormLayer(ParamStore<T>& store, const std::string& name, std::size_t channels);

  SparseVar<T> operator()(const SparseVar<T>& x, bool training, bool affine_only = false) const;

  Var<T> gamma;
  Var<T> beta;
  Var<T> running_mean;
  Var<T> running_var;
};

}  // namespace sdet::nn
