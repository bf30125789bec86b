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

#include <memory>
#include <random>
#include <string>
#include <vector>

#include "sdet/detector/config.hpp"
#include "sdet/nn/layers.hpp"

namespace sdet::detector {

struct LevelOutput {
  int level = 0;
  sparse::CoordSetPtr geom;  // one location per row
  nn::Var<float> cls;        // N x num_classes logits
  nn::Var<float> reg;        // N x 6 raw face distances (+ sin, cos when oriented)
  nn::Var<float> ctr;        // N x 1 centerness logits, undefined when disabled

  std::size_t size() const { return geom ? geom->size() : 0; }
};

struct HeadOutput {
  std::vector<LevelOutput> levels;  // ascending level
  // "name:kind" of every layer or op executed, in order.
  std::vector<std::string> trace;

  const LevelOutput* level(int l) const;
};

struct LayerInfo {
  std::string name;
  std::string kind;  // subm_conv, strided_conv, transposed_conv, generative_transposed_conv,
                     // batch_norm, linear, prune
};

class Detector {
 public:
  explicit Detector(const ModelConfig& cfg);
  Detector(const Detector&) = delete;
  Detector& operator=(const Detector&) = delete;

  // `input` holds stride-1 voxels with cfg.in_channels features. When fusion
  // is on, `fused_2d` carries one sampled image feature row per input voxel
  // (zero rows for voxels outside the image); it is a constant.
  HeadOutput forward(const sparse::SparseTensor<float>& input, const Matrix<float>* fused_2d, bool training);

  const ModelConfig& config() const noexcept { return cfg_; }
  nn::ParamStore<float>& params() noexcept { return store_; }
  const nn::ParamStore<float>& params() const noexcept { return store_; }
  std::size_t count_params() const { return store_.count_trainable(); }

  const std::vector<LayerInfo>& layers() const noexcept { return layers_; }
  bool has_layer(const std::string& name) const;
  std::size_t count_layers(const std::string& kind) const;

 private:
  struct ConvBn {
    nn::SparseConvLayer<float> conv;
    nn::BatchNormLayer<float> bn;
  };
  struct ResBlock {
    ConvBn a, b;
  };
  struct UpBlock {
    nn::TransposedConvLayer<float> conv;
    nn::BatchNormLayer<float> bn;
    bool generative = false;
  };

  ConvBn make_conv_bn(const std::string& name, int cin, int cout, int k, sparse::ConvMode mode);
  nn::SparseVar<float> run(const ConvBn& b, const nn::SparseVar<float>& x, bool training, bool act,
                           std::vector<std::string>& trace, const std::string& name) const;

  ModelConfig cfg_;
  nn::ParamStore<float> store_;
  std::mt19937_64 rng_;
  std::vector<LayerInfo> layers_;

  ConvBn stem_;
  nn::Linear<float> adapter_;
  std::vector<ConvBn> down_;                 // index l - 1
  std::vector<std::vector<ResBlock>> blocks_;
  std::vector<std::unique_ptr<UpBlock>> up_;  // index l, null when unused
  std::vector<std::unique_ptr<ConvBn>> out_;  // index l, null when no head
  nn::Linear<float> cls_head_, reg_head_, ctr_head_;
};

}  // namespace sdet::detector
