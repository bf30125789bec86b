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


#include "sdet/detector/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sdet/common/error.hpp"

namespace sdet::detector {

using nn::SparseVar;
using nn::Var;

const LevelOutput* HeadOutput::level(int l) const {
  for (const auto& lo : levels)
    if (lo.level == l) return &lo;
  return nullptr;
}

Detector::ConvBn Detector::make_conv_bn(const std::string& name, int cin, int cout, int k, sparse::ConvMode mode) {
  ConvBn b;
  b.conv = nn::SparseConvLayer<float>(store_, name + ".conv", cin, cout, k, mode, false, rng_);
  b.bn = nn::BatchNormLayer<float>(store_, name + ".bn", cout);
  layers_.push_back({name + ".conv", mode.kind == sparse::ConvMode::Submanifold ? "subm_conv" : "strided_conv"});
  layers_.push_back({name + ".bn", "batch_norm"});
  return b;
}

Detector::Detector(const ModelConfig& cfg) : cfg_(cfg), rng_(cfg.init_seed) {
  cfg_.validate();
  const auto heads = cfg_.head_levels();
  const int top = cfg_.num_levels;
  const int low = *heads.begin();

  stem_ = make_conv_bn("backbone.stem", cfg_.in_channels, cfg_.channels(0), 3, sparse::ConvMode::submanifold());
  if (cfg_.use_fusion) {
    // Random init like every other layer; a zero adapter left the image path
    // dormant for whole training runs. Its own stream keeps the remaining
    // weights equal to those of the geometry-only model with the same seed.
    std::seed_seq sq{static_cast<std::uint32_t>(cfg_.init_seed), static_cast<std::uint32_t>(cfg_.init_seed >> 32),
                     0x66757365u};
    std::mt19937_64 fusion_rng(sq);
    adapter_ = nn::Linear<float>(store_, "fusion.adapter", cfg_.fusion_channels, cfg_.channels(0), false, fusion_rng);
    layers_.push_back({"fusion.adapter", "linear"});
  }
  blocks_.resize(top + 1);
  for (int l = 1; l <= top; ++l) {
    const std::string p = "backbone.l" + std::to_string(l);
    down_.push_back(make_conv_bn(p + ".down", cfg_.channels(l - 1), cfg_.channels(l), 2, sparse::ConvMode::strided(2)));
    for (int j = 0; j < cfg_.level_blocks[l - 1]; ++j) {
      const std::string q = p + ".b" + std::to_string(j);
      ResBlock rb;
      rb.a = make_conv_bn(q + ".conv1", cfg_.channels(l), cfg_.channels(l), 3, sparse::ConvMode::submanifold());
      rb.b = make_conv_bn(q + ".conv2", cfg_.channels(l), cfg_.channels(l), 3, sparse::ConvMode::submanifold());
      blocks_[l].push_back(std::move(rb));
    }
  }

  up_.resize(top + 1);
  out_.resize(top + 1);
  for (int l = top; l >= low; --l) {
    if (l < top) {
      auto u = std::make_unique<UpBlock>();
      u->generative = l == 1;  // only the first level creates coordinates
      const std::string name = "neck.up" + std::to_string(l);
      u->conv = nn::TransposedConvLayer<float>(store_, name + ".conv", cfg_.channels(l + 1), cfg_.channels(l), 2, 2,
                                               false, rng_);
      u->bn = nn::BatchNormLayer<float>(store_, name + ".bn", cfg_.channels(l));
      layers_.push_back({name + ".conv", u->generative ? "generative_transposed_conv" : "transposed_conv"});
      layers_.push_back({name + ".bn", "batch_norm"});
      up_[l] = std::move(u);
      if (cfg_.use_pruning && heads.count(l + 1)) layers_.push_back({"neck.prune" + std::to_string(l), "prune"});
    }
    if (heads.count(l)) {
      out_[l] = std::make_unique<ConvBn>(make_conv_bn("neck.out" + std::to_string(l), cfg_.channels(l),
                                                      cfg_.head_channels, 3, sparse::ConvMode::submanifold()));
    }
  }

  const double head_std = cfg_.head_init == HeadInit::Zero ? 0.0 : 0.01;
  cls_head_ = nn::Linear<float>(store_, "head.cls", cfg_.head_channels, cfg_.num_classes, true, rng_, head_std);
  const float prior_bias = static_cast<float>(-std::log((1.0 - cfg_.cls_prior) / cfg_.cls_prior));
  cls_head_.bias.mutable_value().fill(prior_bias);
  reg_head_ = nn::Linear<float>(store_, "head.reg", cfg_.head_channels, cfg_.oriented ? 8 : 6, true, rng_, head_std);
  layers_.push_back({"head.cls", "linear"});
  layers_.push_back({"head.reg", "linear"});
  if (cfg_.use_centerness) {
    ctr_head_ = nn::Linear<float>(store_, "head.ctr", cfg_.head_channels, 1, true, rng_, head_std);
    layers_.push_back({"head.ctr", "linear"});
  }
}

bool Detector::has_layer(const std::string& name) const {
  return std::any_of(layers_.begin(), layers_.end(), [&](const LayerInfo& l) { return l.name == name; });
}

std::size_t Detector::count_layers(const std::string& kind) const {
  return static_cast<std::size_t>(
      std::count_if(layers_.begin(), layers_.end(), [&](const LayerInfo& l) { return l.kind == kind; }));
}

SparseVar<float> Detector::run(const ConvBn& b, const SparseVar<float>& x, bool training, bool act,
                               std::vector<std::string>& trace, const std::string& name) const {
  auto y = b.bn(b.conv(x), training, cfg_.bn_affine_only);
  trace.push_back(name);
  return act ? nn::relu(y) : y;
}

HeadOutput Detector::forward(const sparse::SparseTensor<float>& input, const Matrix<float>* fused_2d, bool training) {
  if (input.channels() != static_cast<std::size_t>(cfg_.in_channels) && input.size() > 0) {
    throw ConfigError("detector expects " + std::to_string(cfg_.in_channels) + " input channels, got " +
                      std::to_string(input.channels()));
  }
  if (input.size() > 0 && input.stride() != 1) throw ConfigError("detector input must be at stride 1");
  HeadOutput out;
  const auto heads = cfg_.head_levels();

  if (input.size() == 0) {
    for (int l : heads) {
      LevelOutput lo;
      lo.level = l;
      lo.geom = std::make_shared<const sparse::CoordSet>(std::vector<sparse::Coord4>{}, cfg_.stride(l),
                                                         cfg_.base_voxel_size);
      lo.cls = Var<float>::constant(Matrix<float>(0, cfg_.num_classes));
      lo.reg = Var<float>::constant(Matrix<float>(0, cfg_.oriented ? 8 : 6));
      if (cfg_.use_centerness) lo.ctr = Var<float>::constant(Matrix<float>(0, 1));
      out.levels.push_back(std::move(lo));
    }
    return out;
  }

  auto& trace = out.trace;
  SparseVar<float> x{input.geom, Var<float>::constant(input.feats)};
  x = run(stem_, x, training, true, trace, "backbone.stem:subm_conv");
  if (cfg_.use_fusion) {
    if (!fused_2d) throw ConfigError("fusion model needs sampled image features");
    if (fused_2d->rows() != input.size() || fused_2d->cols() != static_cast<std::size_t>(cfg_.fusion_channels)) {
      throw ConfigError("fused feature matrix must be " + std::to_string(input.size()) + " x " +
                        std::to_string(cfg_.fusion_channels));
    }
    x = nn::add_features(x, adapter_(Var<float>::constant(*fused_2d)));
    trace.push_back("fusion.adapter:linear");
  }

  const int top = cfg_.num_levels;
  std::vector<SparseVar<float>> feats(top + 1);
  for (int l = 1; l <= top; ++l) {
    const std::string p = "backbone.l" + std::to_string(l);
    x = run(down_[l - 1], x, training, true, trace, p + ".down:strided_conv");
    for (std::size_t j = 0; j < blocks_[l].size(); ++j) {
      const std::string q = p + ".b" + std::to_string(j);
      auto r = run(blocks_[l][j].a, x, training, true, trace, q + ".conv1:subm_conv");
      r = run(blocks_[l][j].b, r, training, false, trace, q + ".conv2:subm_conv");
      x = nn::relu(nn::add(r, x));
    }
    feats[l] = x;
  }

  // Top-down neck. Heads are shared across levels.
  const int low = *heads.begin();
  SparseVar<float> n = feats[top];
  Matrix<float> prev_scores;
  sparse::CoordSetPtr prev_geom;
  for (int l = top; l >= low; --l) {
    if (l < top) {
      const UpBlock& u = *up_[l];
      const std::string name = "neck.up" + std::to_string(l);
      SparseVar<float> up = u.generative ? u.conv(n) : u.conv.onto(n, feats[l].geom);
      trace.push_back(name + (u.generative ? ":generative_transposed_conv" : ":transposed_conv"));
      up = nn::relu(u.bn(up, training, cfg_.bn_affine_only));
      n = nn::add(up, feats[l]);
      if (cfg_.use_pruning && prev_geom) {
        // Each voxel inherits its parent's best class logit; keep at most as
        // many voxels as the backbone has on this level.
        const int ps = prev_geom->stride();
        const auto& index = prev_geom->index();
        std::vector<double> keep(n.size());
        for (std::size_t r = 0; r < n.size(); ++r) {
          const auto& c = n.geom->coords()[r];
          const std::int32_t pr = index.find({c.batch, sparse::floor_div(c.i, ps) * ps, sparse::floor_div(c.j, ps) * ps,
                                              sparse::floor_div(c.k, ps) * ps});
          double best = -std::numeric_limits<double>::infinity();
          if (pr >= 0) {
            for (std::size_t k = 0; k < prev_scores.cols(); ++k) best = std::max(best, double(prev_scores(pr, k)));
          }
          keep[r] = best;
        }
        double threshold = -std::numeric_limits<double>::infinity();
        const std::size_t budget = feats[l].size();
        if (keep.size() > budget) {
          std::vector<double> sorted = keep;
          std::nth_element(sorted.begin(), sorted.begin() + budget, sorted.end(), std::greater<double>());
          threshold = sorted[budget];
        }
        const auto rows = sparse::prune_rows(keep, threshold);
        n = nn::gather_rows(n, rows);
        trace.push_back("neck.prune" + std::to_string(l) + ":prune");
      }
    }
    prev_geom.reset();
    if (!heads.count(l)) continue;
    auto o = run(*out_[l], n, training, true, trace, "neck.out" + std::to_string(l) + ":subm_conv");
    LevelOutput lo;
    lo.level = l;
    lo.geom = o.geom;
    lo.cls = cls_head_(o.feats);
    lo.reg = reg_head_(o.feats);
    if (cfg_.use_centerness) lo.ctr = ctr_head_(o.feats);
    trace.push_back("head@" + std::to_string(l) + ":linear");
    prev_scores = lo.cls.value();
    prev_geom = lo.geom;
    out.levels.push_back(std::move(lo));
  }
  std::reverse(out.levels.begin(), out.levels.end());
  return out;
}

}  // namespace sdet::detector
