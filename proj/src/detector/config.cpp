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


#include "sdet/detector/config.hpp"

#include <algorithm>
#include <sstream>

#include "sdet/common/error.hpp"

namespace sdet::detector {
namespace {

std::string join(const std::vector<int>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

std::vector<int> to_int(const std::vector<long long>& v) { return {v.begin(), v.end()}; }

const char* name_of(AssignerKind a) { return a == AssignerKind::Tr3d ? "tr3d" : "inside_box"; }
const char* name_of(RegressionLoss r) { return r == RegressionLoss::Diou ? "diou" : "iou"; }
const char* name_of(HeadInit h) { return h == HeadInit::Normal ? "normal" : "zero"; }
const char* name_of(geometry::DiouFrame f) { return f == geometry::DiouFrame::AxisAligned ? "axis_aligned" : "gt_yaw"; }

}  // namespace

std::set<int> ModelConfig::head_levels() const {
  std::set<int> s{2, 3};
  if (use_head_level1) s.insert(1);
  if (use_head_level4) s.insert(4);
  return s;
}

int ModelConfig::channels(int level) const {
  const int c = level == 0 ? stem_channels : level_channels.at(level - 1);
  return use_channel_cap ? std::min(c, max_channels) : c;
}

int ModelConfig::class_level(int label) const {
  if (class_levels.empty()) return 2;
  return class_levels.at(label);
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("model config: " + m); };
  if (in_channels < 1) fail("in_channels must be >= 1");
  if (num_classes < 1) fail("num_classes must be >= 1");
  if (num_levels < 3) fail("num_levels must be >= 3 (heads live on levels 2 and 3)");
  if (!(base_voxel_size > 0.0)) fail("base_voxel_size must be > 0");
  if (static_cast<int>(level_channels.size()) != num_levels) fail("level_channels needs one entry per level");
  if (static_cast<int>(level_blocks.size()) != num_levels) fail("level_blocks needs one entry per level");
  for (int c : level_channels)
    if (c < 1) fail("level_channels must be positive");
  for (int b : level_blocks)
    if (b < 0) fail("level_blocks must be >= 0");
  if (stem_channels < 1 || head_channels < 1) fail("stem/head channels must be positive");
  if (use_head_level4 && num_levels < 4) fail("use_head_level4 needs num_levels >= 4");
  if (assigner_k < 1) fail("assigner_k must be >= 1");
  if (!class_levels.empty()) {
    if (static_cast<int>(class_levels.size()) != num_classes) fail("class_levels needs one entry per class");
    const auto hl = head_levels();
    for (int l : class_levels)
      if (!hl.count(l)) fail("class level " + std::to_string(l) + " has no active head");
  }
  if (!(cls_prior > 0.0 && cls_prior < 1.0)) fail("cls_prior must be in (0, 1)");
  if (!(nms_threshold > 0.0 && nms_threshold <= 1.0)) fail("nms_threshold must be in (0, 1]");
  if (use_fusion && fusion_channels < 1) fail("fusion_channels must be positive");
}

ModelConfig ModelConfig::preset(const std::string& name) {
  ModelConfig c;
  if (name == "desk") return c;
  if (name == "full") {
    c.stem_channels = 64;
    c.level_channels = {64, 128, 256, 512};
    c.level_blocks = {3, 4, 6, 3};
    c.head_channels = 128;
    c.base_voxel_size = 0.01;
    c.num_classes = 18;
    return c;
  }
  throw ConfigError("unknown model preset '" + name + "' (expected desk or full)");
}

ModelConfig ModelConfig::from_kv(const KeyValueConfig& kv) {
  ModelConfig c = preset(kv.get_string("preset", "desk"));
  c.in_channels = static_cast<int>(kv.get_int("in_channels", c.in_channels));
  c.num_classes = static_cast<int>(kv.get_int("num_classes", c.num_classes));
  c.num_levels = static_cast<int>(kv.get_int("num_levels", c.num_levels));
  c.base_voxel_size = kv.get_double("base_voxel_size", c.base_voxel_size);
  c.stem_channels = static_cast<int>(kv.get_int("stem_channels", c.stem_channels));
  c.level_channels = to_int(kv.get_int_list("level_channels", {c.level_channels.begin(), c.level_channels.end()}));
  c.level_blocks = to_int(kv.get_int_list("level_blocks", {c.level_blocks.begin(), c.level_blocks.end()}));
  c.head_channels = static_cast<int>(kv.get_int("head_channels", c.head_channels));
  c.use_channel_cap = kv.get_bool("use_channel_cap", c.use_channel_cap);
  c.max_channels = static_cast<int>(kv.get_int("max_channels", c.max_channels));
  c.use_head_level1 = kv.get_bool("use_head_level1", c.use_head_level1);
  c.use_head_level4 = kv.get_bool("use_head_level4", c.use_head_level4);
  c.use_pruning = kv.get_bool("use_pruning", c.use_pruning);
  c.use_centerness = kv.get_bool("use_centerness", c.use_centerness);

  const auto a = kv.get_string("assigner", name_of(c.assigner));
  if (a == "tr3d") {
    c.assigner = AssignerKind::Tr3d;
  } else if (a == "inside_box") {
    c.assigner = AssignerKind::InsideBox;
  } else {
    throw ConfigError("assigner must be tr3d or inside_box, got '" + a + "'");
  }
  const auto r = kv.get_string("regression_loss", name_of(c.regression_loss));
  if (r == "diou") {
    c.regression_loss = RegressionLoss::Diou;
  } else if (r == "iou") {
    c.regression_loss = RegressionLoss::Iou;
  } else {
    throw ConfigError("regression_loss must be diou or iou, got '" + r + "'");
  }
  const auto f = kv.get_string("diou_frame", name_of(c.diou_frame));
  if (f == "axis_aligned") {
    c.diou_frame = geometry::DiouFrame::AxisAligned;
  } else if (f == "gt_yaw") {
    c.diou_frame = geometry::DiouFrame::GtYaw;
  } else {
    throw ConfigError("diou_frame must be axis_aligned or gt_yaw, got '" + f + "'");
  }
  const auto h = kv.get_string("head_init", name_of(c.head_init));
  if (h == "normal") {
    c.head_init = HeadInit::Normal;
  } else if (h == "zero") {
    c.head_init = HeadInit::Zero;
  } else {
    throw ConfigError("head_init must be normal or zero, got '" + h + "'");
  }

  c.oriented = kv.get_bool("oriented", c.oriented);
  c.assigner_k = static_cast<int>(kv.get_int("assigner_k", c.assigner_k));
  c.class_levels = to_int(kv.get_int_list("class_levels", {c.class_levels.begin(), c.class_levels.end()}));
  c.focal_gamma = kv.get_double("focal_gamma", c.focal_gamma);
  c.focal_alpha = kv.get_double("focal_alpha", c.focal_alpha);
  c.cls_prior = kv.get_double("cls_prior", c.cls_prior);
  c.bn_affine_only = kv.get_bool("bn_affine_only", c.bn_affine_only);
  c.use_fusion = kv.get_bool("use_fusion", c.use_fusion);
  c.fusion_channels = static_cast<int>(kv.get_int("fusion_channels", c.fusion_channels));
  c.score_threshold = kv.get_double("score_threshold", c.score_threshold);
  c.nms_threshold = kv.get_double("nms_threshold", c.nms_threshold);
  c.nms_pre = static_cast<int>(kv.get_int("nms_pre", c.nms_pre));
  c.init_seed = static_cast<std::uint64_t>(kv.get_int("init_seed", static_cast<long long>(c.init_seed)));
  c.validate();
  return c;
}

KeyValueConfig ModelConfig::to_kv() const {
  KeyValueConfig kv;
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  auto d = [](double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
  };
  kv.set("in_channels", std::to_string(in_channels));
  kv.set("num_classes", std::to_string(num_classes));
  kv.set("num_levels", std::to_string(num_levels));
  kv.set("base_voxel_size", d(base_voxel_size));
  kv.set("stem_channels", std::to_string(stem_channels));
  kv.set("level_channels", join(level_channels));
  kv.set("level_blocks", join(level_blocks));
  kv.set("head_channels", std::to_string(head_channels));
  kv.set("use_channel_cap", b(use_channel_cap));
  kv.set("max_channels", std::to_string(max_channels));
  kv.set("use_head_level1", b(use_head_level1));
  kv.set("use_head_level4", b(use_head_level4));
  kv.set("use_pruning", b(use_pruning));
  kv.set("use_centerness", b(use_centerness));
  kv.set("assigner", name_of(assigner));
  kv.set("regression_loss", name_of(regression_loss));
  kv.set("diou_frame", name_of(diou_frame));
  kv.set("oriented", b(oriented));
  kv.set("assigner_k", std::to_string(assigner_k));
  kv.set("class_levels", join(class_levels));
  kv.set("focal_gamma", d(focal_gamma));
  kv.set("focal_alpha", d(focal_alpha));
  kv.set("cls_prior", d(cls_prior));
  kv.set("head_init", name_of(head_init));
  kv.set("bn_affine_only", b(bn_affine_only));
  kv.set("use_fusion", b(use_fusion));
  kv.set("fusion_channels", std::to_string(fusion_channels));
  kv.set("score_threshold", d(score_threshold));
  kv.set("nms_threshold", d(nms_threshold));
  kv.set("nms_pre", std::to_string(nms_pre));
  kv.set("init_seed", std::to_string(init_seed));
  return kv;
}

std::vector<int> default_class_levels(const std::vector<std::vector<std::array<double, 3>>>& sizes_per_class,
                                      double threshold) {
  std::vector<int> out;
  for (const auto& sizes : sizes_per_class) {
    int level = 2;
    for (int axis = 0; axis < 3 && !sizes.empty(); ++axis) {
      std::vector<double> v;
      for (const auto& s : sizes) v.push_back(s[axis]);
      std::sort(v.begin(), v.end());
      const std::size_t n = v.size();
      const double median = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
      if (median >= threshold) level = 3;
    }
    out.push_back(level);
  }
  return out;
}

}  // namespace sdet::detector
