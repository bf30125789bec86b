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


#include "sdet/cli/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "sdet/common/error.hpp"
#include "sdet/fusion/fusion.hpp"
#include "sdet/nn/checkpoint.hpp"

namespace sdet::cli {
namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32), static_cast<std::uint32_t>(b),
                    static_cast<std::uint32_t>(b >> 32)};
  std::mt19937_64 rng(seq);
  return rng();
}

std::string join(const std::vector<double>& v) {
  std::string s;
  for (double x : v) {
    if (!s.empty()) s += ",";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    s += buf;
  }
  return s;
}

std::vector<double> parse_doubles(const std::string& text) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto next = text.find(',', pos);
    const std::string tok = text.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
    if (!tok.empty()) out.push_back(std::stod(tok));
    if (next == std::string::npos) break;
    pos = next + 1;
  }
  return out;
}

}  // namespace

TrainConfig TrainConfig::from_kv(const KeyValueConfig& kv, const TrainConfig& d) {
  TrainConfig c = d;
  c.steps = static_cast<int>(kv.get_int("train.steps", d.steps));
  c.batch_size = static_cast<int>(kv.get_int("train.batch_size", d.batch_size));
  c.lr = kv.get_double("train.lr", d.lr);
  c.weight_decay = kv.get_double("train.weight_decay", d.weight_decay);
  c.clip_norm = kv.get_double("train.clip_norm", d.clip_norm);
  if (kv.has("train.lr_milestones")) {
    try {
      c.lr_milestones = parse_doubles(kv.get_string("train.lr_milestones", ""));
    } catch (const std::exception&) {
      throw ConfigError("train.lr_milestones: expected comma-separated fractions");
    }
  }
  c.lr_factor = kv.get_double("train.lr_factor", d.lr_factor);
  c.augment = kv.get_bool("train.augment", d.augment);
  c.seed = static_cast<std::uint64_t>(kv.get_int("train.seed", static_cast<long long>(d.seed)));
  c.checkpoint_every = static_cast<int>(kv.get_int("train.checkpoint_every", d.checkpoint_every));
  if (c.steps < 0 || c.batch_size < 1 || !(c.lr > 0.0)) throw ConfigError("train: steps >= 0, batch_size >= 1, lr > 0");
  return c;
}

KeyValueConfig TrainConfig::to_kv() const {
  KeyValueConfig kv;
  kv.set("train.steps", std::to_string(steps));
  kv.set("train.batch_size", std::to_string(batch_size));
  kv.set("train.lr", join({lr}));
  kv.set("train.weight_decay", join({weight_decay}));
  kv.set("train.clip_norm", join({clip_norm}));
  kv.set("train.lr_milestones", join(lr_milestones));
  kv.set("train.lr_factor", join({lr_factor}));
  kv.set("train.augment", augment ? "true" : "false");
  kv.set("train.seed", std::to_string(seed));
  kv.set("train.checkpoint_every", std::to_string(checkpoint_every));
  return kv;
}

Batch make_batch(const std::vector<const data::Scene*>& scenes, const detector::ModelConfig& cfg) {
  Batch b;
  b.num_scenes = scenes.size();
  std::vector<sparse::SparseTensor<float>> parts;
  std::vector<std::vector<geometry::GtBox>> gts;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    parts.push_back(data::voxelize_scene(*scenes[i], cfg.base_voxel_size, 0));
    gts.push_back(scenes[i]->gt);
  }
  b.input = sparse::stack_batch<float>(parts);
  b.gt = detector::BatchGt::from_scenes(gts);
  if (cfg.use_fusion) {
    std::vector<fusion::View> views;
    for (const auto* s : scenes) {
      if (s->feature_map && s->camera) views.push_back({&*s->feature_map, &*s->camera});
      else views.push_back({});
    }
    b.fused = fusion::sample_voxel_features(b.input, views);
    if (b.fused.cols() == 0) b.fused = Matrix<float>(b.input.size(), cfg.fusion_channels);
    if (b.fused.cols() != static_cast<std::size_t>(cfg.fusion_channels)) {
      throw ConfigError("scene feature maps have " + std::to_string(b.fused.cols()) + " channels, model expects " +
                        std::to_string(cfg.fusion_channels));
    }
  }
  return b;
}

nlohmann::json LogRecord::to_json() const {
  return {{"step", step},
          {"lr", lr},
          {"loss", loss.total},
          {"cls", loss.cls},
          {"reg", loss.reg},
          {"ctr", loss.ctr},
          {"num_fg", loss.num_foreground},
          {"grad_norm", grad_norm},
          {"batch_seed", batch_seed}};
}

void resolve_class_levels(detector::ModelConfig& cfg, const std::vector<data::Scene>& scenes) {
  if (!cfg.class_levels.empty()) return;
  std::vector<std::vector<std::array<double, 3>>> sizes(cfg.num_classes);
  for (const auto& s : scenes)
    for (const auto& g : s.gt)
      if (g.label >= 0 && g.label < cfg.num_classes) sizes[g.label].push_back(g.box.size);
  cfg.class_levels = detector::default_class_levels(sizes);
}

std::vector<LogRecord> train(detector::Detector& model, nn::AdamW<float>& opt, const std::vector<data::Scene>& scenes,
                             const TrainConfig& cfg, const std::function<void(const LogRecord&)>& on_step) {
  if (scenes.empty()) throw UsageError("training needs at least one scene");
  const auto& mcfg = model.config();
  const std::size_t n = scenes.size();
  const std::size_t bs = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), n);
  const std::size_t per_epoch = (n + bs - 1) / bs;
  std::vector<LogRecord> log;
  for (std::int64_t step = opt.step_count() + 1; step <= cfg.steps; ++step) {
    const std::int64_t idx = step - 1;
    const std::uint64_t epoch = static_cast<std::uint64_t>(idx) / per_epoch;
    const std::size_t slot = static_cast<std::size_t>(idx) % per_epoch;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 shuffle_rng(mix(cfg.seed, epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    const std::uint64_t batch_seed = mix(cfg.seed ^ 0x5eed, static_cast<std::uint64_t>(step));
    std::mt19937_64 aug_rng(batch_seed);
    std::vector<data::Scene> views;
    for (std::size_t k = 0; k < bs; ++k) {
      const auto& s = scenes[order[(slot * bs + k) % n]];
      views.push_back(cfg.augment ? data::augment(s, cfg.augmentation, aug_rng) : s);
    }
    std::vector<const data::Scene*> ptrs;
    for (const auto& v : views) ptrs.push_back(&v);
    const Batch batch = make_batch(ptrs, mcfg);

    auto cur = opt.config();
    cur.lr = nn::stepped_lr(cfg.lr, step - 1, cfg.steps, cfg.lr_milestones, cfg.lr_factor);
    opt.set_lr(cur.lr);

    model.params().zero_grad();
    const auto out = model.forward(batch.input, mcfg.use_fusion ? &batch.fused : nullptr, true);
    const auto assignment = detector::assign(detector::locations_of(out), batch.gt, mcfg);
    const auto loss = detector::compute_loss(out, assignment, batch.gt, mcfg);
    if (!std::isfinite(loss.parts.total)) {
      throw NonFiniteLoss("non-finite loss at step " + std::to_string(step) + " (batch seed " +
                          std::to_string(batch_seed) + ", cls " + std::to_string(loss.parts.cls) + ", reg " +
                          std::to_string(loss.parts.reg) + ")");
    }
    nn::backward(loss.total);
    opt.step(model.params());

    LogRecord rec{step, cur.lr, loss.parts, opt.last_grad_norm(), batch_seed};
    log.push_back(rec);
    if (on_step) on_step(rec);
    if (!cfg.checkpoint_path.empty() && cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 &&
        step != cfg.steps) {
      save_model(cfg.checkpoint_path, model, &opt);
    }
  }
  if (!cfg.checkpoint_path.empty()) save_model(cfg.checkpoint_path, model, &opt);
  return log;
}

std::vector<std::vector<geometry::Detection>> predict(detector::Detector& model, const std::vector<data::Scene>& scenes,
                                                      int batch_size, double keep, std::uint64_t seed) {
  nn::NoGradGuard no_grad;
  const auto& cfg = model.config();
  std::vector<std::vector<geometry::Detection>> out;
  const std::size_t bs = static_cast<std::size_t>(std::max(1, batch_size));
  for (std::size_t start = 0; start < scenes.size(); start += bs) {
    std::vector<data::Scene> views;
    for (std::size_t i = start; i < std::min(scenes.size(), start + bs); ++i) {
      if (keep < 1.0) {
        std::mt19937_64 rng(mix(seed, i));
        views.push_back(data::subsample(scenes[i], keep, rng));
      } else {
        views.push_back(scenes[i]);
      }
    }
    std::vector<const data::Scene*> ptrs;
    for (const auto& v : views) ptrs.push_back(&v);
    const Batch batch = make_batch(ptrs, cfg);
    const auto head = model.forward(batch.input, cfg.use_fusion ? &batch.fused : nullptr, false);
    for (auto& d : detector::decode(head, cfg, ptrs.size())) out.push_back(std::move(d));
  }
  return out;
}

data::MapResult evaluate(detector::Detector& model, const std::vector<data::Scene>& scenes, double keep,
                         std::uint64_t seed) {
  const auto dets = predict(model, scenes, 4, keep, seed);
  std::vector<std::vector<geometry::GtBox>> gts;
  for (const auto& s : scenes) gts.push_back(s.gt);
  return data::eval_map(dets, gts, model.config().num_classes);
}

void save_model(const std::string& path, const detector::Detector& model, const nn::AdamW<float>* opt) {
  nn::save_checkpoint<float>(path, model.params(), opt, {{"model_config", model.config().to_kv().to_string()}});
}

std::unique_ptr<detector::Detector> load_model(const std::string& path, nn::AdamW<float>* opt) {
  const auto meta = nn::read_checkpoint_meta(path);
  std::string text;
  for (const auto& [k, v] : meta)
    if (k == "model_config") text = v;
  if (text.empty()) throw ParseError(path + ": checkpoint has no model configuration");
  auto cfg = detector::ModelConfig::from_kv(KeyValueConfig::parse(text, path + " [model_config]"));
  auto model = std::make_unique<detector::Detector>(cfg);
  nn::load_checkpoint<float>(path, model->params(), opt);
  return model;
}

}  // namespace sdet::cli
