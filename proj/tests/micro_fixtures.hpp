// Shared micro-scale fixtures: a model small enough to finite-difference or
// train in milliseconds, plus synthetic caches/manifests that skip the
// corpus-rendering path when a test only needs downstream plumbing.
#pragma once

#include <string>
#include <vector>

#include "ous/model.hpp"
#include "ous/rng.hpp"

namespace ous::testfix {

inline ModelConfig micro_config(Dtype dt = Dtype::f64) {
  ModelConfig cfg;
  cfg.frames = 3;
  cfg.channels = 1;
  cfg.height = 16;
  cfg.width = 16;
  cfg.face_size = 8;
  cfg.vision.patch = 4;
  cfg.vision.D = 8;
  cfg.vision.depth = 2;
  cfg.vision.heads = 2;
  cfg.vision.early_blocks = 1;
  cfg.enc.F = 8;
  cfg.enc.F_p = 4;
  cfg.enc.frame_blocks = 1;
  cfg.enc.frame_heads = 2;
  cfg.fusion.blocks = 2;
  cfg.fusion.n_q = 3;
  cfg.fusion.D_f = 8;
  cfg.fusion.heads = 2;
  cfg.fusion.mlp_hidden = 16;
  cfg.text.M = 4;
  cfg.text.D_t = 8;
  cfg.text.text_blocks = 1;
  cfg.text.text_heads = 2;
  cfg.seed = 20;
  cfg.dtype = dt;
  return cfg;
}

inline FeatureCache synthetic_cache(const ModelConfig& cfg, size_t clips, uint64_t seed) {
  SplitMix64 rng(seed);
  FeatureCache cache;
  for (size_t i = 0; i < clips; ++i) {
    ClipFeatures f;
    f.face_seq = Tensor::randn({cfg.frames, cfg.vision.D}, rng, 0.0, 1.0, cfg.dtype);
    f.scene_seq = Tensor::randn({cfg.frames, cfg.vision.D}, rng, 0.0, 1.0, cfg.dtype);
    f.early_pooled = Tensor::randn({cfg.vision.D}, rng, 0.0, 1.0, cfg.dtype);
    cache.clips.push_back(std::move(f));
  }
  return cache;
}

// Round-robin emotions; every (per_class)-th clip of each class lands in the
// validation split, and clip 1 of each class is flagged ambiguous.
inline Manifest synthetic_manifest(size_t clips, uint64_t seed) {
  Manifest m;
  m.seed = seed;
  for (size_t i = 0; i < clips; ++i) {
    ClipRecord rec;
    rec.clip_id = "clip" + std::to_string(i);
    rec.emotion = static_cast<int>(i % kNumEmotions);
    rec.polarity = polarity_from_emotion(rec.emotion);
    rec.ambiguous = (i / kNumEmotions) == 1;
    rec.split = (i / kNumEmotions) % 4 == 3 ? "val" : "train";
    rec.file = "unused";
    m.clips.push_back(std::move(rec));
  }
  return m;
}

}  // namespace ous::testfix
