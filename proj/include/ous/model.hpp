#pragma once

#include <string>
#include <vector>

#include "ous/data.hpp"
#include "ous/encoders.hpp"
#include "ous/fusion.hpp"
#include "ous/textual.hpp"
#include "ous/vision.hpp"

namespace ous {

// Everything needed to rebuild the network from scratch: clip geometry (the
// corpus must match it), the four stage configurations, the fusion ablation
// switch, and the weight-initialization seed.
struct ModelConfig {
  size_t frames = 8;
  size_t channels = 3;
  size_t height = 64;
  size_t width = 64;
  size_t face_size = 32;

  VisionEncoderConfig vision;
  EncodersConfig enc;
  TFEConfig fusion;
  TextualConfig text;

  // Ablation: average the two aligned stream features instead of running the
  // attention-fusion stack (the polarity token then feeds nothing).
  bool mean_fusion = false;

  uint64_t seed = 1;
  Dtype dtype = Dtype::f32;

  size_t face_tokens() const;   // per frame
  size_t scene_tokens() const;  // per frame
  void validate() const;
};

// Per-clip features out of the frozen vision tower. Everything downstream of
// these is trainable, so they are computed once per corpus and reused.
struct ClipFeatures {
  Tensor face_seq;      // [T, D] per-frame token mean, face stream
  Tensor scene_seq;     // [T, D] per-frame token mean, scene stream
  Tensor early_pooled;  // [D] token-and-frame mean of the early scene capture
};

struct FeatureCache {
  std::vector<ClipFeatures> clips;  // parallel to the manifest's clip order
};

// Tape inputs for one batch, gathered out of the cache.
struct BatchInputs {
  Var face_seq;      // [B, T, D]
  Var scene_seq;     // [B, T, D]
  Var early_pooled;  // [B, D]
};

struct ModelOutput {
  Var frame_feat;   // frames-encoder output [B, F], before alignment
  Var v_ft;         // aligned face feature [B, F]
  Var v_st;         // aligned scene feature [B, F]
  Var pol_feature;  // [B, F_p]
  Var pol_logits;   // [B, 3]
  Var fused;        // [B, D_f]
  Var embeddings;   // [7, D_f] class-prompt embeddings, unit rows
  Var logits;       // [B, 7] cosine / tau
};

struct Model {
  ModelConfig cfg;
  VisionEncoder vision;  // frozen
  Lstm lstm;             // shared by both streams
  FrameEncoder frame_enc;
  PolarityHead pol_head;
  AlignProjector align_face;
  AlignProjector align_scene;
  TypeFusionEncoder tfe;
  PromptHead prompts;

  static Model make(const ModelConfig& cfg);

  // Trainable pipeline over cached frozen features.
  ModelOutput forward(Tape& t, const BatchInputs& in) const;

  ParamList params() const;            // every parameter, frozen included
  ParamList trainable_params() const;  // receives the contrastive/global loss
  ParamList similarity_params() const; // frames encoder + both aligners
  ParamList polarity_params() const;   // polarity head only
};

// Runs the frozen tower over every manifest clip. The corpus directory must
// hold the clip files the manifest names.
FeatureCache build_feature_cache(const Model& model, const Manifest& manifest,
                                 const std::string& corpus_dir);

// Frozen features for a single decoded clip (the cache builder's unit work;
// exposed for the uncached-equivalence check).
ClipFeatures clip_features(const Model& model, const ClipTensor& clip);

// Stacks cache rows `idx` into batch constants on `t`. zero_scene blanks the
// scene sequence and the early capture (face-only ablation).
BatchInputs batch_inputs(Tape& t, const FeatureCache& cache, const std::vector<size_t>& idx,
                         const ModelConfig& cfg, bool zero_scene = false);

}  // namespace ous
