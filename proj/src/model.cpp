#include "ous/model.hpp"

#include <algorithm>

#include "ous/common.hpp"
#include "ous/rng.hpp"

namespace ous {

size_t ModelConfig::face_tokens() const {
  return (face_size / vision.patch) * (face_size / vision.patch);
}

size_t ModelConfig::scene_tokens() const {
  return (height / vision.patch) * (width / vision.patch);
}

void ModelConfig::validate() const {
  vision.validate();
  enc.validate();
  fusion.validate();
  text.validate();
  check(frames >= 1, ErrorKind::Config, "model: frames must be >= 1");
  check(channels >= 1, ErrorKind::Config, "model: channels must be >= 1");
  check(height % vision.patch == 0 && width % vision.patch == 0, ErrorKind::Config,
        "model: frame extents must be divisible by the patch size");
  check(face_size % vision.patch == 0, ErrorKind::Config,
        "model: face crop must be divisible by the patch size");
  check(face_size <= height && face_size <= width, ErrorKind::Config,
        "model: face crop larger than the frame");
  // The scene stream reaches its aligner straight from the frame mean, so the
  // shared aligned width must be the vision width.
  check(enc.F == vision.D, ErrorKind::Config,
        "model: aligned width F must equal the vision width D");
  if (mean_fusion)
    check(enc.F == fusion.D_f, ErrorKind::Config,
          "model: mean fusion needs the aligned width to equal the fusion width");
}

Model Model::make(const ModelConfig& cfg) {
  cfg.validate();
  const size_t max_tokens = std::max(cfg.face_tokens(), cfg.scene_tokens());
  Model m{cfg,
          VisionEncoder::make("vision", cfg.vision, cfg.channels, max_tokens,
                              substream_seed(cfg.seed, "vision"), cfg.dtype),
          Lstm::make("lstm", cfg.vision.D, cfg.vision.D, substream_seed(cfg.seed, "lstm"),
                     cfg.dtype),
          FrameEncoder::make("frames", cfg.frames, cfg.vision.D, cfg.enc.F,
                             cfg.enc.frame_blocks, cfg.enc.frame_heads,
                             substream_seed(cfg.seed, "frames"), cfg.dtype),
          PolarityHead::make("polarity", cfg.vision.D, cfg.enc.F_p,
                             substream_seed(cfg.seed, "polarity"), cfg.dtype),
          AlignProjector::make("align_face", cfg.enc.F, cfg.enc.align_kernel, cfg.dtype),
          AlignProjector::make("align_scene", cfg.enc.F, cfg.enc.align_kernel, cfg.dtype),
          TypeFusionEncoder::make("tfe", cfg.fusion, cfg.enc.F, cfg.enc.F_p,
                                  substream_seed(cfg.seed, "tfe"), cfg.dtype),
          PromptHead::make("prompt", cfg.text, cfg.fusion.D_f,
                           substream_seed(cfg.seed, "prompt"), cfg.dtype)};
  return m;
}

ModelOutput Model::forward(Tape& t, const BatchInputs& in) const {
  const std::vector<size_t> fs = in.face_seq.val().shape();
  check(fs.size() == 3 && fs[1] == cfg.frames && fs[2] == cfg.vision.D, ErrorKind::Shape,
        "model forward: face sequence must be [B, T, D]");
  check(in.scene_seq.val().shape() == fs, ErrorKind::Shape,
        "model forward: stream sequences must share a shape");

  Var face_h = lstm.apply(t, in.face_seq);
  Var scene_h = lstm.apply(t, in.scene_seq);

  ModelOutput out;
  auto pol = pol_head.apply(t, in.early_pooled);
  out.pol_feature = pol.first;
  out.pol_logits = pol.second;

  out.frame_feat = frame_enc.apply(t, face_h);
  out.v_ft = align_face.apply(t, out.frame_feat);
  out.v_st = align_scene.apply(t, frames_mean(t, scene_h));

  out.fused = cfg.mean_fusion ? fuse_mean(t, out.v_ft, out.v_st)
                              : tfe.apply(t, out.v_ft, out.v_st, out.pol_feature).pooled;

  out.embeddings = prompts.class_embeddings(t);
  out.logits = class_logits(t, out.fused, out.embeddings, t.param(prompts.log_tau));
  return out;
}

ParamList Model::params() const {
  ParamList out;
  vision.collect(out);
  lstm.collect(out);
  frame_enc.collect(out);
  pol_head.collect(out);
  align_face.collect(out);
  align_scene.collect(out);
  tfe.collect(out);
  prompts.collect(out);
  return out;
}

ParamList Model::trainable_params() const {
  ParamList out;
  for (const ParamPtr& p : params())
    if (p->trainable) out.push_back(p);
  return out;
}

ParamList Model::similarity_params() const {
  ParamList out;
  frame_enc.collect(out);
  align_face.collect(out);
  align_scene.collect(out);
  return out;
}

ParamList Model::polarity_params() const {
  ParamList out;
  pol_head.collect(out);
  return out;
}

ClipFeatures clip_features(const Model& model, const ClipTensor& clip) {
  const ModelConfig& cfg = model.cfg;
  check(clip.T() == cfg.frames && clip.C() == cfg.channels && clip.H() == cfg.height &&
            clip.W() == cfg.width,
        ErrorKind::Contract, "clip_features: clip geometry does not match the model");

  auto [face, scene] = split_face_scene(clip, cfg.face_size);
  const size_t T = cfg.frames;

  // Throwaway tape: the tower is frozen, so only values are kept.
  Tape t(cfg.dtype);
  StreamFeatures f = model.vision.encode(t, t.constant(face.frames));
  StreamFeatures s = model.vision.encode(t, t.constant(scene.frames));

  ClipFeatures out;
  out.face_seq = mean_axis(f.tokens, 1).val().clone();                    // [T, D]
  out.scene_seq = mean_axis(s.tokens, 1).val().clone();                   // [T, D]
  out.early_pooled =
      pool_early(t, s.early, 1, T).val().clone().reshaped({cfg.vision.D});  // [D]
  return out;
}

FeatureCache build_feature_cache(const Model& model, const Manifest& manifest,
                                 const std::string& corpus_dir) {
  FeatureCache cache;
  cache.clips.reserve(manifest.clips.size());
  for (const ClipRecord& rec : manifest.clips) {
    ClipTensor clip = read_clip(clip_path(corpus_dir, rec));
    cache.clips.push_back(clip_features(model, clip));
  }
  return cache;
}

BatchInputs batch_inputs(Tape& t, const FeatureCache& cache, const std::vector<size_t>& idx,
                         const ModelConfig& cfg, bool zero_scene) {
  check(!idx.empty(), ErrorKind::Contract, "batch_inputs: empty batch");
  const size_t B = idx.size();
  const size_t T = cfg.frames;
  const size_t D = cfg.vision.D;

  Tensor face({B, T, D}, cfg.dtype);
  Tensor scene({B, T, D}, cfg.dtype);
  Tensor early({B, D}, cfg.dtype);
  double* fd = face.mutable_data();
  double* sd = scene.mutable_data();
  double* ed = early.mutable_data();
  for (size_t b = 0; b < B; ++b) {
    check(idx[b] < cache.clips.size(), ErrorKind::Contract,
          "batch_inputs: clip index out of range");
    const ClipFeatures& cf = cache.clips[idx[b]];
    check(cf.face_seq.shape() == std::vector<size_t>({T, D}), ErrorKind::Contract,
          "batch_inputs: cache row does not match the model geometry");
    for (size_t i = 0; i < T * D; ++i) {
      fd[b * T * D + i] = cf.face_seq[i];
      sd[b * T * D + i] = zero_scene ? 0.0 : cf.scene_seq[i];
    }
    for (size_t i = 0; i < D; ++i) ed[b * D + i] = zero_scene ? 0.0 : cf.early_pooled[i];
  }
  face.finalize("batch_inputs");
  scene.finalize("batch_inputs");
  early.finalize("batch_inputs");

  BatchInputs in;
  in.face_seq = t.constant(std::move(face));
  in.scene_seq = t.constant(std::move(scene));
  in.early_pooled = t.constant(std::move(early));
  return in;
}

}  // namespace ous
