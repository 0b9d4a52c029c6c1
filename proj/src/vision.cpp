#include "ous/vision.hpp"

namespace ous {

void VisionEncoderConfig::validate() const {
  check(patch > 0, ErrorKind::Config, "vision: patch size must be positive");
  check(D > 0, ErrorKind::Config, "vision: embedding width must be positive");
  check(D % heads == 0, ErrorKind::Config, "vision: width must divide evenly across heads");
  check(depth > 0, ErrorKind::Config, "vision: depth must be positive");
  check(early_blocks > 0 && early_blocks < depth, ErrorKind::Config,
        "vision: early capture must fall strictly inside the stack");
}

VisionEncoder VisionEncoder::make(const std::string& name, const VisionEncoderConfig& cfg,
                                  size_t channels, size_t max_tokens, uint64_t seed, Dtype dt,
                                  bool trainable) {
  cfg.validate();
  check(channels > 0, ErrorKind::Config, "vision: channel count must be positive");
  check(max_tokens > 0, ErrorKind::Config, "vision: token budget must be positive");
  VisionEncoder enc;
  enc.cfg = cfg;
  const size_t patch_dim = channels * cfg.patch * cfg.patch;
  enc.embed = make_weight(name + ".embed", {patch_dim, cfg.D}, seed, 0.02, dt, trainable);
  enc.pos = make_weight(name + ".pos", {max_tokens, cfg.D}, seed, 0.02, dt, trainable);
  enc.blocks.reserve(cfg.depth);
  for (size_t i = 0; i < cfg.depth; ++i) {
    enc.blocks.push_back(AttentionBlock::make(name + ".block" + std::to_string(i), cfg.D,
                                              cfg.heads, cfg.mlp_hidden(), seed, dt, trainable));
  }
  return enc;
}

namespace {

// Patch embedding: flatten non-overlapping patches, project, add the leading
// rows of the positional bank. Result [M, N, D].
Var patch_embed(Tape& t, const VisionEncoder& enc, Var frames) {
  const auto& s = frames.val().shape();
  check(s.size() == 4, ErrorKind::Shape, "vision: frames must be [M, C, H, W]");
  check(s[2] % enc.cfg.patch == 0 && s[3] % enc.cfg.patch == 0, ErrorKind::Shape,
        "vision: spatial extents must be multiples of the patch size");
  const size_t n = (s[2] / enc.cfg.patch) * (s[3] / enc.cfg.patch);
  check(n <= enc.pos->value.shape()[0], ErrorKind::Shape,
        "vision: stream has more tokens than the positional bank");
  Var tok = matmul(patch_flatten(frames, enc.cfg.patch), t.param(enc.embed));
  Var pos = t.param(enc.pos);
  if (n < enc.pos->value.shape()[0]) pos = slice(pos, 0, 0, n);
  return add(tok, pos);  // pos broadcasts over the leading M axis
}

}  // namespace

StreamFeatures VisionEncoder::encode(Tape& t, Var frames) const {
  Var x = patch_embed(t, *this, frames);
  StreamFeatures out;
  for (size_t i = 0; i < blocks.size(); ++i) {
    x = blocks[i].apply(t, x);
    if (i + 1 == cfg.early_blocks) out.early = x;
  }
  out.tokens = x;
  return out;
}

Var VisionEncoder::encode_truncated(Tape& t, Var frames, size_t upto) const {
  check(upto <= blocks.size(), ErrorKind::Contract, "vision: truncation depth exceeds stack");
  Var x = patch_embed(t, *this, frames);
  for (size_t i = 0; i < upto; ++i) x = blocks[i].apply(t, x);
  return x;
}

void VisionEncoder::collect(ParamList& out) const {
  out.push_back(embed);
  out.push_back(pos);
  for (const auto& b : blocks) b.collect(out);
}

}  // namespace ous
