#pragma once

#include <utility>

#include "ous/modules.hpp"

namespace ous {

struct VisionEncoderConfig {
  size_t patch = 16;
  size_t D = 64;
  size_t depth = 6;
  size_t heads = 4;
  size_t early_blocks = 4;  // depth of the capture feeding the polarity path

  size_t mlp_hidden() const { return 4 * D; }
  void validate() const;
};

// Tokens plus the activation captured after `early_blocks` blocks.
struct StreamFeatures {
  Var tokens;  // [M, N, D], M = B*T
  Var early;   // [M, N, D]
};

// Patch embedding + pre-norm attention stack, shared by the face and scene
// streams and kept frozen (trainable=false on every parameter) so no
// gradients ever flow into it. One positional bank sized for the largest
// stream serves both resolutions: a stream with fewer tokens uses the leading
// rows, keeping a single parameter set across streams.
struct VisionEncoder {
  VisionEncoderConfig cfg;
  ParamPtr embed;  // [C*patch*patch, D]
  ParamPtr pos;    // [max_tokens, D]
  std::vector<AttentionBlock> blocks;

  static VisionEncoder make(const std::string& name, const VisionEncoderConfig& cfg,
                            size_t channels, size_t max_tokens, uint64_t seed, Dtype dt,
                            bool trainable = false);

  StreamFeatures encode(Tape& t, Var frames) const;  // frames [M, C, H, W]
  // Runs only the first `upto` blocks (oracle hook for the early capture).
  Var encode_truncated(Tape& t, Var frames, size_t upto) const;

  void collect(ParamList& out) const;
};

}  // namespace ous
