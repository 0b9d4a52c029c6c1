#pragma once

#include <utility>

#include "ous/modules.hpp"

namespace ous {

struct EncodersConfig {
  size_t F = 64;             // aligned feature width shared by both streams
  size_t F_p = 32;           // polarity feature width
  size_t frame_blocks = 1;   // attention blocks in the frames encoder
  size_t frame_heads = 4;    // heads per frames-encoder block
  size_t align_kernel = 3;   // 1-D convolution width in the alignment projector

  void validate() const;
};

// Standard LSTM cell (input/forget/output gates via sigmoid, candidate via
// tanh) unrolled along the frame axis. Gate blocks are packed [i, f, g, o]
// along the last axis; hidden and cell states start at zero.
struct Lstm {
  size_t hidden = 0;
  ParamPtr wx;  // [in, 4*hidden]
  ParamPtr wh;  // [hidden, 4*hidden]
  ParamPtr b;   // [4*hidden], zero-initialized

  static Lstm make(const std::string& name, size_t in, size_t hidden, uint64_t seed, Dtype dt,
                   bool trainable = true);
  Var apply(Tape& t, Var x) const;  // [B, T, in] -> [B, T, hidden]
  void collect(ParamList& out) const;
};

// Temporal transformer for the face stream: learned per-frame position
// embeddings, pre-norm attention blocks over the frame axis, mean over
// frames, then a linear map to width F.
struct FrameEncoder {
  ParamPtr pos;  // [T, D]
  std::vector<AttentionBlock> blocks;
  Linear proj;  // [D, F]

  static FrameEncoder make(const std::string& name, size_t frames, size_t D, size_t F,
                           size_t n_blocks, size_t heads, uint64_t seed, Dtype dt);
  Var apply(Tape& t, Var x) const;  // [B, T, D] -> [B, F]
  void collect(ParamList& out) const;
};

// Scene-stream temporal reduction: arithmetic mean over the frame axis.
Var frames_mean(Tape& t, Var x);  // [B, T, F_in] -> [B, F_in]

// Mean over tokens and frames of an early-block capture: [B*T, N, D] -> [B, D].
Var pool_early(Tape& t, Var early, size_t batch, size_t frames);

// Two-layer head on pooled early scene features. The hidden activation is the
// polarity feature; the final linear yields the 3 polarity-class logits.
struct PolarityHead {
  Linear fc1;  // [D, F_p]
  Linear fc2;  // [F_p, 3]

  static PolarityHead make(const std::string& name, size_t D, size_t F_p, uint64_t seed, Dtype dt);
  // pooled [B, D] -> (polarity feature [B, F_p], logits [B, 3])
  std::pair<Var, Var> apply(Tape& t, Var pooled) const;
  void collect(ParamList& out) const;
};

// Latent alignment for one stream: same-padded 1-D convolution over the
// feature axis followed by a fully connected layer. Identity-initialized
// (unit-center kernel, identity matrix) so it starts as a passthrough and the
// similarity objective moves it from there.
struct AlignProjector {
  ParamPtr kernel;  // [align_kernel], odd width
  ParamPtr bias;    // [1]
  Linear fc;        // [F, F]

  static AlignProjector make(const std::string& name, size_t width, size_t kernel_size, Dtype dt);
  Var apply(Tape& t, Var x) const;  // [B, F] -> [B, F]
  void collect(ParamList& out) const;
};

}  // namespace ous
