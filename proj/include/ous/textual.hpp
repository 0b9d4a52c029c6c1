#pragma once

#include "ous/modules.hpp"

namespace ous {

struct TextualConfig {
  size_t M = 64;          // shared context length
  size_t D_t = 32;        // text width
  size_t text_blocks = 2; // frozen transformer depth
  size_t text_heads = 4;
  double tau_init = 0.07; // initial temperature

  void validate() const;
};

// Classification head built from learnable prompts: a single trainable
// context bank shared by all classes, fixed random unit class tokens, a small
// frozen text transformer (no positional embedding — prompt order carries no
// meaning), a frozen projection to the fusion width, and a trainable
// log-temperature. Only the context bank and the temperature ever receive
// gradients here.
struct PromptHead {
  TextualConfig cfg;
  ParamPtr context;      // [M, D_t], trainable
  ParamPtr class_tokens; // [7, D_t], frozen unit rows
  std::vector<AttentionBlock> blocks;  // frozen
  Linear out;            // [D_t, D_f], frozen
  ParamPtr log_tau;      // [1], trainable; tau = exp(log_tau) > 0 structurally

  static PromptHead make(const std::string& name, const TextualConfig& cfg, size_t D_f,
                         uint64_t seed, Dtype dt);

  // [context rows ; class token] for one class -> [M+1, D_t].
  Var build_prompt(Tape& t, size_t class_id) const;
  // All seven prompts encoded and L2-normalized -> [7, D_f].
  Var class_embeddings(Tape& t) const;
  Var tau(Tape& t) const;  // scalar [1]

  void collect(ParamList& out) const;
};

// logits[b, k] = cosine(fused_b, emb_k) / tau. Embedding rows must already be
// unit length; fused rows are normalized internally (a zero-norm fused row is
// a numeric error).
Var class_logits(Tape& t, Var fused, Var embeddings, Var log_tau);

}  // namespace ous
