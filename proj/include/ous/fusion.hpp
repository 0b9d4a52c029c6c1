#pragma once

#include "ous/modules.hpp"

namespace ous {

struct TFEConfig {
  size_t blocks = 12;
  size_t n_q = 8;         // learnable query count
  size_t D_f = 64;        // fusion width
  size_t heads = 4;
  size_t mlp_hidden = 256;
  double init_mu = 0.0;   // query initialization mean
  double init_sigma = 0.02;
  // Adds the stage input back in before each normalization. The printed
  // update rule has no residual paths, but a deep stack without them is
  // untrainable; the flag keeps the literal form available.
  bool residual = true;

  void validate() const;
};

// One bank of Gaussian-initialized queries shared by every fusion block.
struct LearnableQueries {
  ParamPtr q;  // [n_q, D_f]

  static LearnableQueries make(const std::string& name, size_t n_q, size_t D_f, double mu,
                               double sigma, uint64_t seed, Dtype dt);
};

// Cross-type attention block: the query state attends over the face and the
// scene token set with a shared query projection, the two attention results
// are summed, and the usual normalize / MLP / normalize tail follows.
struct TfeBlock {
  size_t heads = 1;
  LayerNormP ln_face, ln_scene;  // pre-normalization of each K/V set
  Linear wq;                     // shared query projection
  Linear wk_face, wv_face;
  Linear wk_scene, wv_scene;
  Linear wo;                     // output projection applied to the sum
  LayerNormP ln_attn;
  Linear fc1, fc2;
  LayerNormP ln_out;

  static TfeBlock make(const std::string& name, size_t D_f, size_t heads, size_t mlp_hidden,
                       uint64_t seed, Dtype dt);
  // q_state [B, n_q, D_f], face_kv [B, N_f, D_f], scene_kv [B, N_s, D_f]
  Var apply(Tape& t, Var q_state, Var face_kv, Var scene_kv, bool residual) const;
  void collect(ParamList& out) const;
};

struct FusedFeatures {
  Var o_final;  // [B, n_q, D_f]
  Var pooled;   // [B, D_f], mean over queries
};

// The full fusion stage: width maps for the three inputs, token-set assembly
// ([polarity token ; stream token] per type), and the block stack driven by
// the shared query bank.
struct TypeFusionEncoder {
  TFEConfig cfg;
  LearnableQueries queries;
  Linear pol_proj;    // [F_p, D_f]
  Linear face_proj;   // [F, D_f]
  Linear scene_proj;  // [F, D_f]
  std::vector<TfeBlock> blocks;

  static TypeFusionEncoder make(const std::string& name, const TFEConfig& cfg, size_t F,
                                size_t F_p, uint64_t seed, Dtype dt);
  // v_ft/v_st [B, F], v_pol [B, F_p]
  FusedFeatures apply(Tape& t, Var v_ft, Var v_st, Var v_pol) const;
  void collect(ParamList& out) const;
};

// Fusion ablation: drop the attention stack and average the two aligned
// stream features (their common width must already equal the head width).
Var fuse_mean(Tape& t, Var v_ft, Var v_st);

}  // namespace ous
