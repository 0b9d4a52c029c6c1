#include "ous/fusion.hpp"

#include "ous/rng.hpp"

namespace ous {

void TFEConfig::validate() const {
  check(blocks >= 1, ErrorKind::Config, "fusion: need at least one block");
  check(n_q > 0 && D_f > 0 && mlp_hidden > 0, ErrorKind::Config,
        "fusion: sizes must be positive");
  check(heads > 0 && D_f % heads == 0, ErrorKind::Config,
        "fusion: width must divide evenly across heads");
  check(init_sigma >= 0.0, ErrorKind::Config, "fusion: query sigma must be nonnegative");
}

LearnableQueries LearnableQueries::make(const std::string& name, size_t n_q, size_t D_f, double mu,
                                        double sigma, uint64_t seed, Dtype dt) {
  check(sigma >= 0.0, ErrorKind::Config, "queries: sigma must be nonnegative");
  SplitMix64 rng(substream_seed(seed, name));
  LearnableQueries q;
  q.q = make_const(name, Tensor::randn({n_q, D_f}, rng, mu, sigma, dt), true);
  return q;
}

TfeBlock TfeBlock::make(const std::string& name, size_t D_f, size_t heads, size_t mlp_hidden,
                        uint64_t seed, Dtype dt) {
  check(D_f % heads == 0, ErrorKind::Config, "fusion: width must divide evenly across heads");
  TfeBlock b;
  b.heads = heads;
  b.ln_face = LayerNormP::make(name + ".ln_face", D_f, dt, true);
  b.ln_scene = LayerNormP::make(name + ".ln_scene", D_f, dt, true);
  b.wq = Linear::make(name + ".wq", D_f, D_f, seed, dt, true);
  b.wk_face = Linear::make(name + ".wk_face", D_f, D_f, seed, dt, true);
  b.wv_face = Linear::make(name + ".wv_face", D_f, D_f, seed, dt, true);
  b.wk_scene = Linear::make(name + ".wk_scene", D_f, D_f, seed, dt, true);
  b.wv_scene = Linear::make(name + ".wv_scene", D_f, D_f, seed, dt, true);
  b.wo = Linear::make(name + ".wo", D_f, D_f, seed, dt, true);
  b.ln_attn = LayerNormP::make(name + ".ln_attn", D_f, dt, true);
  b.fc1 = Linear::make(name + ".fc1", D_f, mlp_hidden, seed, dt, true);
  b.fc2 = Linear::make(name + ".fc2", mlp_hidden, D_f, seed, dt, true);
  b.ln_out = LayerNormP::make(name + ".ln_out", D_f, dt, true);
  return b;
}

Var TfeBlock::apply(Tape& t, Var q_state, Var face_kv, Var scene_kv, bool residual) const {
  const size_t D = wq.w->value.shape()[0];
  check(q_state.val().shape().size() == 3 && q_state.val().shape()[2] == D, ErrorKind::Shape,
        "fusion: query state must be [B, n_q, D_f]");
  check(face_kv.val().shape().size() == 3 && face_kv.val().shape()[2] == D, ErrorKind::Shape,
        "fusion: face token set must be [B, N, D_f]");
  check(scene_kv.val().shape().size() == 3 && scene_kv.val().shape()[2] == D, ErrorKind::Shape,
        "fusion: scene token set must be [B, N, D_f]");

  Var fkv = ln_face.apply(t, face_kv);
  Var skv = ln_scene.apply(t, scene_kv);
  Var qp = wq.apply(t, q_state);
  Var att_f = multi_head_attention(qp, wk_face.apply(t, fkv), wv_face.apply(t, fkv), heads);
  Var att_s = multi_head_attention(qp, wk_scene.apply(t, skv), wv_scene.apply(t, skv), heads);
  Var attn = wo.apply(t, add(att_f, att_s));
  Var o_attn = ln_attn.apply(t, residual ? add(attn, q_state) : attn);
  Var ff = fc2.apply(t, relu(fc1.apply(t, o_attn)));
  return ln_out.apply(t, residual ? add(ff, o_attn) : ff);
}

void TfeBlock::collect(ParamList& out) const {
  ln_face.collect(out);
  ln_scene.collect(out);
  wq.collect(out);
  wk_face.collect(out);
  wv_face.collect(out);
  wk_scene.collect(out);
  wv_scene.collect(out);
  wo.collect(out);
  ln_attn.collect(out);
  fc1.collect(out);
  fc2.collect(out);
  ln_out.collect(out);
}

TypeFusionEncoder TypeFusionEncoder::make(const std::string& name, const TFEConfig& cfg, size_t F,
                                          size_t F_p, uint64_t seed, Dtype dt) {
  cfg.validate();
  check(F > 0 && F_p > 0, ErrorKind::Config, "fusion: input widths must be positive");
  TypeFusionEncoder enc;
  enc.cfg = cfg;
  enc.queries = LearnableQueries::make(name + ".queries", cfg.n_q, cfg.D_f, cfg.init_mu,
                                       cfg.init_sigma, seed, dt);
  enc.pol_proj = Linear::make(name + ".pol_proj", F_p, cfg.D_f, seed, dt, true);
  enc.face_proj = Linear::make(name + ".face_proj", F, cfg.D_f, seed, dt, true);
  enc.scene_proj = Linear::make(name + ".scene_proj", F, cfg.D_f, seed, dt, true);
  enc.blocks.reserve(cfg.blocks);
  for (size_t i = 0; i < cfg.blocks; ++i) {
    enc.blocks.push_back(TfeBlock::make(name + ".block" + std::to_string(i), cfg.D_f, cfg.heads,
                                        cfg.mlp_hidden, seed, dt));
  }
  return enc;
}

FusedFeatures TypeFusionEncoder::apply(Tape& t, Var v_ft, Var v_st, Var v_pol) const {
  const std::vector<size_t> fs = v_ft.val().shape();
  check(fs.size() == 2, ErrorKind::Shape, "fusion: stream features must be [B, F]");
  check(v_st.val().shape() == fs, ErrorKind::Shape, "fusion: stream widths must match");
  check(v_pol.val().shape().size() == 2 && v_pol.val().shape()[0] == fs[0], ErrorKind::Shape,
        "fusion: polarity features must share the batch size");
  const size_t B = fs[0];

  Var pol_tok = reshape(pol_proj.apply(t, v_pol), {B, 1, cfg.D_f});
  Var face_tok = reshape(face_proj.apply(t, v_ft), {B, 1, cfg.D_f});
  Var scene_tok = reshape(scene_proj.apply(t, v_st), {B, 1, cfg.D_f});
  Var face_set = concat({pol_tok, face_tok}, 1);
  Var scene_set = concat({pol_tok, scene_tok}, 1);

  Var state = broadcast0(t.param(queries.q), B);  // [B, n_q, D_f]
  for (const auto& blk : blocks) state = blk.apply(t, state, face_set, scene_set, cfg.residual);

  FusedFeatures out;
  out.o_final = state;
  out.pooled = mean_axis(state, 1);
  return out;
}

void TypeFusionEncoder::collect(ParamList& out) const {
  out.push_back(queries.q);
  pol_proj.collect(out);
  face_proj.collect(out);
  scene_proj.collect(out);
  for (const auto& b : blocks) b.collect(out);
}

Var fuse_mean(Tape& t, Var v_ft, Var v_st) {
  (void)t;
  check(v_ft.val().shape() == v_st.val().shape() && v_ft.val().shape().size() == 2,
        ErrorKind::Shape, "fusion: mean ablation needs matching [B, F] inputs");
  return affine(add(v_ft, v_st), 0.5, 0.0);
}

}  // namespace ous
