#include "ous/textual.hpp"

#include <cmath>

#include "ous/data.hpp"
#include "ous/rng.hpp"

namespace ous {

void TextualConfig::validate() const {
  check(M > 0, ErrorKind::Config, "textual: context length must be positive");
  check(D_t > 0, ErrorKind::Config, "textual: text width must be positive");
  check(text_blocks > 0, ErrorKind::Config, "textual: need at least one block");
  check(text_heads > 0 && D_t % text_heads == 0, ErrorKind::Config,
        "textual: width must divide evenly across heads");
  check(tau_init > 0.0, ErrorKind::Config, "textual: temperature must be positive");
}

PromptHead PromptHead::make(const std::string& name, const TextualConfig& cfg, size_t D_f,
                            uint64_t seed, Dtype dt) {
  cfg.validate();
  check(D_f > 0, ErrorKind::Config, "textual: fusion width must be positive");
  PromptHead head;
  head.cfg = cfg;
  head.context = make_weight(name + ".context", {cfg.M, cfg.D_t}, seed, 0.02, dt, true);

  // One fixed random unit vector per emotion name, in label order.
  Tensor tokens = Tensor::zeros({static_cast<size_t>(kNumEmotions), cfg.D_t}, dt);
  for (int e = 0; e < kNumEmotions; ++e) {
    SplitMix64 rng(substream_seed(seed, std::string(name) + ".class." + kEmotionNames[e]));
    double norm_sq = 0.0;
    std::vector<double> row(cfg.D_t);
    for (size_t i = 0; i < cfg.D_t; ++i) {
      row[i] = rng.normal();
      norm_sq += row[i] * row[i];
    }
    const double inv = 1.0 / std::sqrt(norm_sq);
    for (size_t i = 0; i < cfg.D_t; ++i)
      tokens.mutable_data()[static_cast<size_t>(e) * cfg.D_t + i] = row[i] * inv;
  }
  tokens.finalize("class tokens");
  head.class_tokens = make_const(name + ".class_tokens", std::move(tokens), false);

  head.blocks.reserve(cfg.text_blocks);
  for (size_t i = 0; i < cfg.text_blocks; ++i) {
    head.blocks.push_back(AttentionBlock::make(name + ".block" + std::to_string(i), cfg.D_t,
                                               cfg.text_heads, 4 * cfg.D_t, seed, dt, false));
  }
  head.out = Linear::make(name + ".out", cfg.D_t, D_f, seed, dt, false);
  head.log_tau = make_const(name + ".log_tau",
                            Tensor::full({1}, std::log(cfg.tau_init), dt), true);
  return head;
}

Var PromptHead::build_prompt(Tape& t, size_t class_id) const {
  check(class_id < static_cast<size_t>(kNumEmotions), ErrorKind::Domain,
        "textual: class id out of range");
  Var ctx = t.param(context);
  Var tok = slice(t.param(class_tokens), 0, class_id, 1);  // [1, D_t]
  return concat({ctx, tok}, 0);  // [M+1, D_t]
}

Var PromptHead::class_embeddings(Tape& t) const {
  const size_t K = static_cast<size_t>(kNumEmotions);
  // Batch the seven prompts: shared context rows plus one class row each.
  Var ctx = broadcast0(t.param(context), K);                          // [7, M, D_t]
  Var toks = reshape(t.param(class_tokens), {K, 1, cfg.D_t});         // [7, 1, D_t]
  Var seq = concat({ctx, toks}, 1);                                   // [7, M+1, D_t]
  for (const auto& blk : blocks) seq = blk.apply(t, seq);
  Var pooled = mean_axis(seq, 1);                                     // [7, D_t]
  return l2_normalize_rows(out.apply(t, pooled));                     // [7, D_f]
}

Var PromptHead::tau(Tape& t) const { return exp_op(t.param(log_tau)); }

void PromptHead::collect(ParamList& out_list) const {
  out_list.push_back(context);
  out_list.push_back(class_tokens);
  for (const auto& b : blocks) b.collect(out_list);
  out.collect(out_list);
  out_list.push_back(log_tau);
}

Var class_logits(Tape&, Var fused, Var embeddings, Var log_tau) {
  const std::vector<size_t> fs = fused.val().shape();
  check(fs.size() == 2, ErrorKind::Shape, "logits: fused features must be [B, D_f]");
  check(embeddings.val().shape().size() == 2 && embeddings.val().shape()[1] == fs[1],
        ErrorKind::Shape, "logits: embedding width mismatch");
  const size_t B = fs[0], K = embeddings.val().shape()[0];

  // A fused row of zero norm has no direction to score.
  for (size_t b = 0; b < B; ++b) {
    double norm_sq = 0.0;
    for (size_t d = 0; d < fs[1]; ++d) {
      double v = fused.val().data()[b * fs[1] + d];
      norm_sq += v * v;
    }
    check(norm_sq > 1e-24, ErrorKind::Numeric, "logits: zero-norm fused row");
  }

  Var cos = matmul_transb(l2_normalize_rows(fused), embeddings);  // [B, K]
  Var inv_tau = reshape(exp_op(neg(log_tau)), {1, 1});
  return reshape(matmul(reshape(cos, {B * K, 1}), inv_tau), {B, K});
}

}  // namespace ous
