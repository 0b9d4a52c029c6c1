#include "ous/modules.hpp"

#include "ous/rng.hpp"

namespace ous {

ParamPtr make_weight(const std::string& name, std::vector<size_t> shape, uint64_t seed,
                     double stddev, Dtype dt, bool trainable) {
  SplitMix64 rng = substream(seed, name);
  Tensor v = Tensor::randn(std::move(shape), rng, 0.0, stddev, dt);
  return std::make_shared<Parameter>(name, std::move(v), trainable);
}

ParamPtr make_zeros(const std::string& name, std::vector<size_t> shape, Dtype dt, bool trainable) {
  return std::make_shared<Parameter>(name, Tensor::zeros(std::move(shape), dt), trainable);
}

ParamPtr make_const(const std::string& name, Tensor value, bool trainable) {
  return std::make_shared<Parameter>(name, std::move(value), trainable);
}

Linear Linear::make(const std::string& name, size_t in, size_t out, uint64_t seed, Dtype dt,
                    bool trainable, double stddev, bool bias) {
  Linear l;
  l.w = make_weight(name + ".w", {in, out}, seed, stddev, dt, trainable);
  if (bias) l.b = make_zeros(name + ".b", {out}, dt, trainable);
  return l;
}

Linear Linear::make_identity(const std::string& name, size_t width, Dtype dt, bool trainable) {
  Tensor eye = Tensor::zeros({width, width}, dt);
  for (size_t i = 0; i < width; ++i) eye.mutable_data()[i * width + i] = 1.0;
  Linear l;
  l.w = make_const(name + ".w", std::move(eye), trainable);
  l.b = make_zeros(name + ".b", {width}, dt, trainable);
  return l;
}

Var Linear::apply(Tape& t, Var x) const {
  Var y = matmul(x, t.param(w));
  if (b) y = add(y, t.param(b));
  return y;
}

void Linear::collect(ParamList& out) const {
  out.push_back(w);
  if (b) out.push_back(b);
}

LayerNormP LayerNormP::make(const std::string& name, size_t D, Dtype dt, bool trainable) {
  LayerNormP ln;
  ln.gain = make_const(name + ".gain", Tensor::full({D}, 1.0, dt), trainable);
  ln.bias = make_zeros(name + ".bias", {D}, dt, trainable);
  return ln;
}

Var LayerNormP::apply(Tape& t, Var x) const {
  return layer_norm(x, t.param(gain), t.param(bias));
}

void LayerNormP::collect(ParamList& out) const {
  out.push_back(gain);
  out.push_back(bias);
}

AttentionBlock AttentionBlock::make(const std::string& name, size_t D, size_t heads,
                                    size_t mlp_hidden, uint64_t seed, Dtype dt, bool trainable) {
  check(heads >= 1 && D % heads == 0, ErrorKind::Config,
        name + ": width must be divisible by heads");
  AttentionBlock blk;
  blk.heads = heads;
  blk.ln1 = LayerNormP::make(name + ".ln1", D, dt, trainable);
  blk.ln2 = LayerNormP::make(name + ".ln2", D, dt, trainable);
  blk.wq = Linear::make(name + ".wq", D, D, seed, dt, trainable);
  blk.wk = Linear::make(name + ".wk", D, D, seed, dt, trainable);
  blk.wv = Linear::make(name + ".wv", D, D, seed, dt, trainable);
  blk.wo = Linear::make(name + ".wo", D, D, seed, dt, trainable);
  blk.fc1 = Linear::make(name + ".fc1", D, mlp_hidden, seed, dt, trainable);
  blk.fc2 = Linear::make(name + ".fc2", mlp_hidden, D, seed, dt, trainable);
  return blk;
}

Var AttentionBlock::apply(Tape& t, Var x) const {
  Var h = ln1.apply(t, x);
  Var attn = multi_head_attention(wq.apply(t, h), wk.apply(t, h), wv.apply(t, h), heads);
  x = add(x, wo.apply(t, attn));
  Var h2 = ln2.apply(t, x);
  x = add(x, fc2.apply(t, relu(fc1.apply(t, h2))));
  return x;
}

void AttentionBlock::collect(ParamList& out) const {
  ln1.collect(out);
  ln2.collect(out);
  wq.collect(out);
  wk.collect(out);
  wv.collect(out);
  wo.collect(out);
  fc1.collect(out);
  fc2.collect(out);
}

}  // namespace ous
