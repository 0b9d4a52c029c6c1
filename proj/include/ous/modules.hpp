#pragma once

#include <string>
#include <vector>

#include "ous/tape.hpp"

namespace ous {

// Builders for the small set of parameterized layers the model is made of.
// Every parameter is created from a (seed, parameter-name) substream so
// initialization is independent of construction order, and carries a dotted
// name that doubles as its checkpoint key.

using ParamList = std::vector<ParamPtr>;

ParamPtr make_weight(const std::string& name, std::vector<size_t> shape, uint64_t seed,
                     double stddev, Dtype dt, bool trainable);
ParamPtr make_zeros(const std::string& name, std::vector<size_t> shape, Dtype dt, bool trainable);
ParamPtr make_const(const std::string& name, Tensor value, bool trainable);

struct Linear {
  ParamPtr w;  // [in, out]
  ParamPtr b;  // [out]; may be null (no bias)

  static Linear make(const std::string& name, size_t in, size_t out, uint64_t seed, Dtype dt,
                     bool trainable, double stddev = 0.02, bool bias = true);
  // Identity weight (requires in == out), zero bias.
  static Linear make_identity(const std::string& name, size_t width, Dtype dt, bool trainable);

  Var apply(Tape& t, Var x) const;  // [..., in] -> [..., out]
  void collect(ParamList& out) const;
};

struct LayerNormP {
  ParamPtr gain;  // [D], ones
  ParamPtr bias;  // [D], zeros

  static LayerNormP make(const std::string& name, size_t D, Dtype dt, bool trainable);
  Var apply(Tape& t, Var x) const;
  void collect(ParamList& out) const;
};

// Pre-norm transformer block: x += Wo·MHA(LN1(x)); x += MLP(LN2(x)).
struct AttentionBlock {
  size_t heads = 1;
  LayerNormP ln1, ln2;
  Linear wq, wk, wv, wo, fc1, fc2;

  static AttentionBlock make(const std::string& name, size_t D, size_t heads, size_t mlp_hidden,
                             uint64_t seed, Dtype dt, bool trainable);
  Var apply(Tape& t, Var x) const;  // [M, N, D] -> [M, N, D]
  void collect(ParamList& out) const;
};

}  // namespace ous
