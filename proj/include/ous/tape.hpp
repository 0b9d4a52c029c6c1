#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "ous/tensor.hpp"

namespace ous {

// Named trainable (or frozen) weight. Gradients accumulate across backward
// calls; zero_grad() is the only reset, so gated loss composition stays
// auditable step by step. Gradient buffers are kept in float64 regardless of
// value dtype.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor gradient;
  bool trainable = true;

  Parameter(std::string n, Tensor v, bool train = true)
      : name(std::move(n)),
        value(std::move(v)),
        gradient(Tensor::zeros(value.shape(), Dtype::f64)),
        trainable(train) {}

  void zero_grad() {
    double* g = gradient.mutable_data();
    for (size_t i = 0; i < gradient.size(); ++i) g[i] = 0.0;
  }

  double grad_abs_sum() const {
    double s = 0.0;
    for (size_t i = 0; i < gradient.size(); ++i) s += std::abs(gradient[i]);
    return s;
  }
};

using ParamPtr = std::shared_ptr<Parameter>;

class Tape;

// Lightweight handle to a tape node.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  bool defined() const { return tape != nullptr && id >= 0; }
  const Tensor& val() const;
};

struct Node {
  Tensor out;
  Tensor grad;  // lazily allocated, f64
  std::vector<int> parents;
  // Accumulates into parents' grads given this node's grad.
  std::function<void(Tape&, Node&)> backward;
  // Recomputes out from parent tensors (replay support). Null for leaves.
  std::function<Tensor(const std::vector<const Tensor*>&)> forward;
  bool requires_grad = false;
  ParamPtr param;  // set for parameter leaves

  bool has_grad() const { return grad.size() > 0; }
};

using ParamFilter = std::function<bool(const Parameter&)>;

// Ordered trace of executed differentiable operations. Single writer; the
// tensors it holds are immutable once recorded.
class Tape {
 public:
  explicit Tape(Dtype dt = Dtype::f32) : dtype_(dt) {}

  Dtype dtype() const { return dtype_; }
  size_t size() const { return nodes_.size(); }

  Node& node(int id) { return nodes_[static_cast<size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<size_t>(id)]; }

  // Constant leaf: no gradient ever flows into it.
  Var constant(Tensor t);

  // Parameter leaf. Repeated calls with the same parameter return the same
  // node, so shared weights accumulate their gradient in one place.
  Var param(const ParamPtr& p);

  Var make_op(std::vector<int> parents,
              std::function<Tensor(const std::vector<const Tensor*>&)> fwd,
              std::function<void(Tape&, Node&)> bwd);

  // Reverse-mode sweep from a scalar loss. Accumulates into Parameter
  // gradients; `filter` (when given) restricts which parameters receive the
  // accumulation (the traversal itself is unchanged).
  void backward(Var loss);
  void backward(Var loss, const ParamFilter& filter);

  // Gradient of the loss w.r.t. an arbitrary node, from the last backward.
  Tensor grad_of(Var v) const;

  // Re-executes every recorded forward closure; outputs must be reproduced
  // bitwise. Returns true when every node matches.
  bool replay_forward_identical();

  void accumulate_grad(int id, const Tensor& g);

  std::vector<const Tensor*> parent_tensors(const Node& n) const;

 private:
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, int> param_nodes_;
  Dtype dtype_;
};

// ---------------------------------------------------------------------------
// Differentiable operations
// ---------------------------------------------------------------------------

// matmul: [m,k]x[k,n] -> [m,n]; [B,m,k]x[k,n] -> [B,m,n]; [B,m,k]x[B,k,n]
Var matmul(Var a, Var b);
// a x b^T: [m,k]x[n,k] -> [m,n]
Var matmul_transb(Var a, Var b);
// elementwise; b may have a shape that is a trailing suffix of a's (broadcast)
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
// scale*x + shift
Var affine(Var x, double scale, double shift);
Var neg(Var x);
Var concat(const std::vector<Var>& xs, size_t axis);
Var slice(Var x, size_t axis, size_t start, size_t len);
Var mean_axis(Var x, size_t axis);
Var sum_axis(Var x, size_t axis);
Var mean_all(Var x);
Var relu(Var x);
Var tanh_op(Var x);
Var sigmoid(Var x);
Var exp_op(Var x);
Var log_op(Var x);
Var softmax_last(Var x);
Var log_softmax_last(Var x);
// per last-axis slice: gain*(x-mean)/sqrt(var+eps) + bias
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
// single-head attention: q [nq,dk], k [nk,dk], v [nk,dv] -> [nq,dv]
Var scaled_dot_attention(Var q, Var k, Var v);
// batched multi-head: q [B,nq,D], k/v [B,nk,D] -> [B,nq,D]; D % heads == 0
Var multi_head_attention(Var q, Var k, Var v, size_t heads);
// cosine of two flat vectors -> scalar
Var cosine(Var a, Var b);
// rows of the last axis scaled to unit norm; guard added to the norm
Var l2_normalize_rows(Var x, double guard = 1e-12);
// x [B,K] -> [B]: x[b, idx[b]]
Var pick(Var x, std::vector<size_t> idx);
// [s...] -> [B, s...]
Var broadcast0(Var x, size_t batch);
Var reshape(Var x, std::vector<size_t> shape);

// [M, C, H, W] -> [M, N, C*patch*patch] with N = (H/patch)*(W/patch); tokens
// run row-major over the patch grid, features are (channel, dy, dx).
Var patch_flatten(Var x, size_t patch);

// Same-padded 1-D cross-correlation over the last axis of [B, F] with an
// odd-length kernel and a scalar bias.
Var conv1d_same(Var x, Var kernel, Var bias);

}  // namespace ous
