#include "ous/tape.hpp"

#include <cstring>

namespace ous {

const Tensor& Var::val() const {
  check(defined(), ErrorKind::Contract, "Var::val on undefined handle");
  return tape->node(id).out;
}

Var Tape::constant(Tensor t) {
  Node n;
  n.out = std::move(t);
  n.requires_grad = false;
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::param(const ParamPtr& p) {
  check(p != nullptr, ErrorKind::Contract, "null parameter");
  auto it = param_nodes_.find(p.get());
  if (it != param_nodes_.end()) return Var{this, it->second};
  Node n;
  n.out = p->value;  // shares the buffer; value is immutable while taped
  n.requires_grad = p->trainable;
  n.param = p;
  nodes_.push_back(std::move(n));
  int id = static_cast<int>(nodes_.size()) - 1;
  param_nodes_.emplace(p.get(), id);
  return Var{this, id};
}

Var Tape::make_op(std::vector<int> parents,
                  std::function<Tensor(const std::vector<const Tensor*>&)> fwd,
                  std::function<void(Tape&, Node&)> bwd) {
  Node n;
  n.parents = std::move(parents);
  bool rg = false;
  std::vector<const Tensor*> pt;
  pt.reserve(n.parents.size());
  for (int pid : n.parents) {
    check(pid >= 0 && pid < static_cast<int>(nodes_.size()), ErrorKind::Contract,
          "op parent out of range");
    rg = rg || nodes_[static_cast<size_t>(pid)].requires_grad;
    pt.push_back(&nodes_[static_cast<size_t>(pid)].out);
  }
  n.out = fwd(pt);
  n.requires_grad = rg;
  n.forward = std::move(fwd);
  if (rg) n.backward = std::move(bwd);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

void Tape::accumulate_grad(int id, const Tensor& g) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (!n.requires_grad) return;
  check(g.shape() == n.out.shape(), ErrorKind::Shape,
        "gradient shape " + g.shape_str() + " does not match output " + n.out.shape_str());
  if (!n.has_grad()) n.grad = Tensor::zeros(n.out.shape(), Dtype::f64);
  double* dst = n.grad.mutable_data();
  const double* src = g.data();
  for (size_t i = 0; i < g.size(); ++i) dst[i] += src[i];
}

void Tape::backward(Var loss) { backward(loss, ParamFilter()); }

void Tape::backward(Var loss, const ParamFilter& filter) {
  check(loss.tape == this, ErrorKind::Contract, "loss belongs to a different tape");
  check(loss.defined() && loss.id < static_cast<int>(nodes_.size()), ErrorKind::Contract,
        "undefined loss var");
  Node& ln = nodes_[static_cast<size_t>(loss.id)];
  check(ln.out.size() == 1, ErrorKind::Contract,
        "backward requires a scalar loss, got " + ln.out.shape_str());

  // Fresh sweep: clear node grads from any previous backward on this tape.
  for (Node& n : nodes_) n.grad = Tensor();

  ln.grad = Tensor::full(ln.out.shape(), 1.0, Dtype::f64);
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.requires_grad || !n.has_grad() || !n.backward) continue;
    n.backward(*this, n);
  }

  for (auto& [praw, pid] : param_nodes_) {
    (void)praw;
    Node& pn = nodes_[static_cast<size_t>(pid)];
    if (!pn.has_grad() || !pn.param) continue;
    Parameter& p = *pn.param;
    if (!p.trainable) continue;
    if (filter && !filter(p)) continue;
    double* dst = p.gradient.mutable_data();
    const double* src = pn.grad.data();
    for (size_t i = 0; i < p.gradient.size(); ++i) dst[i] += src[i];
  }
}

Tensor Tape::grad_of(Var v) const {
  check(v.tape == this, ErrorKind::Contract, "var belongs to a different tape");
  const Node& n = nodes_[static_cast<size_t>(v.id)];
  if (!n.has_grad()) return Tensor::zeros(n.out.shape(), Dtype::f64);
  return n.grad;
}

std::vector<const Tensor*> Tape::parent_tensors(const Node& n) const {
  std::vector<const Tensor*> pt;
  pt.reserve(n.parents.size());
  for (int pid : n.parents) pt.push_back(&nodes_[static_cast<size_t>(pid)].out);
  return pt;
}

bool Tape::replay_forward_identical() {
  for (Node& n : nodes_) {
    if (!n.forward) continue;
    Tensor redo = n.forward(parent_tensors(n));
    if (redo.shape() != n.out.shape()) return false;
    if (std::memcmp(redo.data(), n.out.data(), redo.size() * sizeof(double)) != 0) return false;
  }
  return true;
}

}  // namespace ous
