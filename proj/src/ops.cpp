// Differentiable op kernels. Every op validates shapes up front, computes the
// forward result in double, and registers a stateless backward closure that
// recomputes whatever intermediates it needs from the parent tensors (so a
// taped graph can be replayed or differentiated without hidden captures).
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "ous/tape.hpp"

namespace ous {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const RowMat>;
using MMap = Eigen::Map<RowMat>;
using Index = Eigen::Index;

Index idx(size_t v) { return static_cast<Index>(v); }

Dtype common_dtype(const std::vector<const Tensor*>& xs, const char* op) {
  Dtype d = xs.front()->dtype();
  for (const Tensor* x : xs)
    check(x->dtype() == d, ErrorKind::Contract, std::string(op) + ": mixed input dtypes");
  return d;
}

// Split a shape around one axis: outer = product of dims before `axis`,
// inner = product of dims after it.
void axis_split(const std::vector<size_t>& shape, size_t axis, size_t& outer, size_t& inner) {
  outer = 1;
  inner = 1;
  for (size_t i = 0; i < axis; ++i) outer *= shape[i];
  for (size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
}

// Numerically stable row softmax in place over the last axis.
void softmax_rows(double* p, size_t rows, size_t cols) {
  for (size_t r = 0; r < rows; ++r) {
    double* row = p + r * cols;
    double mx = row[0];
    for (size_t c = 1; c < cols; ++c) mx = std::max(mx, row[c]);
    double s = 0.0;
    for (size_t c = 0; c < cols; ++c) {
      row[c] = std::exp(row[c] - mx);
      s += row[c];
    }
    for (size_t c = 0; c < cols; ++c) row[c] /= s;
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// matmul

Var matmul(Var a, Var b) {
  Tape* t = a.tape;
  check(t == b.tape, ErrorKind::Contract, "matmul: operands on different tapes");
  auto fwd = [](const std::vector<const Tensor*>& in) {
    const Tensor& A = *in[0];
    const Tensor& B = *in[1];
    Dtype d = common_dtype(in, "matmul");
    if (A.rank() == 2 && B.rank() == 2) {
      check(A.extent(1) == B.extent(0), ErrorKind::Shape,
            "matmul: inner dims " + A.shape_str() + " x " + B.shape_str());
      size_t m = A.extent(0), k = A.extent(1), n = B.extent(1);
      Tensor C = Tensor::zeros({m, n}, d);
      MMap(C.mutable_data(), idx(m), idx(n)).noalias() =
          CMap(A.data(), idx(m), idx(k)) * CMap(B.data(), idx(k), idx(n));
      C.finalize("matmul");
      return C;
    }
    if (A.rank() == 3 && B.rank() == 2) {
      check(A.extent(2) == B.extent(0), ErrorKind::Shape,
            "matmul: inner dims " + A.shape_str() + " x " + B.shape_str());
      size_t bn = A.extent(0), m = A.extent(1), k = A.extent(2), n = B.extent(1);
      Tensor C = Tensor::zeros({bn, m, n}, d);
      CMap Bm(B.data(), idx(k), idx(n));
      for (size_t i = 0; i < bn; ++i)
        MMap(C.mutable_data() + i * m * n, idx(m), idx(n)).noalias() =
            CMap(A.data() + i * m * k, idx(m), idx(k)) * Bm;
      C.finalize("matmul");
      return C;
    }
    if (A.rank() == 3 && B.rank() == 3) {
      check(A.extent(0) == B.extent(0) && A.extent(2) == B.extent(1), ErrorKind::Shape,
            "matmul: batched dims " + A.shape_str() + " x " + B.shape_str());
      size_t bn = A.extent(0), m = A.extent(1), k = A.extent(2), n = B.extent(2);
      Tensor C = Tensor::zeros({bn, m, n}, d);
      for (size_t i = 0; i < bn; ++i)
        MMap(C.mutable_data() + i * m * n, idx(m), idx(n)).noalias() =
            CMap(A.data() + i * m * k, idx(m), idx(k)) * CMap(B.data() + i * k * n, idx(k), idx(n));
      C.finalize("matmul");
      return C;
    }
    fail(ErrorKind::Shape, "matmul: unsupported ranks " + A.shape_str() + " x " + B.shape_str());
  };
  auto bwd = [](Tape& tp, Node& n) {
    const Tensor& A = tp.node(n.parents[0]).out;
    const Tensor& B = tp.node(n.parents[1]).out;
    const Tensor& G = n.grad;
    if (A.rank() == 2) {
      size_t m = A.extent(0), k = A.extent(1), nn = B.extent(1);
      Tensor dA = Tensor::zeros(A.shape(), Dtype::f64);
      Tensor dB = Tensor::zeros(B.shape(), Dtype::f64);
      MMap(dA.mutable_data(), idx(m), idx(k)).noalias() =
          CMap(G.data(), idx(m), idx(nn)) * CMap(B.data(), idx(k), idx(nn)).transpose();
      MMap(dB.mutable_data(), idx(k), idx(nn)).noalias() =
          CMap(A.data(), idx(m), idx(k)).transpose() * CMap(G.data(), idx(m), idx(nn));
      tp.accumulate_grad(n.parents[0], dA);
      tp.accumulate_grad(n.parents[1], dB);
      return;
    }
    size_t bn = A.extent(0), m = A.extent(1), k = A.extent(2);
    size_t nn = (B.rank() == 2) ? B.extent(1) : B.extent(2);
    Tensor dA = Tensor::zeros(A.shape(), Dtype::f64);
    Tensor dB = Tensor::zeros(B.shape(), Dtype::f64);
    if (B.rank() == 2) {
      CMap Bm(B.data(), idx(k), idx(nn));
      MMap dBm(dB.mutable_data(), idx(k), idx(nn));
      for (size_t i = 0; i < bn; ++i) {
        CMap Gi(G.data() + i * m * nn, idx(m), idx(nn));
        MMap(dA.mutable_data() + i * m * k, idx(m), idx(k)).noalias() = Gi * Bm.transpose();
        dBm.noalias() += CMap(A.data() + i * m * k, idx(m), idx(k)).transpose() * Gi;
      }
    } else {
      for (size_t i = 0; i < bn; ++i) {
        CMap Gi(G.data() + i * m * nn, idx(m), idx(nn));
        CMap Ai(A.data() + i * m * k, idx(m), idx(k));
        CMap Bi(B.data() + i * k * nn, idx(k), idx(nn));
        MMap(dA.mutable_data() + i * m * k, idx(m), idx(k)).noalias() = Gi * Bi.transpose();
        MMap(dB.mutable_data() + i * k * nn, idx(k), idx(nn)).noalias() = Ai.transpose() * Gi;
      }
    }
    tp.accumulate_grad(n.parents[0], dA);
    tp.accumulate_grad(n.parents[1], dB);
  };
  return t->make_op({a.id, b.id}, fwd, bwd);
}

Var matmul_transb(Var a, Var b) {
  Tape* t = a.tape;
  check(t == b.tape, ErrorKind::Contract, "matmul_transb: operands on different tapes");
  auto fwd = [](const std::vector<const Tensor*>& in) {
    const Tensor& A = *in[0];
    const Tensor& B = *in[1];
    Dtype d = common_dtype(in, "matmul_transb");
    check(A.rank() == 2 && B.rank() == 2 && A.extent(1) == B.extent(1), ErrorKind::Shape,
          "matmul_transb: " + A.shape_str() + " x " + B.shape_str() + "^T");
    size_t m = A.extent(0), k = A.extent(1), n = B.extent(0);
    Tensor C = Tensor::zeros({m, n}, d);
    MMap(C.mutable_data(), idx(m), idx(n)).noalias() =
        CMap(A.data(), idx(m), idx(k)) * CMap(B.data(), idx(n), idx(k)).transpose();
    C.finalize("matmul_transb");
    return C;
  };
  auto bwd = [](Tape& tp, Node& n) {
    const Tensor& A = tp.node(n.parents[0]).out;
    const Tensor& B = tp.node(n.parents[1]).out;
    const Tensor& G = n.grad;
    size_t m = A.extent(0), k = A.extent(1), nn = B.extent(0);
    Tensor dA = Tensor::zeros(A.shape(), Dtype::f64);
    Tensor dB = Tensor::zeros(B.shape(), Dtype::f64);
    MMap(dA.mutable_data(), idx(m), idx(k)).noalias() =
        CMap(G.data(), idx(m), idx(nn)) * CMap(B.data(), idx(nn), idx(k));
    MMap(dB.mutable_data(), idx(nn), idx(k)).noalias() =
        CMap(G.data(), idx(m), idx(nn)).transpose() * CMap(A.data(), idx(m), idx(k));
    tp.accumulate_grad(n.parents[0], dA);
    tp.accumulate_grad(n.parents[1], dB);
  };
  return t->make_op({a.id, b.id}, fwd, bwd);
}

// ---------------------------------------------------------------------------
// elementwise arithmetic

namespace {

// b's shape must equal a's shape or be a suffix of it (row broadcast).
void check_suffix(const Tensor& a, const Tensor& b, const char* op) {
  check(b.rank() <= a.rank(), ErrorKind::Shape, std::string(op) + ": rhs rank exceeds lhs");
  size_t off = a.rank() - b.rank();
  for (size_t i = 0; i < b.rank(); ++i)
    check(a.extent(off + i) == b.extent(i), ErrorKind::Shape,
          std::string(op) + ": shapes " + a.shape_str() + " vs " + b.shape_str());
}

}  // namespace

Var add(Var a, Var b) {
  Tape* t = a.tape;
  check(t == b.tape, ErrorKind::Contract, "add: operands on different tapes");
  auto fwd = [](const std::vector<const Tensor*>& in) {
    const Tensor& A = *in[0];
    const Tensor& B = *in[1];
    Dtype d = common_dtype(in, "add");
    check_suffix(A, B, "add");
    Tensor C = Tensor::zeros(A.shape(), d);
    size_t bs = B.size(), reps = A.size() / bs;
    double* c = C.mutable_data();
    const double* pa = A.data();
    const double* pb = B.data();
    for (size_t r = 0; r < reps; ++r)
      for (size_t i = 0; i < bs; ++i) c[r * bs + i] = pa[r * bs + i] + pb[i];
    C.finalize("add");
    return C;
  };
  auto bwd = [](Tape& tp, Node& n) {
    const Tensor& A = tp.node(n.parents[0]).out;
    const Tensor& B = tp.node(n.parents[1]).out;
    tp.accumulate_grad(n.parents[0], n.grad);
    Tensor dB = Tensor::zeros(B.shape(), Dtype::f64);
    size_t bs = B.size(), reps = A.size() / bs;
    double* db = dB.mutable_data();
    const double* g = n.grad.data();
    for (size_t r = 0; r < reps; ++r)
      for (size_t i = 0; i < bs; ++i) db[i] += g[r * bs + i];
    tp.accumulate_grad(n.parents[1], dB);
  };
  return t->make_op({a.id, b.id}, fwd, bwd);
}

Var sub(Var a, Var b) {
  Tape* t = a.tape;
  check(t == b.tape, ErrorKind::Contract, "sub: operands on different tapes");
  auto fwd = [](const std::vector<const Tensor*>& in) {
    const Tensor& A = *in[0];
    const Tensor& B = *in[1];
    Dtype d = common_dtype(in, "sub");
    check(A.shape() == B.shape(), ErrorKind::Shape,
          "sub: shapes " + A.shape_str() + " vs " + B.shape_str());
    Tensor C = Tensor::zeros(A.shape(), d);
    double* c = C.mutable_data();
    for (size_t i = 0; i < A.size(); ++i) c[i] = A.data()[i] - B.data()[i];
    C.finalize("sub");
    return C;
  };
  auto bwd = [](Tape& tp, Node& n) {
    tp.accumulate_grad(n.parents[0], n.grad);
    Tensor dB = Tensor::zeros(n.grad.shape(), Dtype::f64);
    double* db = dB.mutable_data();
    for (size_t i = 0; i < dB.size(); ++i) db[i] = -n.grad.data()[i];
    tp.accumulate_grad(n.parents[1], dB);
  };
  return t->make_op({a.id, b.id}, fwd, bwd);
}

Var mul(Var a, Var b) {
  Tape* t = a.tape;
  check(t == b.tape, ErrorKind::Contract, "mul: operands on different tapes");
  auto fwd = [](const std::vector<const Tensor*>& in) {
    const Tensor& A = *in[0];
    const Tensor& B = *in[1];
    Dtype d = common_dtype(in, "mul");
    check(A.shape() == B.shape(), ErrorKind::Shape,
          "mul: shapes " + A.shape_str() + " vs " + B.shape_str());
    Tensor C = Tensor::zeros(A.shape(), d);
    double* c = C.mutable_data();
    for (size_t i = 0; i < A.size(); ++i) c[i] = A.data()[i] * B.data()[i];
    C.finalize("mul");
    return C;
  };
  auto bwd = [](Tape& tp, Node& n) {
    const Tensor& A = tp.node(n.parents[0]).out;
    const Tensor& B = tp.node(n.parents[1]).out;
    Tensor dA = Tensor::zeros(A.shape(), Dtype::f64);
    Tensor dB = Tensor::zeros(B.shape(), Dtype::f64);
    const double* g = n.grad.data();
    for (size_t i = 0; i < A.size(); ++i) {
      dA.mutable_data()[i] = g[i] * B.data()[i];
      dB.mutable_data()[i] = g[i] * A.data()[i];
    }
    tp.accumulate_grad(n.parents[0], dA);
    tp.accumulate_grad(n.parents[1], dB);
  };
  return t->make_op({a.id, b.id}, fwd, bwd);
}

Var affine(Var x, double scale, double shift) {
  auto fwd = [scale, shift](const std::vector<const Tensor*>& in) {
    const Tensor& X = *in[0];
    Tensor Y = Tensor::zeros(X.shape(), X.dtype());
    double* y = Y.mutable_data();
    for (size_t i = 0; i < X.size(); ++i) y[i] = scale * X.data()[i] + shift;
    Y.finalize("affine");
    return Y;
  };
  auto bwd = [scale](Tape& tp, Node& n) {
    Tensor dX = Tensor::zeros(n.grad.shape(), Dtype::f64);
    double* d = dX.mutable_data();
    for (size_t i = 0; i < dX.size(); ++i) d[i] = scale * n.grad.data()[i];
    tp.accumulate_grad(n.parents[0], dX);
  };
  return x.tape->make_op({x.id}, fwd, bwd);
}

Var neg(Var x) { return affine(x, -1.0, 0.0); }

// ---------------------------------------------------------------------------
// shape surgery

Var concat(const std::vector<Var>& xs, size_t axis) {
  check(!xs.empty(), ErrorKind::Contract, "concat: empty input list");
  Tape* t = xs[0].tape;
  std::vector<int> ids;
  for (const Var& v : xs) {
    check(v.tape == t, ErrorKind::Contract, "concat: operands on different tapes");
    ids.push_back(v.id);
  }
  auto fwd = [axis](const std::vector<const Tensor*>& in) {
    const Tensor& first = *in[0];
    check(axis < first.rank(), ErrorKind::Shape, "concat: axis out of range");
    Dtype d = common_dtype(in, "concat");
    size_t total_axis = 0;
    for (const Tensor* x : in) {
      check(x->rank() == first.rank(), ErrorKind::Shape, "concat: rank mismatch");
      for (size_t i = 0; i < first.rank(); ++i)
        if (i != axis)
          check(x->extent(i) == first.extent(i), ErrorKind::Shape,
                "concat: shapes " + first.shape_str() + " vs " + x->shape_str());
      total_axis += x->extent(axis);
    }
    std::vector<size_t> oshape = first.shape();
    oshape[axis] = total_axis;
    Tensor Y = Tensor::zeros(oshape, d);
    size_t outer, inner;
    axis_split(first.shape(), axis, outer, inner);
    size_t out_stride = total_axis * inner;
    size_t off = 0;
    for (const Tensor* x : in) {
      size_t blk = x->extent(axis) * inner;
      for (size_t o = 0; o < outer; ++o)
        std::memcpy(Y.mutable_data() + o * out_stride + off, x->data() + o * blk,
                    blk * sizeof(double));
      off += blk;
    }
    Y.finalize("concat");
    return Y;
  };
  auto bwd = [axis](Tape& tp, Node& n) {
    size_t outer, inner;
    axis_split(n.out.shape(), axis, outer, inner);
    size_t out_stride = n.out.extent(axis) * inner;
    size_t off = 0;
    for (int pid : n.parents) {
      const Tensor& X = tp.node(pid).out;
      size_t blk = X.extent(axis) * inner;
      Tensor dX = Tensor::zeros(X.shape(), Dtype::f64);
      for (size_t o = 0; o < outer; ++o)
        std::memcpy(dX.mutable_data() + o * blk, n.grad.data() + o * out_stride + off,
                    blk * sizeof(double));
      tp.accumulate_grad(pid, dX);
      off += blk;
    }
  };
  return t->make_op(std::move(ids), fwd, bwd);
}

Var slice(Var x, size_t axis, size_t start, size_t len) {
  auto fwd = [axis, start, len](const std::vector<const Tensor*>& in) {
    const Tensor& X = *in[0];
    check(axis < X.rank(), ErrorKind::Shape, "slice: axis out of range");
    check(len >= 1 && start + len <= X.extent(axis), ErrorKind::Shape,
          "slice: range [" + std::to_string(start) + "," + std::to_string(start + len) +
              ") exceeds extent " + std::to_string(X.extent(axis)));
    std::vector<size_t> oshape = X.shape();
    oshape[axis] = len;
    Tensor Y = Tensor::zeros(oshape, X.dtype());
    size_t outer, inner;
    axis_split(X.shape(), axis, outer, inner);
    size_t in_stride = X.extent(axis) * inner;
    size_t blk = len * inner;
    for (size_t o = 0; o < outer; ++o)
      std::memcpy(Y.mutable_data() + o * blk, X.data() + o * in_stride + start * inner,
                  blk * sizeof(double));
    Y.finalize("slice");
    return Y;
  };
  auto bwd = [axis, start, len](Tape& tp, Node& n) {
    const Tensor& X = tp.node(n.parents[0]).out;
    Tensor dX = Tensor::zeros(X.shape(), Dtype::f64);
    size_t outer, inner;
    axis_split(X.shape(), axis, outer, inner);
    size_t in_stride = X.extent(axis) * inner;
    size_t blk = len * inner;
    for (size_t o = 0; o < outer; ++o)
      std::memcpy(dX.mutable_data() + o * in_stride + start * inner, n.grad.data() + o * blk,
                  blk * sizeof(double));
    tp.accumulate_grad(n.parents[0], dX);
  };
  return x.tape->make_op({x.id}, fwd, bwd);
}

Var reshape(Var x, std::vector<size_t> shape) {
  auto fwd = [shape](const std::vector<const Tensor*>& in) { return in[0]->reshaped(shape); };
  auto bwd = [](Tape& tp, Node& n) {
    const Tensor& X = tp.node(n.parents[0]).out;
    tp.accumulate_grad(n.parents[0], n.grad.reshaped(X.shape()));
  };
  return x.tape->make_op({x.id}, fwd, bwd);
}

Var broadcast0(Var x, size_t batch) {
  check(batch >= 1, ErrorKind::Shape, "broadcast0: batch must be >= 1");
  auto fwd = [batch](const std::vector<const Tensor*>& in) {
    const Tensor& X = *in[0];
    std::vector<size_t> oshape;
    oshape.push_back(batch);
    for (size_t i = 0; i < X.rank(); ++i) oshape.push_back(X.extent(i));
    Tensor Y = Tensor::zeros(oshape, X.dtype());
    for (size_t b = 0; b < batch; ++b)
      std::memcpy(Y.mutable_data() + b * X.size(), X.data(), X.size() * sizeof(double));
    Y.finalize("broadcast0");
    return Y;
  };
  auto bwd = [batch](Tape& tp, Node& n) {
    const Tensor& X = tp.node(n.parents[0]).out;
    Tensor dX = Tensor::zeros(X.shape(), Dtype::f64);
    double* d = dX.mutable_data();
    const double* g = n.grad.data();
    for (size_t b = 0; b < batch; ++b)
      for (size_t i = 0; i < X.size(); ++i) d[i] += g[b * X.size() + i];
    tp.accumulate_grad(n.parents[0], dX);
  };
  return x.tape->make_op({x.id}, fwd, bwd);
}

// ---------------------------------------------------------------------------
// reductions

namespace {

Var reduce_axis(Var x, size_t axis, bool mean) {
  auto fwd = [axis, mean](const std::vector<const Tensor*>& in) {
    const Tensor& X = *in[0];
    check(axis < X.rank(), ErrorKind::Shape, "reduce: axis out of range");
    std::vector<size_t> oshape;
    for (size_t i = 0; i < X.rank(); ++i)
      if (i != axis) oshape.push_back(X.extent(i));
    Tensor Y = Tensor::zeros(oshape, X.dtype());
    size_t outer, inner;
    axis_split(X.shape(), axis, outer, inner);
    size_t n = X.extent(axis);
    double scale = mean ? 1.0 / static_cast<double>(n) : 1.0;
    double* y = Y.mutable_data();
    const double* px = X.data();
    for (size_t o = 0; o < outer; ++o)
      for (size_t a = 0; a < n; ++a)
        for (size_t i = 0; i < inner; ++i) y[o * inner + i] += px[(o * n + a) * inner + i];
    for (size_t i = 0; i < Y.size(); ++i) y[i] *= scale;
    Y.finalize(mean ? "mean_axis" : "sum_axis");
    return Y;
  };
  auto bwd = [axis, mean](Tape& tp, Node& n) {
    const Tensor& X = tp.node(n.parents[0]).out;
    Tensor dX = Tensor::zeros(X.shape(), Dtype::f64);
    size_t outer, inner;
    axis_split(X.shape(), axis, outer, inner);
    size_t cnt = X.extent(axis);
    double scale = mean ? 1.0 / static_cast<double>(cnt) : 1.0;
    double* d = dX.mutable_data();
    const double* g = n.grad.data();
    for (size_t o = 0; o < outer; ++o)
      for (size_t a = 0; a < cnt; ++a)
        for (size_t i = 0; i < inner; ++i) d[(o * cnt + a) * inner + i] = g[o * inner + i] * scale;
    tp.accumulate_grad(n.parents[0], dX);
  };
  return x.tape->make_op({x.id}, fwd, bwd);
}

}  // namespace

Var mean_axis(Var x, size_t axis) { return reduce_axis(x, axis, true); }
Var sum_axis(Var x, size_t axis) { return reduce_axis(x, axis, false); }

Var mean_all(Var x) {
  auto fwd = [](const std::vector<const Tensor*>& in) {
    const Tensor& X = *in[0];
    double s = 0.0;
    for (size_t i = 0; i < X.size(); ++i) s += X.data()[i];
    Tensor Y = Tensor::scalar(s / static_cast<double>(X.size()), X.dtype());
    Y.finalize("mean_all");
    return Y;
  };
  auto bwd = [](Tape& tp, Node& n) {
    const Tensor& X = tp.node(n.parents[0]).out;
    double g = n.grad.data()[0] / static_cast<double>(X.size());
    tp.accumulate_grad(n.parents[0], Tensor::full(X.shape(), g, Dtype::f64));
  };
  return x.tape->make_op({x.id}, fwd, bwd);
}

// ---------------------------------------------------------------------------
// pointwise nonlinearities

namespace {

Var pointwise(Var x, const char* name, double (*f)(double),
              std::function<double(double xi, double yi)> dydx) {
  auto fwd = [f, name](const std::vector<const Tensor*>& in) {
    const Tensor& X = *in[0];
    Tensor Y = Tensor::zeros(X.shape(), X.dtype());
    double* y = Y.mutable_data();
    for (size_t i = 0; i < X.size(); ++i) y[i] = f(X.data()[i]);
    Y.finalize(name);
    return Y;
  };
  auto bwd = [dydx](Tape& tp, Node& n) {
    const Tensor& X = tp.node(n.parents[0]).out;
    Tensor dX = Tensor::zeros(X.shape(), Dtype::f64);
    double* d = dX.mutable_data();
    for (size_t i = 0; i < X.size(); ++i)
      d[i] = n.grad.data()[i] * dydx(X.data()[i], n.out.data()[i]);
    tp.accumulate_grad(n.parents[0], dX);
  };
  return x.tape->make_op({x.id}, fwd, bwd);
}

double sigmoid_scalar(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  double e = std::exp(v);
  return e / (1.0 + e);
}

}  // namespace

Var relu(Var x) {
  return pointwise(
      x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
      [](double xi, double) { return xi > 0.0 ? 1.0 : 0.0; });
}

Var tanh_op(Var x) {
  return pointwise(
      x, "tanh", [](double v) { return std::tanh(v); },
      [](double, double yi) { return 1.0 - yi * yi; });
}

Var sigmoid(Var x) {
  return pointwise(
      x, "sigmoid", [](double v) { return sigmoid_scalar(v); },
      [](double, double yi) { return yi * (1.0 - yi); });
}

Var exp_op(Var x) {
  return pointwise(
      x, "exp", [](double v) { return std::exp(v); }, [](double, double yi) { return yi; });
}

Var log_op(Var x) {
  return pointwise(
      x, "log", [](double v) { return std::log(v); }, [](double xi, double) { return 1.0 / xi; });
}

// ---------------------------------------------------------------------------
// softmax family

Var softmax_last(Var x) {
  auto fwd = [](const std::vector<const Tensor*>& in) {
    const Tensor& X = *in[0];
    check(X.rank() >= 1, ErrorKind::Shape, "softmax: rank-0 input");
    Tensor Y = X.clone();
    size_t cols = X.extent(X.rank() - 1);
    softmax_rows(Y.mutable_data(), X.size() / cols, cols);
    Y.finalize("softmax");
    return Y;
  };
  auto bwd = [](Tape& tp, Node& n) {
    const Tensor& P = n.out;
    size_t cols = P.extent(P.rank() - 1);
    size_t rows = P.size() / cols;
    Tensor dX = Tensor::zeros(P.shape(), Dtype::f64);
    const double* g = n.grad.data();
    const double* p = P.data();
    double* d = dX.mutable_data();
    for (size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (size_t c = 0; c < cols; ++c) dot += g[r * cols + c] * p[r * cols + c];
      for (size_t c = 0; c < cols; ++c)
        d[r * cols + c] = p[r * cols + c] * (g[r * cols + c] - dot);
    }
    tp.accumulate_grad(n.parents[0], dX);
  };
  return x.tape->make_op({x.id}, fwd, bwd);
}

Var log_softmax_last(Var x) {
  auto fwd = [](const std::vector<const Tensor*>& in) {
    const Tensor& X = *in[0];
    check(X.rank() >= 1, ErrorKind::Shape, "log_softmax: rank-0 input");
    Tensor Y = X.clone();
    size_t cols = X.extent(X.rank() - 1);
    size_t rows = X.size() / cols;
    double* y = Y.mutable_data();
    for (size_t r = 0; r < rows; ++r) {
      double* row = y + r * cols;
      double mx = row[0];
      for (size_t c = 1; c < cols; ++c) mx = std::max(mx, row[c]);
      double s = 0.0;
      for (size_t c = 0; c < cols; ++c) s += std::exp(row[c] - mx);
      double lse = mx + std::log(s);
      for (size_t c = 0; c < cols; ++c) row[c] -= lse;
    }
    Y.finalize("log_softmax");
    return Y;
  };
  auto bwd = [](Tape& tp, Node& n) {
    const Tensor& Y = n.out;  // log-probs; exp(Y) = softmax
    size_t cols = Y.extent(Y.rank() - 1);
    size_t rows = Y.size() / cols;
    Tensor dX = Tensor::zeros(Y.shape(), Dtype::f64);
    const double* g = n.grad.data();
    const double* y = Y.data();
    double* d = dX.mutable_data();
    for (size_t r = 0; r < rows; ++r) {
      double gsum = 0.0;
      for (size_t c = 0; c < cols; ++c) gsum += g[r * cols + c];
      for (size_t c = 0; c < cols; ++c)
        d[r * cols + c] = g[r * cols + c] - std::exp(y[r * cols + c]) * gsum;
    }
    tp.accumulate_grad(n.parents[0], dX);
  };
  return x.tape->make_op({x.id}, fwd, bwd);
}

// ---------------------------------------------------------------------------
// layer norm

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  Tape* t = x.tape;
  check(t == gain.tape && t == bias.tape, ErrorKind::Contract,
        "layer_norm: operands on different tapes");
  auto fwd = [eps](const std::vector<const Tensor*>& in) {
    const Tensor& X = *in[0];
    const Tensor& G = *in[1];
    const Tensor& B = *in[2];
    check(X.rank() >= 1, ErrorKind::Shape, "layer_norm: rank-0 input");
    size_t D = X.extent(X.rank() - 1);
    check(G.rank() == 1 && G.extent(0) == D && B.rank() == 1 && B.extent(0) == D,
          ErrorKind::Shape, "layer_norm: gain/bias must be [last-axis] vectors");
    Dtype d = common_dtype(in, "layer_norm");
    Tensor Y = Tensor::zeros(X.shape(), d);
    size_t rows = X.size() / D;
    const double* px = X.data();
    double* py = Y.mutable_data();
    for (size_t r = 0; r < rows; ++r) {
      const double* row = px + r * D;
      double mu = 0.0;
      for (size_t c = 0; c < D; ++c) mu += row[c];
      mu /= static_cast<double>(D);
      double var = 0.0;
      for (size_t c = 0; c < D; ++c) var += (row[c] - mu) * (row[c] - mu);
      var /= static_cast<double>(D);
      double inv = 1.0 / std::sqrt(var + eps);
      for (size_t c = 0; c < D; ++c)
        py[r * D + c] = G.data()[c] * ((row[c] - mu) * inv) + B.data()[c];
    }
    Y.finalize("layer_norm");
    return Y;
  };
  auto bwd = [eps](Tape& tp, Node& n) {
    const Tensor& X = tp.node(n.parents[0]).out;
    const Tensor& G = tp.node(n.parents[1]).out;
    size_t D = X.extent(X.rank() - 1);
    size_t rows = X.size() / D;
    Tensor dX = Tensor::zeros(X.shape(), Dtype::f64);
    Tensor dG = Tensor::zeros(G.shape(), Dtype::f64);
    Tensor dB = Tensor::zeros(G.shape(), Dtype::f64);
    const double* px = X.data();
    const double* g = n.grad.data();
    for (size_t r = 0; r < rows; ++r) {
      const double* row = px + r * D;
      const double* grow = g + r * D;
      double mu = 0.0;
      for (size_t c = 0; c < D; ++c) mu += row[c];
      mu /= static_cast<double>(D);
      double var = 0.0;
      for (size_t c = 0; c < D; ++c) var += (row[c] - mu) * (row[c] - mu);
      var /= static_cast<double>(D);
      double inv = 1.0 / std::sqrt(var + eps);
      // dxh = gain * dy; dx = inv * (dxh - mean(dxh) - xh * mean(dxh * xh))
      double m1 = 0.0, m2 = 0.0;
      for (size_t c = 0; c < D; ++c) {
        double xh = (row[c] - mu) * inv;
        double dxh = G.data()[c] * grow[c];
        m1 += dxh;
        m2 += dxh * xh;
        dG.mutable_data()[c] += grow[c] * xh;
        dB.mutable_data()[c] += grow[c];
      }
      m1 /= static_cast<double>(D);
      m2 /= static_cast<double>(D);
      for (size_t c = 0; c < D; ++c) {
        double xh = (row[c] - mu) * inv;
        double dxh = G.data()[c] * grow[c];
        dX.mutable_data()[r * D + c] = inv * (dxh - m1 - xh * m2);
      }
    }
    tp.accumulate_grad(n.parents[0], dX);
    tp.accumulate_grad(n.parents[1], dG);
    tp.accumulate_grad(n.parents[2], dB);
  };
  return t->make_op({x.id, gain.id, bias.id}, fwd, bwd);
}

// ---------------------------------------------------------------------------
// attention

Var scaled_dot_attention(Var q, Var k, Var v) {
  Tape* t = q.tape;
  check(t == k.tape && t == v.tape, ErrorKind::Contract,
        "attention: operands on different tapes");
  auto fwd = [](const std::vector<const Tensor*>& in) {
    const Tensor& Q = *in[0];
    const Tensor& K = *in[1];
    const Tensor& V = *in[2];
    Dtype d = common_dtype(in, "attention");
    check(Q.rank() == 2 && K.rank() == 2 && V.rank() == 2, ErrorKind::Shape,
          "attention: expects 2-D q,k,v");
    check(Q.extent(1) == K.extent(1), ErrorKind::Shape, "attention: q/k width mismatch");
    check(K.extent(0) == V.extent(0), ErrorKind::Shape, "attention: k/v row mismatch");
    size_t nq = Q.extent(0), nk = K.extent(0), dk = Q.extent(1), dv = V.extent(1);
    double scale = 1.0 / std::sqrt(static_cast<double>(dk));
    std::vector<double> P(nq * nk);
    MMap Pm(P.data(), idx(nq), idx(nk));
    Pm.noalias() = CMap(Q.data(), idx(nq), idx(dk)) * CMap(K.data(), idx(nk), idx(dk)).transpose();
    Pm *= scale;
    softmax_rows(P.data(), nq, nk);
    Tensor O = Tensor::zeros({nq, dv}, d);
    MMap(O.mutable_data(), idx(nq), idx(dv)).noalias() = Pm * CMap(V.data(), idx(nk), idx(dv));
    O.finalize("attention");
    return O;
  };
  auto bwd = [](Tape& tp, Node& n) {
    const Tensor& Q = tp.node(n.parents[0]).out;
    const Tensor& K = tp.node(n.parents[1]).out;
    const Tensor& V = tp.node(n.parents[2]).out;
    size_t nq = Q.extent(0), nk = K.extent(0), dk = Q.extent(1), dv = V.extent(1);
    double scale = 1.0 / std::sqrt(static_cast<double>(dk));
    std::vector<double> P(nq * nk);
    MMap Pm(P.data(), idx(nq), idx(nk));
    Pm.noalias() = CMap(Q.data(), idx(nq), idx(dk)) * CMap(K.data(), idx(nk), idx(dk)).transpose();
    Pm *= scale;
    softmax_rows(P.data(), nq, nk);
    CMap Gm(n.grad.data(), idx(nq), idx(dv));
    Tensor dQ = Tensor::zeros(Q.shape(), Dtype::f64);
    Tensor dK = Tensor::zeros(K.shape(), Dtype::f64);
    Tensor dV = Tensor::zeros(V.shape(), Dtype::f64);
    MMap(dV.mutable_data(), idx(nk), idx(dv)).noalias() = Pm.transpose() * Gm;
    RowMat dP = Gm * CMap(V.data(), idx(nk), idx(dv)).transpose();
    RowMat dS = (dP.array() * Pm.array()).matrix();
    Eigen::VectorXd rowsum = dS.rowwise().sum();
    dS.noalias() -= (rowsum * Eigen::RowVectorXd::Ones(idx(nk))).cwiseProduct(Pm.matrix());
    dS *= scale;
    MMap(dQ.mutable_data(), idx(nq), idx(dk)).noalias() = dS * CMap(K.data(), idx(nk), idx(dk));
    MMap(dK.mutable_data(), idx(nk), idx(dk)).noalias() =
        dS.transpose() * CMap(Q.data(), idx(nq), idx(dk));
    tp.accumulate_grad(n.parents[0], dQ);
    tp.accumulate_grad(n.parents[1], dK);
    tp.accumulate_grad(n.parents[2], dV);
  };
  return t->make_op({q.id, k.id, v.id}, fwd, bwd);
}

namespace {

// Head h of a [n, D] block copied to/from the packed [n, dh] view.
void gather_head(const double* src, double* dst, size_t n, size_t D, size_t h, size_t dh) {
  for (size_t r = 0; r < n; ++r)
    std::memcpy(dst + r * dh, src + r * D + h * dh, dh * sizeof(double));
}

void scatter_head(const double* src, double* dst, size_t n, size_t D, size_t h, size_t dh) {
  for (size_t r = 0; r < n; ++r)
    for (size_t c = 0; c < dh; ++c) dst[r * D + h * dh + c] += src[r * dh + c];
}

}  // namespace

Var multi_head_attention(Var q, Var k, Var v, size_t heads) {
  Tape* t = q.tape;
  check(t == k.tape && t == v.tape, ErrorKind::Contract,
        "multi_head_attention: operands on different tapes");
  check(heads >= 1, ErrorKind::Shape, "multi_head_attention: heads must be >= 1");
  auto fwd = [heads](const std::vector<const Tensor*>& in) {
    const Tensor& Q = *in[0];
    const Tensor& K = *in[1];
    const Tensor& V = *in[2];
    Dtype d = common_dtype(in, "multi_head_attention");
    check(Q.rank() == 3 && K.rank() == 3 && V.rank() == 3, ErrorKind::Shape,
          "multi_head_attention: expects [batch, tokens, width]");
    size_t B = Q.extent(0), nq = Q.extent(1), D = Q.extent(2), nk = K.extent(1);
    check(K.extent(0) == B && V.extent(0) == B, ErrorKind::Shape,
          "multi_head_attention: batch mismatch");
    check(K.extent(2) == D && V.extent(2) == D && V.extent(1) == nk, ErrorKind::Shape,
          "multi_head_attention: width/token mismatch");
    check(D % heads == 0, ErrorKind::Shape, "multi_head_attention: width not divisible by heads");
    size_t dh = D / heads;
    double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    Tensor O = Tensor::zeros({B, nq, D}, d);
    std::vector<double> qh(nq * dh), kh(nk * dh), vh(nk * dh), oh(nq * dh), P(nq * nk);
    for (size_t b = 0; b < B; ++b) {
      for (size_t h = 0; h < heads; ++h) {
        gather_head(Q.data() + b * nq * D, qh.data(), nq, D, h, dh);
        gather_head(K.data() + b * nk * D, kh.data(), nk, D, h, dh);
        gather_head(V.data() + b * nk * D, vh.data(), nk, D, h, dh);
        MMap Pm(P.data(), idx(nq), idx(nk));
        Pm.noalias() =
            CMap(qh.data(), idx(nq), idx(dh)) * CMap(kh.data(), idx(nk), idx(dh)).transpose();
        Pm *= scale;
        softmax_rows(P.data(), nq, nk);
        MMap(oh.data(), idx(nq), idx(dh)).noalias() = Pm * CMap(vh.data(), idx(nk), idx(dh));
        for (size_t r = 0; r < nq; ++r)
          std::memcpy(O.mutable_data() + (b * nq + r) * D + h * dh, oh.data() + r * dh,
                      dh * sizeof(double));
      }
    }
    O.finalize("multi_head_attention");
    return O;
  };
  auto bwd = [heads](Tape& tp, Node& n) {
    const Tensor& Q = tp.node(n.parents[0]).out;
    const Tensor& K = tp.node(n.parents[1]).out;
    const Tensor& V = tp.node(n.parents[2]).out;
    size_t B = Q.extent(0), nq = Q.extent(1), D = Q.extent(2), nk = K.extent(1);
    size_t dh = D / heads;
    double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    Tensor dQ = Tensor::zeros(Q.shape(), Dtype::f64);
    Tensor dK = Tensor::zeros(K.shape(), Dtype::f64);
    Tensor dV = Tensor::zeros(V.shape(), Dtype::f64);
    std::vector<double> qh(nq * dh), kh(nk * dh), vh(nk * dh), gh(nq * dh), P(nq * nk);
    std::vector<double> dqh(nq * dh), dkh(nk * dh), dvh(nk * dh);
    for (size_t b = 0; b < B; ++b) {
      for (size_t h = 0; h < heads; ++h) {
        gather_head(Q.data() + b * nq * D, qh.data(), nq, D, h, dh);
        gather_head(K.data() + b * nk * D, kh.data(), nk, D, h, dh);
        gather_head(V.data() + b * nk * D, vh.data(), nk, D, h, dh);
        gather_head(n.grad.data() + b * nq * D, gh.data(), nq, D, h, dh);
        MMap Pm(P.data(), idx(nq), idx(nk));
        Pm.noalias() =
            CMap(qh.data(), idx(nq), idx(dh)) * CMap(kh.data(), idx(nk), idx(dh)).transpose();
        Pm *= scale;
        softmax_rows(P.data(), nq, nk);
        CMap Gm(gh.data(), idx(nq), idx(dh));
        MMap(dvh.data(), idx(nk), idx(dh)).noalias() = Pm.transpose() * Gm;
        RowMat dP = Gm * CMap(vh.data(), idx(nk), idx(dh)).transpose();
        RowMat dS = (dP.array() * Pm.array()).matrix();
        Eigen::VectorXd rowsum = dS.rowwise().sum();
        dS.noalias() -= (rowsum * Eigen::RowVectorXd::Ones(idx(nk))).cwiseProduct(Pm.matrix());
        dS *= scale;
        MMap(dqh.data(), idx(nq), idx(dh)).noalias() = dS * CMap(kh.data(), idx(nk), idx(dh));
        MMap(dkh.data(), idx(nk), idx(dh)).noalias() =
            dS.transpose() * CMap(qh.data(), idx(nq), idx(dh));
        scatter_head(dqh.data(), dQ.mutable_data() + b * nq * D, nq, D, h, dh);
        scatter_head(dkh.data(), dK.mutable_data() + b * nk * D, nk, D, h, dh);
        scatter_head(dvh.data(), dV.mutable_data() + b * nk * D, nk, D, h, dh);
      }
    }
    tp.accumulate_grad(n.parents[0], dQ);
    tp.accumulate_grad(n.parents[1], dK);
    tp.accumulate_grad(n.parents[2], dV);
  };
  return t->make_op({q.id, k.id, v.id}, fwd, bwd);
}

// ---------------------------------------------------------------------------
// normalized similarity

namespace {
constexpr double kNormGuard = 1e-12;
constexpr double kNormFloor = 1e-300;  // below this a vector is treated as exactly zero
}  // namespace

Var cosine(Var a, Var b) {
  Tape* t = a.tape;
  check(t == b.tape, ErrorKind::Contract, "cosine: operands on different tapes");
  auto fwd = [](const std::vector<const Tensor*>& in) {
    const Tensor& A = *in[0];
    const Tensor& B = *in[1];
    Dtype d = common_dtype(in, "cosine");
    check(A.size() == B.size(), ErrorKind::Shape,
          "cosine: sizes " + A.shape_str() + " vs " + B.shape_str());
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < A.size(); ++i) {
      dot += A.data()[i] * B.data()[i];
      na += A.data()[i] * A.data()[i];
      nb += B.data()[i] * B.data()[i];
    }
    na = std::sqrt(na);
    nb = std::sqrt(nb);
    Tensor Y = Tensor::scalar(dot / ((na + kNormGuard) * (nb + kNormGuard)), d);
    Y.finalize("cosine");
    return Y;
  };
  auto bwd = [](Tape& tp, Node& n) {
    const Tensor& A = tp.node(n.parents[0]).out;
    const Tensor& B = tp.node(n.parents[1]).out;
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < A.size(); ++i) {
      dot += A.data()[i] * B.data()[i];
      na += A.data()[i] * A.data()[i];
      nb += B.data()[i] * B.data()[i];
    }
    na = std::sqrt(na);
    nb = std::sqrt(nb);
    double denom = (na + kNormGuard) * (nb + kNormGuard);
    double c = dot / denom;
    double g = n.grad.data()[0];
    Tensor dA = Tensor::zeros(A.shape(), Dtype::f64);
    Tensor dB = Tensor::zeros(B.shape(), Dtype::f64);
    double ca = (na > kNormFloor) ? c / (na * (na + kNormGuard)) : 0.0;
    double cb = (nb > kNormFloor) ? c / (nb * (nb + kNormGuard)) : 0.0;
    for (size_t i = 0; i < A.size(); ++i) {
      dA.mutable_data()[i] = g * (B.data()[i] / denom - ca * A.data()[i]);
      dB.mutable_data()[i] = g * (A.data()[i] / denom - cb * B.data()[i]);
    }
    tp.accumulate_grad(n.parents[0], dA);
    tp.accumulate_grad(n.parents[1], dB);
  };
  return t->make_op({a.id, b.id}, fwd, bwd);
}

Var l2_normalize_rows(Var x, double guard) {
  check(guard > 0.0, ErrorKind::Domain, "l2_normalize: guard must be positive");
  auto fwd = [guard](const std::vector<const Tensor*>& in) {
    const Tensor& X = *in[0];
    check(X.rank() >= 1, ErrorKind::Shape, "l2_normalize: rank-0 input");
    size_t D = X.extent(X.rank() - 1);
    size_t rows = X.size() / D;
    Tensor Y = Tensor::zeros(X.shape(), X.dtype());
    for (size_t r = 0; r < rows; ++r) {
      const double* row = X.data() + r * D;
      double nsq = 0.0;
      for (size_t c = 0; c < D; ++c) nsq += row[c] * row[c];
      double inv = 1.0 / (std::sqrt(nsq) + guard);
      for (size_t c = 0; c < D; ++c) Y.mutable_data()[r * D + c] = row[c] * inv;
    }
    Y.finalize("l2_normalize");
    return Y;
  };
  auto bwd = [guard](Tape& tp, Node& n) {
    const Tensor& X = tp.node(n.parents[0]).out;
    size_t D = X.extent(X.rank() - 1);
    size_t rows = X.size() / D;
    Tensor dX = Tensor::zeros(X.shape(), Dtype::f64);
    for (size_t r = 0; r < rows; ++r) {
      const double* row = X.data() + r * D;
      const double* grow = n.grad.data() + r * D;
      double nsq = 0.0, dot = 0.0;
      for (size_t c = 0; c < D; ++c) {
        nsq += row[c] * row[c];
        dot += row[c] * grow[c];
      }
      double nrm = std::sqrt(nsq);
      double inv = 1.0 / (nrm + guard);
      double coef = (nrm > kNormFloor) ? dot * inv * inv / nrm : 0.0;
      for (size_t c = 0; c < D; ++c)
        dX.mutable_data()[r * D + c] = grow[c] * inv - coef * row[c];
    }
    tp.accumulate_grad(n.parents[0], dX);
  };
  return x.tape->make_op({x.id}, fwd, bwd);
}

// ---------------------------------------------------------------------------
// indexing

Var patch_flatten(Var x, size_t patch) {
  check(patch >= 1, ErrorKind::Shape, "patch_flatten: patch must be >= 1");
  auto fwd = [patch](const std::vector<const Tensor*>& in) {
    const Tensor& X = *in[0];
    check(X.rank() == 4, ErrorKind::Shape, "patch_flatten: expects [M,C,H,W]");
    size_t M = X.extent(0), C = X.extent(1), H = X.extent(2), W = X.extent(3);
    check(H % patch == 0 && W % patch == 0, ErrorKind::Shape,
          "patch_flatten: extents " + X.shape_str() + " not divisible by patch " +
              std::to_string(patch));
    size_t gh = H / patch, gw = W / patch, N = gh * gw, Fd = C * patch * patch;
    Tensor Y = Tensor::zeros({M, N, Fd}, X.dtype());
    const double* src = X.data();
    double* dst = Y.mutable_data();
    for (size_t m = 0; m < M; ++m)
      for (size_t py = 0; py < gh; ++py)
        for (size_t pxx = 0; pxx < gw; ++pxx) {
          size_t n = py * gw + pxx;
          for (size_t c = 0; c < C; ++c)
            for (size_t dy = 0; dy < patch; ++dy)
              for (size_t dx = 0; dx < patch; ++dx) {
                size_t f = (c * patch + dy) * patch + dx;
                dst[(m * N + n) * Fd + f] =
                    src[((m * C + c) * H + py * patch + dy) * W + pxx * patch + dx];
              }
        }
    Y.finalize("patch_flatten");
    return Y;
  };
  auto bwd = [patch](Tape& tp, Node& n) {
    const Tensor& X = tp.node(n.parents[0]).out;
    size_t M = X.extent(0), C = X.extent(1), H = X.extent(2), W = X.extent(3);
    size_t gh = H / patch, gw = W / patch, N = gh * gw, Fd = C * patch * patch;
    Tensor dX = Tensor::zeros(X.shape(), Dtype::f64);
    const double* g = n.grad.data();
    double* d = dX.mutable_data();
    for (size_t m = 0; m < M; ++m)
      for (size_t py = 0; py < gh; ++py)
        for (size_t pxx = 0; pxx < gw; ++pxx) {
          size_t nn = py * gw + pxx;
          for (size_t c = 0; c < C; ++c)
            for (size_t dy = 0; dy < patch; ++dy)
              for (size_t dx = 0; dx < patch; ++dx) {
                size_t f = (c * patch + dy) * patch + dx;
                d[((m * C + c) * H + py * patch + dy) * W + pxx * patch + dx] =
                    g[(m * N + nn) * Fd + f];
              }
        }
    tp.accumulate_grad(n.parents[0], dX);
  };
  return x.tape->make_op({x.id}, fwd, bwd);
}

Var conv1d_same(Var x, Var kernel, Var bias) {
  Tape* t = x.tape;
  check(t == kernel.tape && t == bias.tape, ErrorKind::Contract,
        "conv1d: operands on different tapes");
  auto fwd = [](const std::vector<const Tensor*>& in) {
    const Tensor& X = *in[0];
    const Tensor& K = *in[1];
    const Tensor& B = *in[2];
    Dtype d = common_dtype(in, "conv1d");
    check(X.rank() == 2, ErrorKind::Shape, "conv1d: expects [B,F]");
    check(K.rank() == 1 && K.extent(0) % 2 == 1, ErrorKind::Shape,
          "conv1d: kernel must be 1-D with odd length");
    check(B.size() == 1, ErrorKind::Shape, "conv1d: bias must be a scalar");
    size_t rows = X.extent(0), Fd = X.extent(1), k = K.extent(0);
    size_t c = k / 2;
    Tensor Y = Tensor::zeros(X.shape(), d);
    double* y = Y.mutable_data();
    for (size_t r = 0; r < rows; ++r)
      for (size_t f = 0; f < Fd; ++f) {
        double s = B.data()[0];
        for (size_t j = 0; j < k; ++j) {
          long long src = static_cast<long long>(f) + static_cast<long long>(j) -
                          static_cast<long long>(c);
          if (src >= 0 && src < static_cast<long long>(Fd))
            s += K.data()[j] * X.data()[r * Fd + static_cast<size_t>(src)];
        }
        y[r * Fd + f] = s;
      }
    Y.finalize("conv1d");
    return Y;
  };
  auto bwd = [](Tape& tp, Node& n) {
    const Tensor& X = tp.node(n.parents[0]).out;
    const Tensor& K = tp.node(n.parents[1]).out;
    size_t rows = X.extent(0), Fd = X.extent(1), k = K.extent(0);
    size_t c = k / 2;
    Tensor dX = Tensor::zeros(X.shape(), Dtype::f64);
    Tensor dK = Tensor::zeros(K.shape(), Dtype::f64);
    Tensor dB = Tensor::zeros({1}, Dtype::f64);
    const double* g = n.grad.data();
    for (size_t r = 0; r < rows; ++r)
      for (size_t f = 0; f < Fd; ++f) {
        double gv = g[r * Fd + f];
        dB.mutable_data()[0] += gv;
        for (size_t j = 0; j < k; ++j) {
          long long src = static_cast<long long>(f) + static_cast<long long>(j) -
                          static_cast<long long>(c);
          if (src >= 0 && src < static_cast<long long>(Fd)) {
            dK.mutable_data()[j] += gv * X.data()[r * Fd + static_cast<size_t>(src)];
            dX.mutable_data()[r * Fd + static_cast<size_t>(src)] += gv * K.data()[j];
          }
        }
      }
    tp.accumulate_grad(n.parents[0], dX);
    tp.accumulate_grad(n.parents[1], dK);
    tp.accumulate_grad(n.parents[2], dB);
  };
  return t->make_op({x.id, kernel.id, bias.id}, fwd, bwd);
}

Var pick(Var x, std::vector<size_t> indices) {
  auto idxs = std::move(indices);
  auto fwd = [idxs](const std::vector<const Tensor*>& in) {
    const Tensor& X = *in[0];
    check(X.rank() == 2, ErrorKind::Shape, "pick: expects a [rows, cols] input");
    check(idxs.size() == X.extent(0), ErrorKind::Shape, "pick: one index per row required");
    size_t K = X.extent(1);
    Tensor Y = Tensor::zeros({idxs.size()}, X.dtype());
    for (size_t r = 0; r < idxs.size(); ++r) {
      check(idxs[r] < K, ErrorKind::Domain,
            "pick: index " + std::to_string(idxs[r]) + " out of range " + std::to_string(K));
      Y.mutable_data()[r] = X.data()[r * K + idxs[r]];
    }
    Y.finalize("pick");
    return Y;
  };
  auto bwd = [idxs](Tape& tp, Node& n) {
    const Tensor& X = tp.node(n.parents[0]).out;
    size_t K = X.extent(1);
    Tensor dX = Tensor::zeros(X.shape(), Dtype::f64);
    for (size_t r = 0; r < idxs.size(); ++r)
      dX.mutable_data()[r * K + idxs[r]] = n.grad.data()[r];
    tp.accumulate_grad(n.parents[0], dX);
  };
  return x.tape->make_op({x.id}, fwd, bwd);
}

}  // namespace ous
