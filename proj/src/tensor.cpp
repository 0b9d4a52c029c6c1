#include "ous/tensor.hpp"

#include <cmath>
#include <sstream>

#include "ous/rng.hpp"

namespace ous {

size_t shape_product(const std::vector<size_t>& shape) {
  size_t n = 1;
  for (size_t e : shape) {
    check(e > 0, ErrorKind::Shape, "tensor extent must be positive");
    check(n <= SIZE_MAX / e, ErrorKind::Shape, "tensor size overflow");
    n *= e;
  }
  return n;
}

std::string shape_to_string(const std::vector<size_t>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << "]";
  return os.str();
}

Tensor::Tensor(std::vector<size_t> shape, Dtype dt)
    : shape_(std::move(shape)),
      dtype_(dt),
      buf_(std::make_shared<std::vector<double>>(shape_product(shape_), 0.0)) {}

Tensor Tensor::full(std::vector<size_t> shape, double v, Dtype dt) {
  Tensor t(std::move(shape), dt);
  for (double& x : *t.buf_) x = v;
  t.finalize("full");
  return t;
}

Tensor Tensor::scalar(double v, Dtype dt) { return full({1}, v, dt); }

Tensor Tensor::from(std::vector<size_t> shape, std::vector<double> vals, Dtype dt) {
  size_t n = shape_product(shape);
  check(vals.size() == n, ErrorKind::Shape,
        "value count " + std::to_string(vals.size()) + " does not match shape " +
            shape_to_string(shape));
  Tensor t;
  t.shape_ = std::move(shape);
  t.dtype_ = dt;
  t.buf_ = std::make_shared<std::vector<double>>(std::move(vals));
  t.finalize("from");
  return t;
}

Tensor Tensor::randn(std::vector<size_t> shape, SplitMix64& rng, double mean, double stddev,
                     Dtype dt) {
  Tensor t(std::move(shape), dt);
  for (double& x : *t.buf_) x = rng.normal(mean, stddev);
  t.finalize("randn");
  return t;
}

size_t Tensor::size() const { return buf_->size(); }

size_t Tensor::extent(size_t axis) const {
  check(axis < shape_.size(), ErrorKind::Shape, "axis out of range");
  return shape_[axis];
}

double Tensor::item() const {
  check(size() == 1, ErrorKind::Contract, "item() requires a scalar tensor, got " + shape_str());
  return (*buf_)[0];
}

Tensor Tensor::reshaped(std::vector<size_t> shape) const {
  check(shape_product(shape) == size(), ErrorKind::Shape,
        "reshape " + shape_str() + " -> " + shape_to_string(shape) + " changes element count");
  Tensor t;
  t.shape_ = std::move(shape);
  t.dtype_ = dtype_;
  t.buf_ = buf_;
  return t;
}

Tensor Tensor::clone() const {
  Tensor t;
  t.shape_ = shape_;
  t.dtype_ = dtype_;
  t.buf_ = std::make_shared<std::vector<double>>(*buf_);
  return t;
}

Tensor Tensor::astype(Dtype dt) const {
  Tensor t = clone();
  t.dtype_ = dt;
  t.finalize("astype");
  return t;
}

void Tensor::finalize(const char* op_name) {
  if (dtype_ == Dtype::f32) {
    for (double& x : *buf_) x = static_cast<double>(static_cast<float>(x));
  }
  for (double x : *buf_) {
    if (!std::isfinite(x)) {
      fail(ErrorKind::Numeric, std::string(op_name) + ": non-finite value produced");
    }
  }
}

bool Tensor::all_finite() const {
  for (double x : *buf_) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

std::string Tensor::shape_str() const { return shape_to_string(shape_); }

}  // namespace ous
