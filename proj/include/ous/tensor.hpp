#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "ous/common.hpp"

namespace ous {

class SplitMix64;

enum class Dtype : uint8_t { f32 = 0, f64 = 1 };

inline const char* dtype_name(Dtype d) { return d == Dtype::f32 ? "float32" : "float64"; }

// Dense row-major tensor. The buffer always holds doubles; a float32 tensor
// is one whose every value is exactly representable in float (ops round
// through float on finalize). This keeps one code path for both precisions
// while preserving bitwise determinism per dtype.
//
// Tensors are immutable once produced by an op. mutable_data() exists for
// construction and for optimizer updates, which happen outside any tape.
class Tensor {
 public:
  Tensor() : dtype_(Dtype::f32), buf_(std::make_shared<std::vector<double>>()) {}

  Tensor(std::vector<size_t> shape, Dtype dt);

  static Tensor zeros(std::vector<size_t> shape, Dtype dt) { return Tensor(std::move(shape), dt); }
  static Tensor full(std::vector<size_t> shape, double v, Dtype dt);
  static Tensor scalar(double v, Dtype dt);
  static Tensor from(std::vector<size_t> shape, std::vector<double> vals, Dtype dt);
  static Tensor randn(std::vector<size_t> shape, SplitMix64& rng, double mean, double stddev,
                      Dtype dt);

  const std::vector<size_t>& shape() const { return shape_; }
  size_t rank() const { return shape_.size(); }
  size_t size() const;
  size_t extent(size_t axis) const;
  Dtype dtype() const { return dtype_; }

  const double* data() const { return buf_->data(); }
  double* mutable_data() { return buf_->data(); }
  const std::vector<double>& values() const { return *buf_; }

  double operator[](size_t i) const { return (*buf_)[i]; }
  double item() const;  // requires size() == 1

  // Shares the buffer; only the shape changes.
  Tensor reshaped(std::vector<size_t> shape) const;

  Tensor clone() const;
  Tensor astype(Dtype dt) const;

  // Rounds every value through float when dtype is f32; checks finiteness.
  void finalize(const char* op_name);
  bool all_finite() const;

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  std::string shape_str() const;

 private:
  std::vector<size_t> shape_;
  Dtype dtype_;
  std::shared_ptr<std::vector<double>> buf_;
};

size_t shape_product(const std::vector<size_t>& shape);
std::string shape_to_string(const std::vector<size_t>& shape);

}  // namespace ous
