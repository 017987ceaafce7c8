#pragma once

#include <cstddef>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace mvhand {

/// Dense row-major tensor of 64-bit reals. The payload is immutable and
/// shared between copies, so passing tensors around is cheap and thread-safe
/// for concurrent reads.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor full(std::vector<std::size_t> shape, double value);
  static Tensor scalar(double value);
  /// Takes ownership of `data`; trusted internal path (no finiteness scan).
  static Tensor from_vector(std::vector<std::size_t> shape, std::vector<double> data);
  /// Validating path for data arriving from files or callers: rejects
  /// NaN/Inf and shape/size mismatches.
  static Tensor from_external(std::vector<std::size_t> shape, std::vector<double> data);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const;
  bool empty() const { return data_ == nullptr; }

  const double* data() const { return data_->data(); }
  const std::vector<double>& vec() const { return *data_; }
  double operator[](std::size_t flat) const { return (*data_)[flat]; }
  double at2(std::size_t r, std::size_t c) const { return (*data_)[r * shape_[1] + c]; }

  /// Value of a single-element tensor.
  double item() const;

  /// Same buffer, new shape (element count must match).
  Tensor reshaped(std::vector<std::size_t> new_shape) const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;

  std::string shape_str() const;
  static std::string shape_str(const std::vector<std::size_t>& shape);

 private:
  Tensor(std::vector<std::size_t> shape, std::shared_ptr<const std::vector<double>> data)
      : shape_(std::move(shape)), data_(std::move(data)) {}

  std::vector<std::size_t> shape_;
  std::shared_ptr<const std::vector<double>> data_;
};

std::size_t shape_numel(const std::vector<std::size_t>& shape);

}  // namespace mvhand
