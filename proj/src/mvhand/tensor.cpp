#include "mvhand/tensor.hpp"

#include <cmath>
#include <sstream>

namespace mvhand {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  auto data = std::make_shared<std::vector<double>>(shape_numel(shape), 0.0);
  return Tensor(std::move(shape), std::move(data));
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
  auto data = std::make_shared<std::vector<double>>(shape_numel(shape), value);
  return Tensor(std::move(shape), std::move(data));
}

Tensor Tensor::scalar(double value) { return full({1}, value); }

Tensor Tensor::from_vector(std::vector<std::size_t> shape, std::vector<double> data) {
  if (shape_numel(shape) != data.size()) {
    throw std::invalid_argument("tensor: shape " + shape_str(shape) + " does not match " +
                                std::to_string(data.size()) + " elements");
  }
  for (std::size_t d : shape) {
    if (d == 0) throw std::invalid_argument("tensor: zero dimension in shape " + shape_str(shape));
  }
  return Tensor(std::move(shape), std::make_shared<std::vector<double>>(std::move(data)));
}

Tensor Tensor::from_external(std::vector<std::size_t> shape, std::vector<double> data) {
  for (double v : data) {
    if (!std::isfinite(v)) throw std::invalid_argument("tensor: non-finite value in external data");
  }
  return from_vector(std::move(shape), std::move(data));
}

std::size_t Tensor::size() const { return data_ ? data_->size() : 0; }

double Tensor::item() const {
  if (size() != 1) throw std::logic_error("tensor: item() on non-scalar of shape " + shape_str());
  return (*data_)[0];
}

Tensor Tensor::reshaped(std::vector<std::size_t> new_shape) const {
  if (shape_numel(new_shape) != size()) {
    throw std::invalid_argument("tensor: cannot reshape " + shape_str() + " to " +
                                shape_str(new_shape));
  }
  return Tensor(std::move(new_shape), data_);
}

bool Tensor::all_finite() const {
  if (!data_) return true;
  for (double v : *data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string Tensor::shape_str(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ")";
  return os.str();
}

std::string Tensor::shape_str() const { return shape_str(shape_); }

}  // namespace mvhand
