#include "imanip/grad/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "imanip/errors.hpp"

namespace imanip::grad {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor() : shape_{1}, data_(std::make_shared<std::vector<double>>(1, 0.0)) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::make_shared<std::vector<double>>(std::move(data))) {
  if (shape_.empty()) shape_ = {1};
  for (auto d : shape_) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive: " + shape_string(shape_));
  }
  if (shape_numel(shape_) != data_->size()) {
    throw DimensionError("tensor shape " + shape_string(shape_) + " does not match " +
                         std::to_string(data_->size()) + " values");
  }
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }
Tensor Tensor::ones(Shape shape) { return full(std::move(shape), 1.0); }

Tensor Tensor::full(Shape shape, double value) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::vector(std::vector<double> values) {
  const auto n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_string(shape_));
  }
  return shape_[axis];
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on non-scalar tensor " + shape_string(shape_));
  return (*data_)[0];
}

std::span<double> Tensor::mutable_data() {
  if (data_.use_count() > 1) data_ = std::make_shared<std::vector<double>>(*data_);
  node_.reset();
  return *data_;
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != numel()) {
    throw DimensionError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  Tensor out = *this;
  out.shape_ = std::move(shape);
  out.node_.reset();
  return out;
}

Tensor Tensor::detached() const {
  Tensor out = *this;
  out.node_.reset();
  return out;
}

bool Tensor::all_finite() const {
  return std::all_of(data_->begin(), data_->end(), [](double v) { return std::isfinite(v); });
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  return std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(double)) == 0;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("max_abs_diff shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace imanip::grad
