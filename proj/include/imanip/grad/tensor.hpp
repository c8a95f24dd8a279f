#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace imanip::grad {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

// Handle of a recorded value on a specific tape instance.
struct NodeRef {
  std::uint64_t tape_id = 0;
  std::size_t index = 0;
};

// Dense row-major float64 tensor. Storage is shared between copies and never
// mutated in place while shared; mutable_data() detaches first.
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape);
  static Tensor ones(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return data_->size(); }
  bool is_scalar() const { return numel() == 1; }

  std::span<const double> data() const { return *data_; }
  const std::vector<double>& values() const { return *data_; }
  double operator[](std::size_t i) const { return (*data_)[i]; }
  double item() const;

  // Copy-on-write access. The result is a fresh leaf: any tape handle is dropped.
  std::span<double> mutable_data();

  // Same storage, new shape with equal element count. Keeps no tape handle.
  Tensor reshaped(Shape shape) const;

  // Value identical, tape handle removed.
  Tensor detached() const;

  const std::optional<NodeRef>& node() const { return node_; }
  void set_node(NodeRef ref) { node_ = ref; }

  bool all_finite() const;

 private:
  Shape shape_;
  std::shared_ptr<std::vector<double>> data_;
  std::optional<NodeRef> node_;
};

bool bit_equal(const Tensor& a, const Tensor& b);
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace imanip::grad
