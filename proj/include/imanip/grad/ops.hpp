#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "imanip/grad/tape.hpp"
#include "imanip/grad/tensor.hpp"

// Differentiable tensor primitives. Each op records itself on the active tape
// when at least one input is recorded there; otherwise it is a plain function.
namespace imanip::grad {

Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k]·[k,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // [m,k]·[n,k]ᵀ
Tensor transpose(const Tensor& a);                // 2-D only

// Elementwise. Operands must have equal shapes, or one of them is a scalar.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor abs(const Tensor& a);   // subgradient 0 at 0
Tensor gelu(const Tensor& a);  // exact erf form
Tensor square(const Tensor& a);

Tensor softmax(const Tensor& x, std::size_t axis);
Tensor log_softmax(const Tensor& x, std::size_t axis);

// −log softmax(logits)[target] for a 1-D logit vector.
Tensor cross_entropy(const Tensor& logits, std::size_t target);

// Normalizes over the last axis: (x − mean)/sqrt(var + eps)·gain + bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end);
// Select (possibly repeated) positions along `axis`; backward scatter-adds.
Tensor gather(const Tensor& x, std::size_t axis, std::span<const std::size_t> indices);
Tensor reshape(const Tensor& x, Shape shape);

Tensor sum(const Tensor& x);                    // scalar
Tensor sum(const Tensor& x, std::size_t axis);  // axis removed
Tensor mean(const Tensor& x);                   // scalar
Tensor max(const Tensor& x, std::size_t axis);  // axis removed; ties route to lowest index

// mean((a − b)²)
Tensor mse(const Tensor& a, const Tensor& b);

// Row-wise bias broadcast: x[m,n] + bias[n].
Tensor add_row(const Tensor& x, const Tensor& bias);

// x·w + b with w [k,n], b [n].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

// Constant sparse row matrix (CSR) used as the left operand of a product with
// a differentiable dense matrix.
struct SparseRows {
  std::size_t rows = 0, cols = 0;
  std::vector<std::size_t> row_begin;  // rows + 1 offsets
  std::vector<std::size_t> col;
  std::vector<double> value;

  static SparseRows from_dense(std::size_t rows, std::size_t cols, std::span<const double> dense);
  std::vector<double> to_dense() const;
};

// F·w for constant sparse F [m,k] and dense w [k,n]; gradient flows to w only.
Tensor sparse_matmul(const SparseRows& f, const Tensor& w);

// Record a user-defined op; used for extensions and negative-control tests.
Tensor custom_op(Tensor value, const std::vector<Tensor>& inputs, BackwardFn backward);

}  // namespace imanip::grad
