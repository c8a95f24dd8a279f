#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "imanip/grad/tensor.hpp"

namespace imanip::grad {

// Gradient buffers handed to a backward rule: one slot per op input, null when
// that input is not differentiable on this tape. Slots are pre-sized and
// accumulate additively.
using GradSlots = std::vector<std::vector<double>*>;
using BackwardFn = std::function<void(const std::vector<double>& grad_out, GradSlots& grad_in)>;

using GradientMap = std::map<std::string, Tensor>;

// Reverse-mode recording of one computation. A tape becomes the thread's
// active tape for the lifetime of a TapeScope; ops whose inputs carry no handle
// on the active tape run without recording (inference mode).
class Tape {
 public:
  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Register a named differentiable leaf and return it with a tape handle.
  Tensor watch(const std::string& name, const Tensor& value);

  // True when `t` is recorded on this tape.
  bool owns(const Tensor& t) const;

  // Record an op output. Returns `value` unchanged when no input is on the tape.
  Tensor record(Tensor value, const std::vector<Tensor>& inputs, BackwardFn backward);

  // Gradients of a scalar loss w.r.t. every watched leaf reachable from it.
  GradientMap backward(const Tensor& loss);

  std::size_t size() const { return nodes_.size(); }
  void clear();

  static Tape* active();

 private:
  friend class TapeScope;

  struct Node {
    std::vector<std::size_t> inputs;  // tape indices; npos for constants
    std::size_t numel = 0;
    Shape shape;
    BackwardFn backward;
    std::string leaf_name;  // non-empty for watched leaves
  };

  std::uint64_t id_;
  std::vector<Node> nodes_;
};

class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

}  // namespace imanip::grad
