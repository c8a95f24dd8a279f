#include "imanip/grad/tape.hpp"

#include <atomic>
#include <limits>

#include "imanip/errors.hpp"

namespace imanip::grad {
namespace {

constexpr std::size_t kConstant = std::numeric_limits<std::size_t>::max();

thread_local Tape* g_active = nullptr;
std::atomic<std::uint64_t> g_next_id{1};

}  // namespace

Tape::Tape() : id_(g_next_id.fetch_add(1)) {}

Tape* Tape::active() { return g_active; }

bool Tape::owns(const Tensor& t) const {
  return t.node().has_value() && t.node()->tape_id == id_ && t.node()->index < nodes_.size();
}

Tensor Tape::watch(const std::string& name, const Tensor& value) {
  if (name.empty()) throw ContractError("watched leaves need a name");
  Node node;
  node.numel = value.numel();
  node.shape = value.shape();
  node.leaf_name = name;
  nodes_.push_back(std::move(node));
  Tensor out = value.detached();
  out.set_node({id_, nodes_.size() - 1});
  return out;
}

Tensor Tape::record(Tensor value, const std::vector<Tensor>& inputs, BackwardFn backward) {
  std::vector<std::size_t> idx;
  idx.reserve(inputs.size());
  bool any = false;
  for (const auto& in : inputs) {
    if (owns(in)) {
      idx.push_back(in.node()->index);
      any = true;
    } else {
      idx.push_back(kConstant);
    }
  }
  if (!any) return value;
  Node node;
  node.inputs = std::move(idx);
  node.numel = value.numel();
  node.shape = value.shape();
  node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  value.set_node({id_, nodes_.size() - 1});
  return value;
}

GradientMap Tape::backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw ContractError("backward requires a scalar loss, got " + shape_string(loss.shape()));
  }
  GradientMap out;
  if (!owns(loss)) {
    throw ContractError("backward: loss is not recorded on this tape");
  }
  std::vector<std::vector<double>> grads(nodes_.size());
  grads[loss.node()->index].assign(1, 1.0);

  GradSlots slots;
  for (std::size_t i = loss.node()->index + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (grads[i].empty()) continue;
    if (!node.leaf_name.empty()) {
      out.insert_or_assign(node.leaf_name, Tensor(node.shape, grads[i]));
      continue;
    }
    slots.assign(node.inputs.size(), nullptr);
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      const auto j = node.inputs[k];
      if (j == kConstant) continue;
      if (grads[j].empty()) grads[j].assign(nodes_[j].numel, 0.0);
      slots[k] = &grads[j];
    }
    node.backward(grads[i], slots);
    // Interior gradients are no longer needed once propagated.
    std::vector<double>().swap(grads[i]);
  }
  return out;
}

void Tape::clear() {
  nodes_.clear();
  id_ = g_next_id.fetch_add(1);
}

TapeScope::TapeScope(Tape& tape) : previous_(g_active) { g_active = &tape; }
TapeScope::~TapeScope() { g_active = previous_; }

}  // namespace imanip::grad
