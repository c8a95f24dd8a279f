#include "imanip/losses/losses.hpp"

#include <cmath>

#include "imanip/errors.hpp"

namespace imanip::losses {

using grad::Tensor;
namespace g = imanip::grad;

namespace {

std::size_t label(int v, std::size_t n, const char* head) {
  if (v < 0 || static_cast<std::size_t>(v) >= n) {
    throw IndexError(std::string(head) + " label " + std::to_string(v) + " outside [0," + std::to_string(n) + ")");
  }
  return static_cast<std::size_t>(v);
}

void check_shapes(const policy::QValues& a, const policy::QValues& b) {
  if (a.trans.shape() != b.trans.shape() || a.rot.shape() != b.rot.shape() || a.open.shape() != b.open.shape() ||
      a.collide.shape() != b.collide.shape()) {
    throw DimensionError("distill_loss: QValues shapes differ");
  }
}

bool on_tape(const policy::QValues& q) {
  return q.trans.node() || q.rot.node() || q.open.node() || q.collide.node();
}

Tensor batch_mean(const std::vector<Tensor>& terms) {
  if (terms.empty()) throw ContractError("loss over an empty batch");
  return g::scale(g::sum(g::concat(terms, 0)), 1.0 / static_cast<double>(terms.size()));
}

double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0) h -= v * std::log(v);
  }
  return h;
}

}  // namespace

ActionTerms action_terms(const policy::QValues& q, const world::KeyframeAction& a) {
  if (q.rot.rank() != 2 || q.rot.dim(0) != 3) throw DimensionError("rotation logits must be [3, R]");
  ActionTerms t;
  t.trans = g::cross_entropy(q.trans, label(a.trans, q.trans.numel(), "trans"));
  const std::size_t bins = q.rot.dim(1);
  Tensor sum = t.trans;
  for (std::size_t axis = 0; axis < 3; ++axis) {
    const Tensor row = g::reshape(g::slice(q.rot, 0, axis, axis + 1), {bins});
    t.rot[axis] = g::cross_entropy(row, label(a.rot[axis], bins, "rot"));
    sum = g::add(sum, t.rot[axis]);
  }
  t.open = g::cross_entropy(q.open, label(a.open, q.open.numel(), "open"));
  t.collide = g::cross_entropy(q.collide, label(a.collide, q.collide.numel(), "collide"));
  t.total = g::add(g::add(sum, t.open), t.collide);
  return t;
}

Tensor action_loss(const policy::QValues& q, const world::KeyframeAction& target) { return action_terms(q, target).total; }

Tensor action_loss(const std::vector<policy::QValues>& q, const std::vector<world::KeyframeAction>& targets) {
  if (q.size() != targets.size()) throw DimensionError("action_loss: batch sizes differ");
  std::vector<Tensor> terms;
  for (std::size_t i = 0; i < q.size(); ++i) terms.push_back(action_loss(q[i], targets[i]));
  return batch_mean(terms);
}

Tensor distill_loss(const policy::QValues& q_old, const policy::QValues& q_new) {
  check_shapes(q_old, q_new);
  if (on_tape(q_old)) throw ContractError("distill_loss: teacher outputs must come from inference mode");
  const Tensor trans = g::mse(g::softmax(q_old.trans, 0), g::softmax(q_new.trans, 0));
  const Tensor rot = g::mse(g::softmax(q_old.rot, 1), g::softmax(q_new.rot, 1));
  auto positive = [](const Tensor& logits) { return g::slice(g::softmax(logits, 0), 0, 1, 2); };
  const Tensor open = g::abs(g::sub(positive(q_old.open), positive(q_new.open)));
  const Tensor collide = g::abs(g::sub(positive(q_old.collide), positive(q_new.collide)));
  return g::add(g::add(trans, rot), g::reshape(g::add(open, collide), {1}));
}

Tensor distill_loss(const std::vector<policy::QValues>& q_old, const std::vector<policy::QValues>& q_new) {
  if (q_old.size() != q_new.size()) throw DimensionError("distill_loss: batch sizes differ");
  std::vector<Tensor> terms;
  for (std::size_t i = 0; i < q_old.size(); ++i) terms.push_back(distill_loss(q_old[i], q_new[i]));
  return batch_mean(terms);
}

Tensor total_loss(const Tensor& l_act, const Tensor& l_dis, double lambda_dis) {
  if (!(lambda_dis >= 0.0)) throw ConfigError("lambda_dis must be non-negative");
  if (lambda_dis == 0.0) return l_act;
  return g::add(l_act, g::scale(l_dis, lambda_dis));
}

LossReport report(const std::vector<policy::QValues>& q_new, const std::vector<world::KeyframeAction>& targets,
                  const std::vector<policy::QValues>& q_old, double lambda_dis) {
  if (q_new.empty() || q_new.size() != targets.size()) throw DimensionError("report: batch sizes differ");
  LossReport r;
  const double n = static_cast<double>(q_new.size());
  for (std::size_t i = 0; i < q_new.size(); ++i) {
    const auto t = action_terms(q_new[i], targets[i]);
    r.trans += t.trans.item() / n;
    for (int a = 0; a < 3; ++a) r.rot[a] += t.rot[a].item() / n;
    r.open += t.open.item() / n;
    r.collide += t.collide.item() / n;
    r.l_act += t.total.item() / n;
    if (!q_old.empty()) r.l_dis += distill_loss(q_old.at(i), q_new[i]).item() / n;
  }
  if (!(lambda_dis >= 0.0)) throw ConfigError("lambda_dis must be non-negative");
  r.l_total = r.l_act + lambda_dis * r.l_dis;
  return r;
}

double predictive_entropy(const policy::QValues& q) {
  double h = entropy(g::softmax(q.trans, 0).data());
  h += entropy(g::softmax(q.rot, 1).data());
  h += entropy(g::softmax(q.open, 0).data());
  h += entropy(g::softmax(q.collide, 0).data());
  return h;
}

}  // namespace imanip::losses
