#pragma once

#include <array>
#include <vector>

#include "imanip/grad/ops.hpp"
#include "imanip/policy/policy.hpp"

namespace imanip::losses {

inline constexpr double kDefaultLambdaDis = 0.01;

// Per-head cross-entropy terms of one sample: trans, rot x/y/z, open, collide.
struct ActionTerms {
  grad::Tensor trans;
  std::array<grad::Tensor, 3> rot;
  grad::Tensor open;
  grad::Tensor collide;
  grad::Tensor total;
};
ActionTerms action_terms(const policy::QValues& q, const world::KeyframeAction& target);

// Single-sample L_act.
grad::Tensor action_loss(const policy::QValues& q, const world::KeyframeAction& target);
// Batch mean of L_act.
grad::Tensor action_loss(const std::vector<policy::QValues>& q, const std::vector<world::KeyframeAction>& targets);

// Single-sample L_dis. `q_old` must carry no tape handles.
grad::Tensor distill_loss(const policy::QValues& q_old, const policy::QValues& q_new);
grad::Tensor distill_loss(const std::vector<policy::QValues>& q_old, const std::vector<policy::QValues>& q_new);

// l_act + λ·l_dis; λ < 0 throws ConfigError.
grad::Tensor total_loss(const grad::Tensor& l_act, const grad::Tensor& l_dis, double lambda_dis);

struct LossReport {
  double l_act = 0, l_dis = 0, l_total = 0;
  double trans = 0, open = 0, collide = 0;
  std::array<double, 3> rot{0, 0, 0};
};
// Batch-mean breakdown (no tape). q_old may be empty, in which case l_dis = 0.
LossReport report(const std::vector<policy::QValues>& q_new, const std::vector<world::KeyframeAction>& targets,
                  const std::vector<policy::QValues>& q_old, double lambda_dis);

// Shannon entropy of the four predictive distributions, summed.
double predictive_entropy(const policy::QValues& q);

}  // namespace imanip::losses
