#include "imanip/memory/keyframes.hpp"

#include "imanip/errors.hpp"

namespace imanip::memory {

std::vector<std::size_t> extract_keyframes(const std::vector<TrajectoryPoint>& trajectory) {
  if (trajectory.empty()) throw ContractError("extract_keyframes: empty trajectory");
  std::vector<std::size_t> out;
  for (std::size_t i = 1; i < trajectory.size(); ++i) {
    const bool toggled = trajectory[i].gripper_open != trajectory[i - 1].gripper_open;
    const bool still = trajectory[i].effector == trajectory[i - 1].effector;
    if (toggled || still) out.push_back(i);
  }
  const std::size_t last = trajectory.size() - 1;
  if (out.empty() || out.back() != last) out.push_back(last);
  return out;
}

}  // namespace imanip::memory
