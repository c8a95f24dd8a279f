#pragma once

#include <cstddef>
#include <vector>

#include "imanip/world/skillworld.hpp"

namespace imanip::memory {

struct TrajectoryPoint {
  world::Cell effector;
  bool gripper_open = true;
};

// Step i (i ≥ 1) is a keyframe when the gripper bit changes from step i−1 or
// the effector does not move (velocity threshold of zero cells in the discrete
// world). The final step is always a keyframe.
std::vector<std::size_t> extract_keyframes(const std::vector<TrajectoryPoint>& trajectory);

}  // namespace imanip::memory
