#pragma once

#include <cmath>
#include <vector>

#include "imanip/grad/ops.hpp"
#include "imanip/grad/params.hpp"
#include "imanip/policy/policy.hpp"
#include "imanip/rng.hpp"
#include "imanip/world/skillworld.hpp"

namespace testutil {

using imanip::grad::Shape;
using imanip::grad::Tensor;

inline Tensor random_tensor(Shape shape, imanip::SplitMix64& rng, double scale = 1.0) {
  std::vector<double> v(imanip::grad::shape_numel(shape));
  for (auto& x : v) x = scale * (2.0 * rng.uniform() - 1.0);
  return Tensor(std::move(shape), std::move(v));
}

// Tiny policy over a 2×2×2 grid (8 voxels) for exhaustive finite-difference checks.
inline imanip::policy::PolicyConfig tiny_policy_config() {
  imanip::policy::PolicyConfig c;
  c.grid = 2;
  c.rot_bins = 3;
  c.patch = 1;
  c.width = 4;
  c.latents = 2;
  c.layers = 1;
  c.prompt_len = 2;
  c.d_new = 2;
  c.mlp_ratio = 1;
  c.head_hidden = 3;
  c.trans_hidden = 2;
  c.max_tokens = 4;
  c.vocab = 5;
  c.seed = 11;
  return c;
}

// Random observation with sparse occupancy/color pattern and one effector marker.
inline imanip::world::VoxelObservation random_observation(int grid, imanip::SplitMix64& rng, int vocab = 5,
                                                          int tokens = 3) {
  using namespace imanip::world;
  const auto ug = static_cast<std::size_t>(grid);
  std::vector<double> v(ug * ug * ug * kChannels, 0.0);
  const int cells = grid * grid * grid;
  for (int i = 0; i < cells; ++i) {
    if (rng.uniform() < 0.3) {
      v[static_cast<std::size_t>(i) * kChannels] = 1.0;
      v[static_cast<std::size_t>(i) * kChannels + 1 + static_cast<std::size_t>(rng.below(kNumColors))] = 1.0;
    }
  }
  v[static_cast<std::size_t>(rng.below(cells)) * kChannels + kChannels - 1] = 1.0;
  VoxelObservation obs;
  obs.grid = grid;
  obs.voxels = Tensor({ug, ug, ug, static_cast<std::size_t>(kChannels)}, std::move(v));
  for (auto& p : obs.proprio) p = rng.uniform();
  for (int t = 0; t < tokens; ++t) obs.tokens.push_back(rng.below(vocab));
  return obs;
}

inline imanip::world::KeyframeAction random_action(int grid, int rot_bins, imanip::SplitMix64& rng) {
  imanip::world::KeyframeAction a;
  a.trans = rng.below(grid * grid * grid);
  for (auto& r : a.rot) r = rng.below(rot_bins);
  a.open = rng.below(2);
  a.collide = rng.below(2);
  return a;
}

}  // namespace testutil
