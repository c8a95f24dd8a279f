#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "imanip/world/skillworld.hpp"

namespace imanip::world {

// IMDEMO1 layout (little-endian):
//   "IMDEMO1\0", u32 version (1), u32 grid, u32 rot_bins, u32 max_steps, u32 n_demos
//   per demo:
//     i32 skill, i32 variation, u64 seed
//     u32 n_steps × { state, i32 x, i32 y, i32 z, u8 open, i32 keyframe }
//       state = u32 n_objects × { i32 id, u8 kind, i32 color, i32 x, i32 y, i32 z, u8 carried },
//               i32 ex, i32 ey, i32 ez, u8 gripper_open, i32 t
//     u32 n_keyframes × u64 trajectory index
//     u32 n_samples × { action: i32 trans, 3 × i32 rot, i32 open, i32 collide;
//                       5 × f64 proprio; u32 n_tokens × i32;
//                       u32 n_nonzero × { u32 flat index, f64 value } }
//   u32 crc32 over every preceding byte
std::vector<std::uint8_t> encode_demos(const std::vector<Demonstration>& demos, const WorldConfig& cfg);
std::vector<Demonstration> decode_demos(const std::vector<std::uint8_t>& bytes, WorldConfig* cfg_out = nullptr);

// Inspection variant: same content minus the dense voxel payloads, which are
// re-derivable from the stored states.
std::string demos_to_json(const std::vector<Demonstration>& demos, const WorldConfig& cfg);

void save_demos(const std::vector<Demonstration>& demos, const WorldConfig& cfg, const std::string& path);
std::vector<Demonstration> load_demos(const std::string& path, WorldConfig* cfg_out = nullptr);

}  // namespace imanip::world
