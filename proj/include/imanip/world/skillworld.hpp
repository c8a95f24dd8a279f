#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "imanip/grad/tensor.hpp"

namespace imanip::world {

inline constexpr int kNumColors = 8;
// occupancy + one-hot color + effector marker
inline constexpr int kChannels = 1 + kNumColors + 1;
inline constexpr int kProprioSize = 5;

enum Color : int { red = 0, green, blue, yellow, purple, orange, white, gray };
const char* color_name(int color);

struct Cell {
  int x = 0, y = 0, z = 0;
  auto operator<=>(const Cell&) const = default;
};

struct WorldConfig {
  int grid = 8;       // G
  int rot_bins = 12;  // R
  int max_steps = 25; // keyframe budget per episode, also T_max in proprioception
};

enum class ObjectKind : std::uint8_t {
  block,   // graspable, pushable solid
  handle,  // drawer handle; graspable, pushable solid
  button,  // fixed solid; closing the gripper on it presses it down one cell
  zone,    // flat marker, not solid
};
bool is_solid(ObjectKind kind);

struct WorldObject {
  int id = 0;
  ObjectKind kind = ObjectKind::block;
  int color = 0;
  Cell cell;
  bool carried = false;
  bool operator==(const WorldObject&) const = default;
};

struct WorldState {
  int grid = 8;
  std::vector<WorldObject> objects;
  Cell effector;
  bool gripper_open = true;
  int t = 0;
  bool operator==(const WorldState&) const = default;
};

struct KeyframeAction {
  int trans = 0;                  // cell index in [0, G³)
  std::array<int, 3> rot{0, 0, 0};  // per-axis bins in [0, R)
  int open = 1;
  int collide = 0;
  bool operator==(const KeyframeAction&) const = default;
};

struct VoxelObservation {
  int grid = 8;
  grad::Tensor voxels;  // [G, G, G, kChannels]
  std::array<double, kProprioSize> proprio{};
  std::vector<int> tokens;
};

int cell_index(const Cell& c, int grid);
Cell index_cell(int index, int grid);
bool in_bounds(const Cell& c, int grid);

// Validates indices against the config; throws IndexError.
void check_action(const KeyframeAction& a, const WorldConfig& cfg);

// Keyframe-level transition: the effector teleports to the target cell, a
// closed gripper pushes an unheld solid one cell along the dominant approach
// axis, closing grasps (or presses a button), opening releases.
WorldState step(const WorldState& state, const KeyframeAction& action, const WorldConfig& cfg);

VoxelObservation render(const WorldState& state, const std::vector<int>& tokens, const WorldConfig& cfg);

// Instruction vocabulary.
const std::vector<std::string>& vocabulary();
std::vector<int> tokenize(const std::string& text);
std::string detokenize(const std::vector<int>& tokens);
inline constexpr int kMaxInstructionTokens = 16;

enum class Horizon { brief, medium, extended };  // <5, 5–10, >10 keyframes
const char* horizon_name(Horizon h);
Horizon horizon_for(std::size_t keyframes);

struct Variation {
  std::string name;
  std::vector<int> params;          // skill-specific (colors, levels)
  std::vector<std::string> words;   // fills the instruction template blanks
};

struct SkillSpec {
  int id = 0;
  std::string name;
  Horizon horizon = Horizon::brief;
  std::vector<Variation> variations;
  std::string instruction_template;  // blanks written as {0}, {1}, ...
  std::function<WorldState(int variation, std::uint64_t seed, const WorldConfig&)> initial_state;
  std::function<std::vector<KeyframeAction>(const WorldState&, int variation, const WorldConfig&)> expert;
  std::function<bool(int variation, const WorldState&)> success;

  std::string instruction(int variation) const;
};

const std::vector<SkillSpec>& catalog();
const SkillSpec& skill(int id);
const SkillSpec& skill(const std::string& name);
bool success(int skill_id, int variation, const WorldState& state);

// One micro-step of a trajectory: the effector moves at most one cell per axis
// toward the current keyframe target; the final micro-step of each keyframe is
// a zero-displacement settle that applies step().
struct MicroStep {
  Cell move_to;
  int open = 1;
  int keyframe = -1;  // index into the expert plan for settle steps
};

struct TrajectoryStep {
  WorldState state;  // state after the micro-step
  MicroStep micro;
};

struct KeyframeSample {
  VoxelObservation obs;
  KeyframeAction action;
};

struct Demonstration {
  int skill_id = 0;
  int variation = 0;
  std::uint64_t seed = 0;
  std::vector<TrajectoryStep> trajectory;
  std::vector<std::size_t> keyframes;  // trajectory indices
  std::vector<KeyframeSample> samples;  // one per keyframe
  bool operator==(const Demonstration& o) const;
};

// Translates a sample by (dx, dy) cells in the table plane: voxels, effector
// proprioception and the translation target move together. Returns nothing
// when any occupied voxel or the target would leave the grid.
std::optional<KeyframeSample> shift_sample(const KeyframeSample& s, int dx, int dy);

// Colour relabelings that map a skill's variation set onto itself (identity
// included). Skills whose variations are not colour-named get only the identity.
using ColorMap = std::array<int, kNumColors>;
const std::vector<ColorMap>& color_symmetries(int skill_id);

// Skill whose variation instructions contain exactly these tokens.
std::optional<int> skill_for_instruction(const std::vector<int>& tokens);

// Applies a colour relabeling to the voxel colour channels and the colour words
// of the instruction; the action is unchanged.
KeyframeSample recolor_sample(const KeyframeSample& s, const ColorMap& map);

// Expand an expert plan into micro-steps (first entry is the initial state).
std::vector<TrajectoryStep> expand_plan(const WorldState& initial, const std::vector<KeyframeAction>& plan,
                                        const WorldConfig& cfg);

Demonstration sample_episode(int skill_id, int variation, std::uint64_t seed, const WorldConfig& cfg = {});

// Deterministic variation/seed assignment for the j-th training demo.
Demonstration training_demo(int skill_id, int index, std::uint64_t data_seed, const WorldConfig& cfg = {});

}  // namespace imanip::world
