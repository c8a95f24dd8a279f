#include "imanip/world/skillworld.hpp"

#include <algorithm>
#include <cstdlib>
#include <sstream>
#include <unordered_map>

#include "imanip/errors.hpp"
#include "imanip/memory/keyframes.hpp"
#include "imanip/rng.hpp"

namespace imanip::world {

const char* color_name(int color) {
  static const char* names[kNumColors] = {"red", "green", "blue", "yellow", "purple", "orange", "white", "gray"};
  if (color < 0 || color >= kNumColors) throw IndexError("color index " + std::to_string(color));
  return names[color];
}

bool is_solid(ObjectKind kind) { return kind != ObjectKind::zone; }

int cell_index(const Cell& c, int grid) { return (c.x * grid + c.y) * grid + c.z; }

Cell index_cell(int index, int grid) {
  return Cell{index / (grid * grid), (index / grid) % grid, index % grid};
}

bool in_bounds(const Cell& c, int grid) {
  return c.x >= 0 && c.y >= 0 && c.z >= 0 && c.x < grid && c.y < grid && c.z < grid;
}

void check_action(const KeyframeAction& a, const WorldConfig& cfg) {
  const int cells = cfg.grid * cfg.grid * cfg.grid;
  if (a.trans < 0 || a.trans >= cells) throw IndexError("trans index " + std::to_string(a.trans));
  for (int r : a.rot) {
    if (r < 0 || r >= cfg.rot_bins) throw IndexError("rotation bin " + std::to_string(r));
  }
  if (a.open != 0 && a.open != 1) throw IndexError("open bit " + std::to_string(a.open));
  if (a.collide != 0 && a.collide != 1) throw IndexError("collide bit " + std::to_string(a.collide));
}

namespace {

// Unit step along the axis of largest displacement; ties prefer x, then y.
Cell approach_direction(const Cell& from, const Cell& to) {
  const int dx = to.x - from.x, dy = to.y - from.y, dz = to.z - from.z;
  const int ax = std::abs(dx), ay = std::abs(dy), az = std::abs(dz);
  auto sgn = [](int v) { return v > 0 ? 1 : -1; };
  if (ax >= ay && ax >= az) return {sgn(dx), 0, 0};
  if (ay >= az) return {0, sgn(dy), 0};
  return {0, 0, sgn(dz)};
}

bool solid_at(const WorldState& s, const Cell& c, int skip_id) {
  return std::any_of(s.objects.begin(), s.objects.end(), [&](const WorldObject& o) {
    return o.id != skip_id && is_solid(o.kind) && o.cell == c;
  });
}

}  // namespace

WorldState step(const WorldState& state, const KeyframeAction& action, const WorldConfig& cfg) {
  check_action(action, cfg);
  WorldState next = state;
  const Cell prev = state.effector;
  const Cell target = index_cell(action.trans, cfg.grid);
  next.effector = target;

  WorldObject* held = nullptr;
  for (auto& o : next.objects) {
    if (o.carried) held = &o;
  }
  if (held) held->cell = target;

  // A closed gripper (or held object) entering an unheld pushable solid shoves it.
  if (!state.gripper_open && prev != target) {
    const Cell dir = approach_direction(prev, target);
    for (auto& o : next.objects) {
      if (o.carried || (o.kind != ObjectKind::block && o.kind != ObjectKind::handle)) continue;
      if (o.cell != target) continue;
      const Cell dest{o.cell.x + dir.x, o.cell.y + dir.y, o.cell.z + dir.z};
      if (in_bounds(dest, cfg.grid) && !solid_at(next, dest, o.id)) o.cell = dest;
      break;
    }
  }

  const bool open_now = action.open == 1;
  if (state.gripper_open && !open_now) {
    for (auto& o : next.objects) {
      if (o.cell != target) continue;
      if (o.kind == ObjectKind::block || o.kind == ObjectKind::handle) {
        o.carried = true;
        break;
      }
      if (o.kind == ObjectKind::button) {
        if (o.cell.z > 0) --o.cell.z;
        break;
      }
    }
  } else if (!state.gripper_open && open_now) {
    for (auto& o : next.objects) o.carried = false;
  }
  next.gripper_open = open_now;
  next.t = state.t + 1;
  return next;
}

VoxelObservation render(const WorldState& state, const std::vector<int>& tokens, const WorldConfig& cfg) {
  const int g = cfg.grid;
  std::vector<double> v(static_cast<std::size_t>(g) * g * g * kChannels, 0.0);
  auto at = [&](const Cell& c, int ch) -> double& {
    return v[static_cast<std::size_t>(cell_index(c, g)) * kChannels + ch];
  };
  for (const auto& o : state.objects) {
    if (!in_bounds(o.cell, g)) throw ContractError("object outside the grid");
    if (is_solid(o.kind)) {
      at(o.cell, 0) = 1.0;
      at(o.cell, 1 + o.color) += 1.0;
    } else {
      at(o.cell, 1 + o.color) += 0.5;
    }
  }
  at(state.effector, kChannels - 1) = 1.0;

  VoxelObservation obs;
  obs.grid = g;
  const auto ug = static_cast<std::size_t>(g);
  obs.voxels = grad::Tensor({ug, ug, ug, static_cast<std::size_t>(kChannels)}, std::move(v));
  obs.proprio = {state.gripper_open ? 1.0 : 0.0, static_cast<double>(state.effector.x) / g,
                 static_cast<double>(state.effector.y) / g, static_cast<double>(state.effector.z) / g,
                 std::min(1.0, static_cast<double>(state.t) / cfg.max_steps)};
  obs.tokens = tokens;
  return obs;
}

std::optional<KeyframeSample> shift_sample(const KeyframeSample& s, int dx, int dy) {
  const int g = s.obs.grid;
  const Cell t = index_cell(s.action.trans, g);
  const Cell moved{t.x + dx, t.y + dy, t.z};
  if (!in_bounds(moved, g)) return std::nullopt;
  const auto src = s.obs.voxels.data();
  std::vector<double> v(src.size(), 0.0);
  for (int i = 0; i < g * g * g; ++i) {
    const auto base = static_cast<std::size_t>(i) * kChannels;
    bool any = false;
    for (int ch = 0; ch < kChannels && !any; ++ch) any = src[base + ch] != 0.0;
    if (!any) continue;
    const Cell c = index_cell(i, g);
    const Cell d{c.x + dx, c.y + dy, c.z};
    if (!in_bounds(d, g)) return std::nullopt;
    const auto to = static_cast<std::size_t>(cell_index(d, g)) * kChannels;
    for (int ch = 0; ch < kChannels; ++ch) v[to + ch] = src[base + ch];
  }
  KeyframeSample r = s;
  r.obs.voxels = grad::Tensor(s.obs.voxels.shape(), std::move(v));
  r.obs.proprio[1] += static_cast<double>(dx) / g;
  r.obs.proprio[2] += static_cast<double>(dy) / g;
  r.action.trans = cell_index(moved, g);
  return r;
}

const std::vector<std::string>& vocabulary() {
  static const std::vector<std::string> words = {
      "<pad>", "the",   "slide", "block",  "to",     "target", "press",  "button", "pick",   "and",
      "place", "it",    "on",    "zone",   "open",   "drawer", "top",    "middle", "bottom", "stack",
      "sweep", "dirt",  "red",   "green",  "blue",   "yellow", "purple", "orange", "white",  "gray"};
  return words;
}

std::vector<int> tokenize(const std::string& text) {
  static const std::unordered_map<std::string, int> index = [] {
    std::unordered_map<std::string, int> m;
    const auto& w = vocabulary();
    for (std::size_t i = 0; i < w.size(); ++i) m.emplace(w[i], static_cast<int>(i));
    return m;
  }();
  std::vector<int> out;
  std::istringstream is(text);
  std::string word;
  while (is >> word) {
    auto it = index.find(word);
    if (it == index.end()) throw LookupError("word '" + word + "' not in the instruction vocabulary");
    out.push_back(it->second);
  }
  if (out.empty() || static_cast<int>(out.size()) > kMaxInstructionTokens) {
    throw ContractError("instruction must have 1.." + std::to_string(kMaxInstructionTokens) + " tokens");
  }
  return out;
}

std::string detokenize(const std::vector<int>& tokens) {
  std::string out;
  for (int t : tokens) {
    if (t < 0 || t >= static_cast<int>(vocabulary().size())) throw IndexError("token id " + std::to_string(t));
    if (!out.empty()) out += ' ';
    out += vocabulary()[static_cast<std::size_t>(t)];
  }
  return out;
}

const char* horizon_name(Horizon h) {
  switch (h) {
    case Horizon::brief: return "short";
    case Horizon::medium: return "medium";
    case Horizon::extended: return "long";
  }
  return "?";
}

Horizon horizon_for(std::size_t keyframes) {
  if (keyframes < 5) return Horizon::brief;
  if (keyframes <= 10) return Horizon::medium;
  return Horizon::extended;
}

std::string SkillSpec::instruction(int variation) const {
  if (variation < 0 || variation >= static_cast<int>(variations.size())) {
    throw LookupError(name + ": unknown variation " + std::to_string(variation));
  }
  const auto& words = variations[static_cast<std::size_t>(variation)].words;
  std::string out;
  for (std::size_t i = 0; i < instruction_template.size(); ++i) {
    if (instruction_template[i] == '{') {
      const auto close = instruction_template.find('}', i);
      const auto slot = std::stoul(instruction_template.substr(i + 1, close - i - 1));
      out += words.at(slot);
      i = close;
    } else {
      out += instruction_template[i];
    }
  }
  return out;
}

bool Demonstration::operator==(const Demonstration& o) const {
  if (skill_id != o.skill_id || variation != o.variation || seed != o.seed || keyframes != o.keyframes) return false;
  if (trajectory.size() != o.trajectory.size() || samples.size() != o.samples.size()) return false;
  for (std::size_t i = 0; i < trajectory.size(); ++i) {
    const auto& a = trajectory[i];
    const auto& b = o.trajectory[i];
    if (!(a.state == b.state) || a.micro.move_to != b.micro.move_to || a.micro.open != b.micro.open ||
        a.micro.keyframe != b.micro.keyframe) {
      return false;
    }
  }
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& a = samples[i];
    const auto& b = o.samples[i];
    if (!(a.action == b.action) || !grad::bit_equal(a.obs.voxels, b.obs.voxels) || a.obs.proprio != b.obs.proprio ||
        a.obs.tokens != b.obs.tokens) {
      return false;
    }
  }
  return true;
}

std::vector<TrajectoryStep> expand_plan(const WorldState& initial, const std::vector<KeyframeAction>& plan,
                                        const WorldConfig& cfg) {
  std::vector<TrajectoryStep> traj;
  traj.push_back({initial, MicroStep{initial.effector, initial.gripper_open ? 1 : 0, -1}});
  WorldState s = initial;
  for (std::size_t k = 0; k < plan.size(); ++k) {
    const Cell target = index_cell(plan[k].trans, cfg.grid);
    WorldState cur = s;
    while (cur.effector != target) {
      auto toward = [](int a, int b) { return a + (b > a) - (b < a); };
      cur.effector = {toward(cur.effector.x, target.x), toward(cur.effector.y, target.y),
                      toward(cur.effector.z, target.z)};
      for (auto& o : cur.objects) {
        if (o.carried) o.cell = cur.effector;
      }
      traj.push_back({cur, MicroStep{cur.effector, s.gripper_open ? 1 : 0, -1}});
    }
    s = step(s, plan[k], cfg);
    traj.push_back({s, MicroStep{target, plan[k].open, static_cast<int>(k)}});
  }
  return traj;
}

Demonstration sample_episode(int skill_id, int variation, std::uint64_t seed, const WorldConfig& cfg) {
  const SkillSpec& spec = skill(skill_id);
  if (variation < 0 || variation >= static_cast<int>(spec.variations.size())) {
    throw LookupError(spec.name + ": unknown variation " + std::to_string(variation));
  }
  const WorldState init = spec.initial_state(variation, seed, cfg);
  const auto plan = spec.expert(init, variation, cfg);

  Demonstration demo;
  demo.skill_id = skill_id;
  demo.variation = variation;
  demo.seed = seed;
  demo.trajectory = expand_plan(init, plan, cfg);

  std::vector<memory::TrajectoryPoint> points;
  points.reserve(demo.trajectory.size());
  for (const auto& ts : demo.trajectory) points.push_back({ts.state.effector, ts.state.gripper_open});
  demo.keyframes = memory::extract_keyframes(points);

  if (demo.keyframes.size() != plan.size()) {
    throw ContractError(spec.name + ": keyframe extraction disagrees with the expert plan");
  }
  const auto tokens = tokenize(spec.instruction(variation));
  std::size_t prev = 0;
  for (std::size_t j = 0; j < demo.keyframes.size(); ++j) {
    const auto& ts = demo.trajectory[demo.keyframes[j]];
    if (ts.micro.keyframe != static_cast<int>(j)) {
      throw ContractError(spec.name + ": keyframe " + std::to_string(j) + " is not a settle step");
    }
    demo.samples.push_back({render(demo.trajectory[prev].state, tokens, cfg), plan[j]});
    prev = demo.keyframes[j];
  }
  if (!spec.success(variation, demo.trajectory.back().state)) {
    throw ContractError(spec.name + ": expert did not solve the episode");
  }
  return demo;
}

Demonstration training_demo(int skill_id, int index, std::uint64_t data_seed, const WorldConfig& cfg) {
  const SkillSpec& spec = skill(skill_id);
  const int variation = index % static_cast<int>(spec.variations.size());
  const std::uint64_t seed = derive_seed(derive_seed(data_seed, static_cast<std::uint64_t>(skill_id) + 1),
                                         static_cast<std::uint64_t>(index));
  return sample_episode(skill_id, variation, seed, cfg);
}

}  // namespace imanip::world
