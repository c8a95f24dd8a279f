#include <algorithm>
#include <map>
#include <optional>
#include <set>

#include "imanip/errors.hpp"
#include "imanip/rng.hpp"
#include "imanip/world/skillworld.hpp"

namespace imanip::world {
namespace {

constexpr Cell kHome{0, 0, 0};

enum SkillId : int { kSlide = 0, kPress, kPickPlace, kDrawer, kStack, kSweep };

// Draws distinct table cells from a rectangular region.
class Placer {
 public:
  Placer(std::uint64_t seed, int skill_id) : rng_(derive_seed(seed, 0x5eed00u + static_cast<unsigned>(skill_id))) {
    used_.push_back({kHome.x, kHome.y});
  }

  Cell table_cell(int xlo, int xhi, int ylo, int yhi, int z = 0) {
    for (;;) {
      const int x = xlo + rng_.below(xhi - xlo + 1);
      const int y = ylo + rng_.below(yhi - ylo + 1);
      if (std::find(used_.begin(), used_.end(), std::pair{x, y}) != used_.end()) continue;
      used_.emplace_back(x, y);
      return {x, y, z};
    }
  }

  int choice(int n) { return rng_.below(n); }

 private:
  SplitMix64 rng_;
  std::vector<std::pair<int, int>> used_;
};

WorldState empty_state(const WorldConfig& cfg) {
  if (cfg.grid < 8) throw ConfigError("the skill catalog needs a grid of at least 8 cells per side");
  WorldState s;
  s.grid = cfg.grid;
  s.effector = kHome;
  s.gripper_open = true;
  s.t = 0;
  return s;
}

int add_object(WorldState& s, ObjectKind kind, int color, Cell cell) {
  const int id = static_cast<int>(s.objects.size());
  s.objects.push_back({id, kind, color, cell, false});
  return id;
}

void add_home(WorldState& s) { add_object(s, ObjectKind::zone, white, kHome); }

Cell above(Cell c) { return {c.x, c.y, c.z + 1}; }

// Expert plans are built against a private simulation of the world.
class PlanBuilder {
 public:
  PlanBuilder(const WorldState& init, int skill_id, const WorldConfig& cfg) : state_(init), skill_(skill_id), cfg_(cfg) {}

  void go(Cell c, int open, int collide = 0) {
    KeyframeAction a;
    a.trans = cell_index(c, cfg_.grid);
    const int j = static_cast<int>(plan_.size());
    a.rot = {0, (2 * j) % cfg_.rot_bins, (skill_ + j) % cfg_.rot_bins};
    a.open = open;
    a.collide = collide;
    state_ = step(state_, a, cfg_);
    plan_.push_back(a);
  }

  // Change the gripper where the effector stands.
  void grip(int open) { go(state_.effector, open); }

  const WorldState& state() const { return state_; }
  const WorldObject& obj(int id) const { return state_.objects.at(static_cast<std::size_t>(id)); }
  std::vector<KeyframeAction> take() { return std::move(plan_); }

 private:
  WorldState state_;
  int skill_;
  WorldConfig cfg_;
  std::vector<KeyframeAction> plan_;
};

const WorldObject* find_object(const WorldState& s, ObjectKind kind, int color) {
  for (const auto& o : s.objects) {
    if (o.kind == kind && o.color == color) return &o;
  }
  return nullptr;
}

bool resting_on(const WorldState& s, const WorldObject* obj, const WorldObject* zone) {
  return obj && zone && !obj->carried && obj->cell == zone->cell && s.grid > 0;
}

// --- slide_block: carry the gray block onto the zone of the named color.
SkillSpec make_slide_block() {
  SkillSpec spec;
  spec.id = kSlide;
  spec.name = "slide_block";
  spec.instruction_template = "slide the block to the {0} target";
  for (int c : {red, green, blue}) spec.variations.push_back({color_name(c), {c}, {color_name(c)}});
  spec.initial_state = [](int, std::uint64_t seed, const WorldConfig& cfg) {
    WorldState s = empty_state(cfg);
    Placer p(seed, kSlide);
    add_home(s);
    add_object(s, ObjectKind::block, gray, p.table_cell(2, 7, 2, 7));
    for (int c : {red, green, blue}) add_object(s, ObjectKind::zone, c, p.table_cell(2, 7, 2, 7));
    return s;
  };
  spec.expert = [](const WorldState& init, int v, const WorldConfig& cfg) {
    PlanBuilder b(init, kSlide, cfg);
    const Cell block = find_object(init, ObjectKind::block, gray)->cell;
    const Cell zone = find_object(init, ObjectKind::zone, v == 0 ? red : v == 1 ? green : blue)->cell;
    b.go(block, 1);
    b.grip(0);
    b.go(zone, 0, 1);
    b.grip(1);
    return b.take();
  };
  spec.success = [](int v, const WorldState& s) {
    const int c = v == 0 ? red : v == 1 ? green : blue;
    return resting_on(s, find_object(s, ObjectKind::block, gray), find_object(s, ObjectKind::zone, c));
  };
  return spec;
}

// --- press_button: close the gripper on the named button, pushing it down.
SkillSpec make_press_button() {
  SkillSpec spec;
  spec.id = kPress;
  spec.name = "press_button";
  spec.instruction_template = "press the {0} button";
  for (int c : {red, green, blue}) spec.variations.push_back({color_name(c), {c}, {color_name(c)}});
  spec.initial_state = [](int, std::uint64_t seed, const WorldConfig& cfg) {
    WorldState s = empty_state(cfg);
    Placer p(seed, kPress);
    add_home(s);
    for (int c : {red, green, blue}) add_object(s, ObjectKind::button, c, p.table_cell(2, 7, 2, 7, 1));
    return s;
  };
  spec.expert = [](const WorldState& init, int v, const WorldConfig& cfg) {
    PlanBuilder b(init, kPress, cfg);
    const Cell button = find_object(init, ObjectKind::button, v == 0 ? red : v == 1 ? green : blue)->cell;
    b.go(button, 1);
    b.grip(0);
    b.grip(1);
    return b.take();
  };
  spec.success = [](int v, const WorldState& s) {
    const auto* b = find_object(s, ObjectKind::button, v == 0 ? red : v == 1 ? green : blue);
    return b && b->cell.z == 0;
  };
  return spec;
}

// --- pick_place: move the named block onto the named zone, then return home.
SkillSpec make_pick_place() {
  SkillSpec spec;
  spec.id = kPickPlace;
  spec.name = "pick_place";
  spec.instruction_template = "pick the {0} block and place it on the {1} zone";
  for (int b : {red, blue}) {
    for (int z : {green, yellow}) {
      spec.variations.push_back({std::string(color_name(b)) + "_on_" + color_name(z), {b, z}, {color_name(b), color_name(z)}});
    }
  }
  spec.initial_state = [](int, std::uint64_t seed, const WorldConfig& cfg) {
    WorldState s = empty_state(cfg);
    Placer p(seed, kPickPlace);
    add_home(s);
    for (int c : {red, blue}) add_object(s, ObjectKind::block, c, p.table_cell(2, 7, 2, 7));
    for (int c : {green, yellow}) add_object(s, ObjectKind::zone, c, p.table_cell(2, 7, 2, 7));
    return s;
  };
  spec.expert = [spec_vars = std::vector<std::pair<int, int>>{{red, green}, {red, yellow}, {blue, green}, {blue, yellow}}](
                    const WorldState& init, int v, const WorldConfig& cfg) {
    PlanBuilder b(init, kPickPlace, cfg);
    const auto [bc, zc] = spec_vars.at(static_cast<std::size_t>(v));
    const Cell block = find_object(init, ObjectKind::block, bc)->cell;
    const Cell zone = find_object(init, ObjectKind::zone, zc)->cell;
    b.go(block, 1);
    b.grip(0);
    b.go(zone, 0, 1);
    b.grip(1);
    b.go(kHome, 1);
    return b.take();
  };
  spec.success = [](int v, const WorldState& s) {
    const int bc = v < 2 ? red : blue;
    const int zc = v % 2 == 0 ? green : yellow;
    return resting_on(s, find_object(s, ObjectKind::block, bc), find_object(s, ObjectKind::zone, zc));
  };
  return spec;
}

// --- open_drawer: three stacked handles with rail-end markers two cells out.
SkillSpec make_open_drawer() {
  SkillSpec spec;
  spec.id = kDrawer;
  spec.name = "open_drawer";
  spec.instruction_template = "open the {0} drawer";
  const char* levels[] = {"bottom", "middle", "top"};
  for (int l = 0; l < 3; ++l) spec.variations.push_back({levels[l], {l}, {levels[l]}});
  spec.initial_state = [](int, std::uint64_t seed, const WorldConfig& cfg) {
    WorldState s = empty_state(cfg);
    Placer p(seed, kDrawer);
    const int x = 5 + p.choice(3);
    const int y = 2 + p.choice(4);
    for (int l = 0; l < 3; ++l) add_object(s, ObjectKind::handle, orange, {x, y, 1 + 2 * l});
    for (int l = 0; l < 3; ++l) add_object(s, ObjectKind::zone, purple, {x - 2, y, 1 + 2 * l});
    add_home(s);
    return s;
  };
  spec.expert = [](const WorldState& init, int v, const WorldConfig& cfg) {
    PlanBuilder b(init, kDrawer, cfg);
    const Cell handle = init.objects.at(static_cast<std::size_t>(v)).cell;
    const Cell rail = init.objects.at(static_cast<std::size_t>(3 + v)).cell;
    b.go(handle, 1);
    b.grip(0);
    b.go(rail, 0, 1);
    b.grip(1);
    b.go(kHome, 1);
    return b.take();
  };
  spec.success = [](int v, const WorldState& s) {
    if (s.objects.size() < 6) return false;
    const auto& handle = s.objects[static_cast<std::size_t>(v)];
    const auto& rail = s.objects[static_cast<std::size_t>(3 + v)];
    return !handle.carried && handle.cell == rail.cell;
  };
  return spec;
}

// --- stack_two: bottom block onto the blue zone, then the top block onto it.
SkillSpec make_stack_two() {
  SkillSpec spec;
  spec.id = kStack;
  spec.name = "stack_two";
  spec.instruction_template = "stack the {0} block on the {1} block";
  spec.variations.push_back({"green_on_red", {green, red}, {"green", "red"}});
  spec.variations.push_back({"red_on_green", {red, green}, {"red", "green"}});
  spec.initial_state = [](int, std::uint64_t seed, const WorldConfig& cfg) {
    WorldState s = empty_state(cfg);
    Placer p(seed, kStack);
    add_home(s);
    for (int c : {red, green}) add_object(s, ObjectKind::block, c, p.table_cell(2, 7, 2, 7));
    add_object(s, ObjectKind::zone, blue, p.table_cell(2, 7, 2, 7));
    return s;
  };
  spec.expert = [](const WorldState& init, int v, const WorldConfig& cfg) {
    PlanBuilder b(init, kStack, cfg);
    const int top_c = v == 0 ? green : red;
    const int bottom_c = v == 0 ? red : green;
    const Cell bottom = find_object(init, ObjectKind::block, bottom_c)->cell;
    const Cell top = find_object(init, ObjectKind::block, top_c)->cell;
    const Cell zone = find_object(init, ObjectKind::zone, blue)->cell;
    b.go(above(bottom), 1);
    b.go(bottom, 1);
    b.grip(0);
    b.go(above(bottom), 0, 1);
    b.go(above(zone), 0, 1);
    b.go(zone, 0, 1);
    b.grip(1);
    b.go(above(top), 1);
    b.go(top, 1);
    b.grip(0);
    b.go(above(zone), 0, 1);
    b.grip(1);
    return b.take();
  };
  spec.success = [](int v, const WorldState& s) {
    const auto* top = find_object(s, ObjectKind::block, v == 0 ? green : red);
    const auto* bottom = find_object(s, ObjectKind::block, v == 0 ? red : green);
    const auto* zone = find_object(s, ObjectKind::zone, blue);
    return resting_on(s, bottom, zone) && top && !top->carried && top->cell == above(zone->cell);
  };
  return spec;
}

// --- sweep_to_zone: push both dirt pieces of one lane onto that lane's strip.
SkillSpec make_sweep_to_zone() {
  SkillSpec spec;
  spec.id = kSweep;
  spec.name = "sweep_to_zone";
  spec.instruction_template = "sweep the dirt to the {0} zone";
  for (int c : {red, blue}) spec.variations.push_back({color_name(c), {c}, {color_name(c)}});
  spec.initial_state = [](int, std::uint64_t seed, const WorldConfig& cfg) {
    WorldState s = empty_state(cfg);
    Placer p(seed, kSweep);
    add_home(s);
    const int zx = 5 + p.choice(3);
    const int y_low = 1 + p.choice(2);
    const int y_high = y_low + 3 + p.choice(6 - (y_low + 3) + 1);
    const bool red_low = p.choice(2) == 0;
    const int rows[2] = {y_low, y_high};
    for (int lane = 0; lane < 2; ++lane) {
      const int color = (lane == 0) == red_low ? red : blue;
      for (int dy = 0; dy < 2; ++dy) add_object(s, ObjectKind::zone, color, {zx, rows[lane] + dy, 0});
    }
    for (int lane = 0; lane < 2; ++lane) {
      for (int dy = 0; dy < 2; ++dy) add_object(s, ObjectKind::block, gray, {zx - 3, rows[lane] + dy, 0});
    }
    return s;
  };
  spec.expert = [](const WorldState& init, int v, const WorldConfig& cfg) {
    PlanBuilder b(init, kSweep, cfg);
    const int color = v == 0 ? red : blue;
    const WorldObject* strip = find_object(init, ObjectKind::zone, color);
    const int zx = strip->cell.x;
    const int y0 = strip->cell.y;
    b.grip(0);
    for (int dy = 0; dy < 2; ++dy) {
      b.go({zx - 4, y0 + dy, 0}, 0);
      for (int k = 3; k >= 1; --k) b.go({zx - k, y0 + dy, 0}, 0, 1);
    }
    b.grip(1);
    b.go(kHome, 1);
    return b.take();
  };
  spec.success = [](int v, const WorldState& s) {
    const int color = v == 0 ? red : blue;
    int covered = 0, strips = 0;
    for (const auto& z : s.objects) {
      if (z.kind != ObjectKind::zone || z.color != color) continue;
      ++strips;
      for (const auto& o : s.objects) {
        if (o.kind == ObjectKind::block && o.color == gray && o.cell == z.cell && !o.carried) {
          ++covered;
          break;
        }
      }
    }
    return strips == 2 && covered == 2;
  };
  return spec;
}

}  // namespace

const std::vector<SkillSpec>& catalog() {
  static const std::vector<SkillSpec> skills = [] {
    std::vector<SkillSpec> v;
    v.push_back(make_slide_block());
    v.push_back(make_press_button());
    v.push_back(make_pick_place());
    v.push_back(make_open_drawer());
    v.push_back(make_stack_two());
    v.push_back(make_sweep_to_zone());
    v[0].horizon = Horizon::brief;
    v[1].horizon = Horizon::brief;
    v[2].horizon = Horizon::medium;
    v[3].horizon = Horizon::medium;
    v[4].horizon = Horizon::extended;
    v[5].horizon = Horizon::extended;
    return v;
  }();
  return skills;
}

const SkillSpec& skill(int id) {
  const auto& c = catalog();
  if (id < 0 || id >= static_cast<int>(c.size())) throw LookupError("unknown skill id " + std::to_string(id));
  return c[static_cast<std::size_t>(id)];
}

const SkillSpec& skill(const std::string& name) {
  for (const auto& s : catalog()) {
    if (s.name == name) return s;
  }
  throw LookupError("unknown skill '" + name + "'");
}

bool success(int skill_id, int variation, const WorldState& state) {
  const SkillSpec& spec = skill(skill_id);
  if (variation < 0 || variation >= static_cast<int>(spec.variations.size())) {
    throw LookupError(spec.name + ": unknown variation " + std::to_string(variation));
  }
  return spec.success(variation, state);
}

namespace {

std::optional<int> color_of_word(const std::string& w) {
  for (int c = 0; c < kNumColors; ++c) {
    if (w == color_name(c)) return c;
  }
  return std::nullopt;
}

std::vector<ColorMap> find_symmetries(const SkillSpec& spec) {
  ColorMap identity;
  for (int c = 0; c < kNumColors; ++c) identity[c] = c;
  std::vector<int> used;
  std::set<std::vector<int>> tuples;
  for (const auto& v : spec.variations) {
    std::vector<int> t;
    for (const auto& w : v.words) {
      const auto c = color_of_word(w);
      if (!c) return {identity};
      t.push_back(*c);
      if (std::find(used.begin(), used.end(), *c) == used.end()) used.push_back(*c);
    }
    tuples.insert(t);
  }
  std::sort(used.begin(), used.end());
  std::vector<ColorMap> out;
  std::vector<int> perm = used;
  do {
    ColorMap m = identity;
    for (std::size_t i = 0; i < used.size(); ++i) m[used[i]] = perm[i];
    bool closed = true;
    for (const auto& t : tuples) {
      std::vector<int> mapped;
      for (int c : t) mapped.push_back(m[c]);
      if (!tuples.count(mapped)) {
        closed = false;
        break;
      }
    }
    if (closed) out.push_back(m);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return out;
}

}  // namespace

const std::vector<ColorMap>& color_symmetries(int skill_id) {
  static const std::vector<std::vector<ColorMap>> table = [] {
    std::vector<std::vector<ColorMap>> t;
    for (const auto& spec : catalog()) t.push_back(find_symmetries(spec));
    return t;
  }();
  if (skill_id < 0 || skill_id >= static_cast<int>(table.size())) throw LookupError("unknown skill id " + std::to_string(skill_id));
  return table[static_cast<std::size_t>(skill_id)];
}

std::optional<int> skill_for_instruction(const std::vector<int>& tokens) {
  static const std::map<std::vector<int>, int> index = [] {
    std::map<std::vector<int>, int> m;
    for (const auto& spec : catalog()) {
      for (std::size_t v = 0; v < spec.variations.size(); ++v) m[tokenize(spec.instruction(static_cast<int>(v)))] = spec.id;
    }
    return m;
  }();
  const auto it = index.find(tokens);
  if (it == index.end()) return std::nullopt;
  return it->second;
}

KeyframeSample recolor_sample(const KeyframeSample& s, const ColorMap& map) {
  KeyframeSample r = s;
  const auto src = s.obs.voxels.data();
  std::vector<double> v(src.begin(), src.end());
  const std::size_t cells = src.size() / kChannels;
  for (std::size_t i = 0; i < cells; ++i) {
    for (int c = 0; c < kNumColors; ++c) v[i * kChannels + 1 + map[c]] = src[i * kChannels + 1 + c];
  }
  r.obs.voxels = grad::Tensor(s.obs.voxels.shape(), std::move(v));
  std::vector<int> word_token(kNumColors);
  for (int c = 0; c < kNumColors; ++c) word_token[c] = tokenize(color_name(c)).at(0);
  for (auto& t : r.obs.tokens) {
    for (int c = 0; c < kNumColors; ++c) {
      if (t == word_token[c]) {
        t = word_token[map[c]];
        break;
      }
    }
  }
  return r;
}

}  // namespace imanip::world
