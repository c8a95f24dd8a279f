#include "imanip/world/demo_io.hpp"

#include <json.hpp>

#include "imanip/binary_io.hpp"

namespace imanip::world {

namespace {

constexpr char kMagic[8] = {'I', 'M', 'D', 'E', 'M', 'O', '1', '\0'};
constexpr std::uint32_t kVersion = 1;

void put_cell(io::Writer& w, const Cell& c) {
  w.i32(c.x);
  w.i32(c.y);
  w.i32(c.z);
}

Cell get_cell(io::Reader& r) {
  Cell c;
  c.x = r.i32();
  c.y = r.i32();
  c.z = r.i32();
  return c;
}

void put_state(io::Writer& w, const WorldState& s) {
  w.u32(static_cast<std::uint32_t>(s.objects.size()));
  for (const auto& o : s.objects) {
    w.i32(o.id);
    w.u8(static_cast<std::uint8_t>(o.kind));
    w.i32(o.color);
    put_cell(w, o.cell);
    w.u8(o.carried ? 1 : 0);
  }
  put_cell(w, s.effector);
  w.u8(s.gripper_open ? 1 : 0);
  w.i32(s.t);
}

WorldState get_state(io::Reader& r, int grid) {
  WorldState s;
  s.grid = grid;
  const std::uint32_t n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    WorldObject o;
    o.id = r.i32();
    const std::uint8_t kind = r.u8();
    if (kind > static_cast<std::uint8_t>(ObjectKind::zone)) throw FormatError("bad object kind");
    o.kind = static_cast<ObjectKind>(kind);
    o.color = r.i32();
    o.cell = get_cell(r);
    o.carried = r.u8() != 0;
    s.objects.push_back(o);
  }
  s.effector = get_cell(r);
  s.gripper_open = r.u8() != 0;
  s.t = r.i32();
  return s;
}

const char* kind_name(ObjectKind k) {
  switch (k) {
    case ObjectKind::block: return "block";
    case ObjectKind::handle: return "handle";
    case ObjectKind::button: return "button";
    case ObjectKind::zone: return "zone";
  }
  return "?";
}

nlohmann::json cell_json(const Cell& c) { return {c.x, c.y, c.z}; }

nlohmann::json state_json(const WorldState& s) {
  nlohmann::json objs = nlohmann::json::array();
  for (const auto& o : s.objects) {
    objs.push_back({{"id", o.id}, {"kind", kind_name(o.kind)}, {"color", color_name(o.color)},
                    {"cell", cell_json(o.cell)}, {"carried", o.carried}});
  }
  return {{"objects", objs}, {"effector", cell_json(s.effector)}, {"gripper_open", s.gripper_open}, {"t", s.t}};
}

}  // namespace

std::vector<std::uint8_t> encode_demos(const std::vector<Demonstration>& demos, const WorldConfig& cfg) {
  io::Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(cfg.grid));
  w.u32(static_cast<std::uint32_t>(cfg.rot_bins));
  w.u32(static_cast<std::uint32_t>(cfg.max_steps));
  w.u32(static_cast<std::uint32_t>(demos.size()));
  for (const auto& d : demos) {
    w.i32(d.skill_id);
    w.i32(d.variation);
    w.u64(d.seed);
    w.u32(static_cast<std::uint32_t>(d.trajectory.size()));
    for (const auto& ts : d.trajectory) {
      put_state(w, ts.state);
      put_cell(w, ts.micro.move_to);
      w.u8(static_cast<std::uint8_t>(ts.micro.open));
      w.i32(ts.micro.keyframe);
    }
    w.u32(static_cast<std::uint32_t>(d.keyframes.size()));
    for (auto k : d.keyframes) w.u64(k);
    w.u32(static_cast<std::uint32_t>(d.samples.size()));
    for (const auto& s : d.samples) {
      w.i32(s.action.trans);
      for (int r : s.action.rot) w.i32(r);
      w.i32(s.action.open);
      w.i32(s.action.collide);
      for (double p : s.obs.proprio) w.f64(p);
      w.u32(static_cast<std::uint32_t>(s.obs.tokens.size()));
      for (int t : s.obs.tokens) w.i32(t);
      const auto v = s.obs.voxels.data();
      std::uint32_t nz = 0;
      for (double x : v) nz += x != 0.0;
      w.u32(nz);
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (v[i] != 0.0) {
          w.u32(static_cast<std::uint32_t>(i));
          w.f64(v[i]);
        }
      }
    }
  }
  w.u32(io::crc32(w.buffer().data(), w.buffer().size()));
  return w.buffer();
}

std::vector<Demonstration> decode_demos(const std::vector<std::uint8_t>& bytes, WorldConfig* cfg_out) {
  if (bytes.size() < sizeof kMagic + 4) throw FormatError("demo file truncated");
  io::Reader tail(bytes.data() + bytes.size() - 4, 4);
  if (tail.u32() != io::crc32(bytes.data(), bytes.size() - 4)) throw FormatError("demo file CRC mismatch");
  io::Reader r(bytes.data(), bytes.size() - 4);
  char magic[8];
  r.bytes(magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0) throw FormatError("not an IMDEMO1 file");
  if (r.u32() != kVersion) throw FormatError("unsupported demo file version");
  WorldConfig cfg;
  cfg.grid = static_cast<int>(r.u32());
  cfg.rot_bins = static_cast<int>(r.u32());
  cfg.max_steps = static_cast<int>(r.u32());
  const std::size_t cells = static_cast<std::size_t>(cfg.grid) * cfg.grid * cfg.grid;
  const std::uint32_t n = r.u32();
  std::vector<Demonstration> demos;
  for (std::uint32_t i = 0; i < n; ++i) {
    Demonstration d;
    d.skill_id = r.i32();
    d.variation = r.i32();
    d.seed = r.u64();
    const std::uint32_t steps = r.u32();
    for (std::uint32_t k = 0; k < steps; ++k) {
      TrajectoryStep ts;
      ts.state = get_state(r, cfg.grid);
      ts.micro.move_to = get_cell(r);
      ts.micro.open = r.u8();
      ts.micro.keyframe = r.i32();
      d.trajectory.push_back(std::move(ts));
    }
    const std::uint32_t nk = r.u32();
    for (std::uint32_t k = 0; k < nk; ++k) d.keyframes.push_back(r.u64());
    const std::uint32_t ns = r.u32();
    for (std::uint32_t k = 0; k < ns; ++k) {
      KeyframeSample s;
      s.action.trans = r.i32();
      for (auto& rot : s.action.rot) rot = r.i32();
      s.action.open = r.i32();
      s.action.collide = r.i32();
      for (auto& p : s.obs.proprio) p = r.f64();
      const std::uint32_t nt = r.u32();
      for (std::uint32_t t = 0; t < nt; ++t) s.obs.tokens.push_back(r.i32());
      std::vector<double> vox(cells * kChannels, 0.0);
      const std::uint32_t nz = r.u32();
      for (std::uint32_t t = 0; t < nz; ++t) {
        const std::uint32_t at = r.u32();
        if (at >= vox.size()) throw FormatError("voxel index out of range");
        vox[at] = r.f64();
      }
      const auto ug = static_cast<std::size_t>(cfg.grid);
      s.obs.grid = cfg.grid;
      s.obs.voxels = grad::Tensor({ug, ug, ug, static_cast<std::size_t>(kChannels)}, std::move(vox));
      d.samples.push_back(std::move(s));
    }
    demos.push_back(std::move(d));
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes in demo file");
  if (cfg_out) *cfg_out = cfg;
  return demos;
}

std::string demos_to_json(const std::vector<Demonstration>& demos, const WorldConfig& cfg) {
  nlohmann::json root;
  root["format"] = "IMDEMO1-json";
  root["grid"] = cfg.grid;
  root["rot_bins"] = cfg.rot_bins;
  root["max_steps"] = cfg.max_steps;
  root["demos"] = nlohmann::json::array();
  for (const auto& d : demos) {
    const auto& spec = skill(d.skill_id);
    nlohmann::json jd;
    jd["skill"] = spec.name;
    jd["skill_id"] = d.skill_id;
    jd["variation"] = spec.variations.at(static_cast<std::size_t>(d.variation)).name;
    jd["seed"] = d.seed;
    jd["instruction"] = spec.instruction(d.variation);
    jd["keyframes"] = d.keyframes;
    jd["initial_state"] = state_json(d.trajectory.front().state);
    jd["final_state"] = state_json(d.trajectory.back().state);
    jd["actions"] = nlohmann::json::array();
    for (const auto& s : d.samples) {
      jd["actions"].push_back({{"trans", s.action.trans},
                               {"trans_cell", cell_json(index_cell(s.action.trans, cfg.grid))},
                               {"rot", s.action.rot},
                               {"open", s.action.open},
                               {"collide", s.action.collide},
                               {"proprio", s.obs.proprio}});
    }
    root["demos"].push_back(std::move(jd));
  }
  return root.dump(2) + "\n";
}

void save_demos(const std::vector<Demonstration>& demos, const WorldConfig& cfg, const std::string& path) {
  io::write_file(path, encode_demos(demos, cfg));
}

std::vector<Demonstration> load_demos(const std::string& path, WorldConfig* cfg_out) {
  return decode_demos(io::read_file(path), cfg_out);
}

}  // namespace imanip::world
