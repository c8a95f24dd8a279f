#include "imanip/cli/config.hpp"

#include <charconv>
#include <cstdio>
#include <sstream>

#include "imanip/binary_io.hpp"
#include "imanip/errors.hpp"

namespace imanip::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_int(const std::string& key, const std::string& v) {
  T out{};
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "schedule",   "method",      "strategy",   "freeze",       "optimizer",   "entropy",
      "replay_k",   "lambda_dis",  "lr",         "replay_ratio", "augment_colors", "augment_shift", "weight_decay", "gate",        "base_iterations",
      "step_iterations", "batch_size", "prompt_len", "d_new",     "grid",        "rot_bins",
      "width",      "latents",     "layers",     "patch",        "head_hidden", "trans_hidden",
      "demos",      "eval_episodes", "per_skill_base_prompts", "timing", "seeds", "out"};
  return keys;
}

void set_key(RunConfig& c, const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  if (key == "schedule") {
    trainer::parse_notation(v);
    c.schedule = v;
  } else if (key == "method") {
    trainer::parse_method(v);
    c.method = v;
  } else if (key == "strategy") {
    memory::parse_strategy(v);
    c.strategy = v;
  } else if (key == "freeze") {
    trainer::parse_freeze(v);
    c.freeze = v;
  } else if (key == "optimizer") {
    trainer::parse_optimizer(v);
    c.optimizer = v;
  } else if (key == "entropy") {
    if (v != "loss" && v != "shannon") throw ConfigError("entropy: expected loss or shannon");
    c.entropy = v;
  } else if (key == "replay_k") {
    c.replay_k = parse_int<std::size_t>(key, v);
  } else if (key == "lambda_dis") {
    c.lambda_dis = parse_double(key, v);
    if (c.lambda_dis < 0) throw ConfigError("lambda_dis must be non-negative");
  } else if (key == "lr") {
    c.lr = parse_double(key, v);
  } else if (key == "replay_ratio") {
    c.replay_ratio = parse_double(key, v);
  } else if (key == "augment_colors") {
    c.augment_colors = parse_bool(key, v);
  } else if (key == "augment_shift") {
    c.augment_shift = parse_int<int>(key, v);
  } else if (key == "weight_decay") {
    c.weight_decay = parse_double(key, v);
    if (c.weight_decay < 0) throw ConfigError("weight_decay must be non-negative");
  } else if (key == "gate") {
    c.gate = parse_double(key, v);
  } else if (key == "base_iterations") {
    c.base_iterations = parse_int<int>(key, v);
  } else if (key == "step_iterations") {
    c.step_iterations = parse_int<int>(key, v);
  } else if (key == "batch_size") {
    c.batch_size = parse_int<int>(key, v);
  } else if (key == "prompt_len") {
    c.prompt_len = parse_int<int>(key, v);
  } else if (key == "d_new") {
    c.d_new = parse_int<int>(key, v);
  } else if (key == "grid") {
    c.grid = parse_int<int>(key, v);
  } else if (key == "rot_bins") {
    c.rot_bins = parse_int<int>(key, v);
  } else if (key == "width") {
    c.width = parse_int<int>(key, v);
  } else if (key == "latents") {
    c.latents = parse_int<int>(key, v);
  } else if (key == "layers") {
    c.layers = parse_int<int>(key, v);
  } else if (key == "patch") {
    c.patch = parse_int<int>(key, v);
  } else if (key == "head_hidden") {
    c.head_hidden = parse_int<int>(key, v);
  } else if (key == "trans_hidden") {
    c.trans_hidden = parse_int<int>(key, v);
  } else if (key == "demos") {
    c.demos = parse_int<int>(key, v);
  } else if (key == "eval_episodes") {
    c.eval_episodes = parse_int<int>(key, v);
  } else if (key == "per_skill_base_prompts") {
    c.per_skill_base_prompts = parse_bool(key, v);
  } else if (key == "timing") {
    c.timing = parse_bool(key, v);
  } else if (key == "seeds" || key == "seed") {
    c.seeds.clear();
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) c.seeds.push_back(parse_int<std::uint64_t>(key, trim(item)));
    if (c.seeds.empty()) throw ConfigError("seeds: expected a comma-separated list");
  } else if (key == "out") {
    if (v.empty()) throw ConfigError("out: empty path");
    c.out = v;
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

std::string get_key(const RunConfig& c, const std::string& key) {
  if (key == "schedule") return c.schedule;
  if (key == "method") return c.method;
  if (key == "strategy") return c.strategy;
  if (key == "freeze") return c.freeze;
  if (key == "optimizer") return c.optimizer;
  if (key == "entropy") return c.entropy;
  if (key == "replay_k") return std::to_string(c.replay_k);
  if (key == "lambda_dis") return fmt_double(c.lambda_dis);
  if (key == "lr") return fmt_double(c.lr);
  if (key == "replay_ratio") return fmt_double(c.replay_ratio);
  if (key == "augment_colors") return c.augment_colors ? "true" : "false";
  if (key == "augment_shift") return std::to_string(c.augment_shift);
  if (key == "weight_decay") return fmt_double(c.weight_decay);
  if (key == "gate") return fmt_double(c.gate);
  if (key == "base_iterations") return std::to_string(c.base_iterations);
  if (key == "step_iterations") return std::to_string(c.step_iterations);
  if (key == "batch_size") return std::to_string(c.batch_size);
  if (key == "prompt_len") return std::to_string(c.prompt_len);
  if (key == "d_new") return std::to_string(c.d_new);
  if (key == "grid") return std::to_string(c.grid);
  if (key == "rot_bins") return std::to_string(c.rot_bins);
  if (key == "width") return std::to_string(c.width);
  if (key == "latents") return std::to_string(c.latents);
  if (key == "layers") return std::to_string(c.layers);
  if (key == "patch") return std::to_string(c.patch);
  if (key == "head_hidden") return std::to_string(c.head_hidden);
  if (key == "trans_hidden") return std::to_string(c.trans_hidden);
  if (key == "demos") return std::to_string(c.demos);
  if (key == "eval_episodes") return std::to_string(c.eval_episodes);
  if (key == "per_skill_base_prompts") return c.per_skill_base_prompts ? "true" : "false";
  if (key == "timing") return c.timing ? "true" : "false";
  if (key == "seeds") {
    std::string s;
    for (auto v : c.seeds) s += (s.empty() ? "" : ",") + std::to_string(v);
    return s;
  }
  if (key == "out") return c.out;
  throw ConfigError("unknown config key '" + key + "'");
}

RunConfig parse_config(const std::string& text, RunConfig base) {
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    try {
      set_key(base, trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    } catch (const ParseError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return base;
}

RunConfig load_config(const std::string& path, RunConfig base) {
  std::string text;
  try {
    text = io::read_text(path);
  } catch (const FormatError&) {
    throw FormatError("cannot read config file " + path);
  }
  return parse_config(text, std::move(base));
}

std::string format_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& k : config_keys()) out += k + " = " + get_key(cfg, k) + "\n";
  return out;
}

trainer::Schedule to_schedule(const RunConfig& c, std::uint64_t seed) {
  trainer::Schedule d;
  d.base_iterations = c.base_iterations;
  d.step_iterations = c.step_iterations;
  d.batch_size = c.batch_size;
  d.lr = c.lr;
  d.optimizer = trainer::parse_optimizer(c.optimizer);
  d.lambda_dis = c.lambda_dis;
  d.replay_k = c.replay_k;
  d.strategy = memory::parse_strategy(c.strategy);
  d.freeze = trainer::parse_freeze(c.freeze);
  d.seed = seed;
  auto s = trainer::parse_schedule(c.schedule, d);
  s.validate();
  return s;
}

trainer::TrainerOptions to_options(const RunConfig& c) {
  trainer::TrainerOptions o;
  if (c.grid < 8) throw ConfigError("grid must be at least 8 for the skill catalog");
  o.world.grid = c.grid;
  o.world.rot_bins = c.rot_bins;
  o.policy.grid = c.grid;
  o.policy.rot_bins = c.rot_bins;
  o.policy.patch = c.patch;
  o.policy.width = c.width;
  o.policy.latents = c.latents;
  o.policy.layers = c.layers;
  o.policy.prompt_len = c.prompt_len;
  o.policy.d_new = c.d_new;
  o.policy.head_hidden = c.head_hidden;
  o.policy.trans_hidden = c.trans_hidden;
  o.policy.per_skill_base_prompts = c.per_skill_base_prompts;
  o.policy.validate();
  o.demos_per_skill = c.demos;
  o.eval_episodes = c.eval_episodes;
  o.entropy = c.entropy == "shannon" ? memory::EntropyMode::shannon : memory::EntropyMode::action_loss;
  o.gate = c.gate;
  o.record_wall_time = c.timing;
  o.replay_ratio = c.replay_ratio;
  o.augment_colors = c.augment_colors;
  o.augment_shift = c.augment_shift;
  o.weight_decay = c.weight_decay;
  return o;
}

}  // namespace imanip::cli
