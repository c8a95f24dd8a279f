#include "imanip/cli/commands.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>

#include "imanip/binary_io.hpp"
#include "imanip/errors.hpp"
#include "imanip/trainer/reporting.hpp"
#include "imanip/world/demo_io.hpp"

namespace imanip::cli {

namespace fs = std::filesystem;

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ParseError*>(&e) ||
      dynamic_cast<const LookupError*>(&e) || dynamic_cast<const RegistryError*>(&e)) {
    return kExitUsage;
  }
  if (dynamic_cast<const FormatError*>(&e)) return kExitIo;
  if (dynamic_cast<const TrainingError*>(&e)) return kExitGate;
  if (dynamic_cast<const ContractError*>(&e)) return kExitInvariant;
  return kExitFailure;
}

std::string resolve_out(const RunConfig& cfg) {
  if (const char* env = std::getenv("IMANIP_OUT"); env && *env) return env;
  return cfg.out;
}

int cmd_sample_demo(const RunConfig& cfg, const SampleDemoArgs& args) {
  const auto opts = to_options(cfg);
  std::vector<int> skills;
  if (args.skill == "all") {
    for (const auto& s : world::catalog()) skills.push_back(s.id);
  } else {
    skills.push_back(world::skill(args.skill).id);
  }
  if (args.count < 1) throw ConfigError("--count must be positive");
  std::vector<world::Demonstration> demos;
  for (int s : skills) {
    for (int j = 0; j < args.count; ++j) demos.push_back(world::training_demo(s, j, args.seed, opts.world));
  }
  const std::string out = resolve_out(cfg);
  fs::create_directories(out);
  world::save_demos(demos, opts.world, (fs::path(out) / "demos.imdemo").string());
  io::write_text((fs::path(out) / "demos.json").string(), world::demos_to_json(demos, opts.world));
  std::cout << "wrote " << demos.size() << " demonstrations to " << out << "\n";
  return kExitOk;
}

namespace {

// Invariants re-checked on every finished run.
void check_run(const trainer::RunReport& run) {
  for (const auto& r : run.steps) {
    double mean = 0.0;
    for (int s : r.skills) mean += r.success.at(s);
    mean /= static_cast<double>(r.skills.size());
    if (std::abs(mean - r.all_rate) > 1e-12) throw ContractError("all-skill rate is not the per-skill mean");
  }
  if (!run.final_model) return;
  // Registry order must follow the schedule.
  std::vector<int> registered, expected = run.schedule.base;
  for (const auto& reg : run.final_model->registry()) registered.insert(registered.end(), reg.skills.begin(), reg.skills.end());
  if (run.method == trainer::Method::imanip) {
    for (const auto& st : run.schedule.steps) expected.insert(expected.end(), st.begin(), st.end());
  }
  if (registered != expected) throw ContractError("skill registry does not follow the schedule order");
}

std::string run_dir(const std::string& out, const RunConfig& cfg, std::uint64_t seed) {
  if (cfg.seeds.size() == 1) return out;
  return (fs::path(out) / (cfg.method + "-seed" + std::to_string(seed))).string();
}

}  // namespace

int cmd_run(const RunConfig& cfg) {
  const auto opts = to_options(cfg);
  const auto method = trainer::parse_method(cfg.method);
  const std::string out = resolve_out(cfg);
  for (auto seed : cfg.seeds) {
    const auto schedule = to_schedule(cfg, seed);
    const auto run = trainer::run_protocol(schedule, method, opts);
    check_run(run);
    const std::string dir = run_dir(out, cfg, seed);
    RunConfig used = cfg;
    used.seeds = {seed};
    used.out = dir;
    io::write_text((fs::path(dir) / "config.txt").string(), format_config(used));
    nlohmann::json extra;
    extra["config_sha256"] = io::sha256_file((fs::path(dir) / "config.txt").string());
    trainer::write_run_artifacts(dir, run, opts, extra);
    std::cout << cfg.method << " seed " << seed << ":";
    for (const auto& r : run.steps) {
      std::cout << " [" << (r.step == 0 ? std::string("base") : "step " + std::to_string(r.step));
      if (r.old_rate) std::cout << " old " << static_cast<int>(std::lround(100 * *r.old_rate));
      std::cout << " all " << static_cast<int>(std::lround(100 * r.all_rate)) << "]";
    }
    std::cout << " -> " << dir << "\n";
  }
  return kExitOk;
}

int cmd_ablate(const RunConfig& cfg, const AblateArgs& args) {
  if (args.values.empty()) throw ConfigError("--values needs at least one value");
  get_key(cfg, args.param);  // rejects unknown parameters up front
  const std::string out = resolve_out(cfg);
  std::string summary = "param,value,seed,all_average,final_all,final_old\n";
  for (const auto& value : args.values) {
    RunConfig c = cfg;
    set_key(c, args.param, value);
    c.out = (fs::path(out) / (args.param + "=" + value)).string();
    const auto opts = to_options(c);
    const auto method = trainer::parse_method(c.method);
    for (auto seed : c.seeds) {
      const auto run = trainer::run_protocol(to_schedule(c, seed), method, opts);
      check_run(run);
      const std::string dir = run_dir(c.out, c, seed);
      RunConfig used = c;
      used.seeds = {seed};
      used.out = dir;
      io::write_text((fs::path(dir) / "config.txt").string(), format_config(used));
      trainer::write_run_artifacts(dir, run, opts, {{"ablation", {{"param", args.param}, {"value", value}}}});
      const auto& last = run.steps.back();
      char line[256];
      std::snprintf(line, sizeof line, "%s,%s,%llu,%.6f,%.6f,%s\n", args.param.c_str(), value.c_str(),
                    static_cast<unsigned long long>(seed), run.all_average(), last.all_rate,
                    last.old_rate ? std::to_string(*last.old_rate).c_str() : "");
      summary += line;
      std::cout << args.param << "=" << value << " seed " << seed << ": all-average "
                << static_cast<int>(std::lround(100 * run.all_average())) << "\n";
    }
  }
  io::write_text((fs::path(out) / "ablation.csv").string(), summary);
  return kExitOk;
}

int cmd_report(const RunConfig& cfg, const std::vector<std::string>& inputs) {
  if (inputs.empty()) throw ConfigError("report needs at least one manifest or run directory");
  std::vector<nlohmann::json> manifests;
  for (const auto& in : inputs) {
    fs::path p(in);
    if (fs::is_directory(p)) p /= "manifest.json";
    if (!fs::exists(p)) throw FormatError("no manifest at " + p.string());
    try {
      manifests.push_back(nlohmann::json::parse(io::read_text(p.string())));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("manifest " + p.string() + " is not valid JSON: " + e.what());
    }
  }
  const auto cmp = trainer::compare_manifests(manifests);
  const std::string out = resolve_out(cfg);
  fs::create_directories(out);
  io::write_text((fs::path(out) / "comparison.csv").string(), cmp.csv);
  io::write_text((fs::path(out) / "comparison.svg").string(), cmp.svg);
  std::cout << cmp.csv;
  return kExitOk;
}

}  // namespace imanip::cli
