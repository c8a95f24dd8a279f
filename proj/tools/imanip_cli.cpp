#include <CLI11.hpp>

#include <iostream>

#include "imanip/cli/commands.hpp"
#include "imanip/errors.hpp"

using namespace imanip;

int main(int argc, char** argv) {
  CLI::App app{"Skill-incremental imitation learning on a voxel tabletop world"};
  app.require_subcommand(1);

  std::string config_path, schedule, method, strategy, out;
  std::vector<std::uint64_t> seeds;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "key = value config file");
    sub->add_option("--schedule", schedule, "protocol, e.g. B2-3N1");
    sub->add_option("--method", method, "imanip | finetune | tib");
    sub->add_option("--strategy", strategy, "farthest-entropy | random | episode | herding | hard-sample");
    sub->add_option("--seed", seeds, "run seed (repeatable)");
    sub->add_option("--out", out, "output directory (IMANIP_OUT overrides)");
  };

  cli::SampleDemoArgs demo_args;
  auto* sample = app.add_subcommand("sample-demo", "write demonstration files (binary + JSON)");
  common(sample);
  sample->add_option("--skill", demo_args.skill, "skill name or 'all'");
  sample->add_option("--count", demo_args.count, "demonstrations per skill");

  auto* run = app.add_subcommand("run", "run a skill-incremental protocol");
  common(run);

  cli::AblateArgs ablate_args;
  std::string values;
  auto* ablate = app.add_subcommand("ablate", "sweep one config parameter");
  common(ablate);
  ablate->add_option("--param", ablate_args.param, "config key to vary")->required();
  ablate->add_option("--values", values, "comma-separated values")->required();

  std::vector<std::string> inputs;
  auto* report = app.add_subcommand("report", "merge run manifests into a comparison table");
  common(report);
  report->add_option("inputs", inputs, "run directories or manifest files")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : cli::kExitUsage;
  }

  try {
    cli::RunConfig cfg;
    if (!config_path.empty()) cfg = cli::load_config(config_path, cfg);
    if (!schedule.empty()) cli::set_key(cfg, "schedule", schedule);
    if (!method.empty()) cli::set_key(cfg, "method", method);
    if (!strategy.empty()) cli::set_key(cfg, "strategy", strategy);
    if (!out.empty()) cli::set_key(cfg, "out", out);
    if (!seeds.empty()) cfg.seeds = seeds;

    if (*sample) {
      demo_args.seed = cfg.seeds.front();
      return cli::cmd_sample_demo(cfg, demo_args);
    }
    if (*run) return cli::cmd_run(cfg);
    if (*ablate) {
      std::stringstream ss(values);
      std::string v;
      while (std::getline(ss, v, ',')) ablate_args.values.push_back(v);
      return cli::cmd_ablate(cfg, ablate_args);
    }
    if (*report) return cli::cmd_report(cfg, inputs);
  } catch (const std::exception& e) {
    std::cerr << "imanip: " << e.what() << "\n";
    return cli::exit_code_for(e);
  }
  return cli::kExitFailure;
}
