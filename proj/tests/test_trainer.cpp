#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "imanip/binary_io.hpp"
#include "imanip/cli/config.hpp"
#include "imanip/errors.hpp"
#include "imanip/policy/checkpoint.hpp"
#include "imanip/trainer/reporting.hpp"
#include "imanip/trainer/trainer.hpp"

using namespace imanip;
using namespace imanip::trainer;
namespace fs = std::filesystem;

namespace {

// Small enough to train a few dozen iterations in well under a second.
cli::RunConfig quick_config() {
  cli::RunConfig c;
  c.schedule = "B1-1N1";
  c.width = 16;
  c.latents = 8;
  c.layers = 1;
  c.head_hidden = 16;
  c.base_iterations = 20;
  c.step_iterations = 10;
  c.demos = 4;
  c.eval_episodes = 2;
  c.gate = 0.0;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("notation parsing and binding") {
  CHECK(parse_notation("B2-3N1") == Notation{2, 3, 1});
  CHECK(format_notation({5, 1, 1}) == "B5-1N1");
  const auto s = parse_schedule("B2-3N1");
  CHECK(s.base == std::vector<int>{0, 1});
  CHECK(s.steps == std::vector<std::vector<int>>{{2}, {3}, {4}});
  CHECK(s.notation() == Notation{2, 3, 1});
  CHECK(parse_schedule("B2-0N1").steps.empty());
  for (const char* bad : {"B2-3M1", "B-1N1", "b2-3n1", "B2-3N", "B0-1N1", "B2-1N0", "B2-3N1 "}) {
    INFO(bad);
    CHECK_THROWS_AS(parse_schedule(bad), ParseError);
  }
  // syntactically fine, but the catalog has six skills
  CHECK(parse_notation("B9-9N9") == Notation{9, 9, 9});
  CHECK_THROWS_AS(parse_schedule("B9-9N9"), ParseError);
  CHECK_THROWS_AS(parse_schedule("B5-1N2"), ParseError);
  CHECK_NOTHROW(parse_schedule("B5-1N1"));
}

TEST_CASE("schedule validation") {
  auto s = parse_schedule("B2-1N1");
  s.steps = {{1}};
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = parse_schedule("B2-1N1");
  s.lambda_dis = -1;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = parse_schedule("B2-1N1");
  s.base = {0, 17};
  CHECK_THROWS_AS(s.validate(), ConfigError);
  CHECK_THROWS_AS(parse_freeze("everything"), ConfigError);
  CHECK_THROWS_AS(parse_method("ewc"), ConfigError);
  CHECK_THROWS_AS(parse_optimizer("lbfgs"), ConfigError);
  CHECK(parse_freeze("encoder+epio") == FreezePolicy::encoder_epio);
}

TEST_CASE("method plans") {
  const auto s = parse_schedule("B2-1N1");
  const auto im = plan_for(Method::imanip, s);
  CHECK((im.extend && im.distill && im.replay));
  CHECK(im.freeze == FreezePolicy::encoder_epio);
  CHECK(im.strategy == memory::Strategy::farthest_entropy);
  const auto ft = plan_for(Method::finetune, s);
  CHECK_FALSE((ft.extend || ft.distill || ft.replay));
  CHECK(ft.freeze == FreezePolicy::none);
  const auto tib = plan_for(Method::tib, s);
  CHECK_FALSE(tib.extend);
  CHECK((tib.distill && tib.replay));
  CHECK(tib.strategy == memory::Strategy::herding);
  auto z = s;
  z.lambda_dis = 0;
  z.replay_k = 0;
  z.freeze = FreezePolicy::none;
  const auto reduced = plan_for(Method::imanip, z);
  CHECK_FALSE((reduced.distill || reduced.replay));
  CHECK(reduced.freeze == FreezePolicy::none);
}

TEST_CASE("frozen parameters stay bit-identical while training") {
  const auto cfg = quick_config();
  const auto opts = cli::to_options(cfg);
  auto sched = cli::to_schedule(cfg, 0);
  sched.base_iterations = 0;
  const auto demos = make_demos({0, 1}, 3, 5, opts.world);
  auto base = run_base(sched, demos, opts);
  policy::PolicyModel model = *base.model;
  model.extend_for_skills({1});
  apply_freeze(model, FreezePolicy::encoder_epio, true);
  const auto before = model.params();
  std::vector<world::KeyframeSample> fresh;
  for (const auto& d : demos.at(1))
    for (const auto& s : d.samples) fresh.push_back(s);
  train_phase(model, {}, fresh, base.model.get(), 0.5, 100, sched, 9, opts);
  std::size_t frozen = 0, moved = 0;
  for (const auto& name : model.params().names()) {
    const bool same = grad::bit_equal(before.get(name), model.params().get(name));
    if (!model.params().trainable(name)) {
      ++frozen;
      INFO(name);
      CHECK(same);
      CHECK((name.rfind("encoder", 0) == 0 || name.rfind("epio", 0) == 0 || name.rfind("prompt", 0) == 0));
    } else {
      moved += !same;
    }
  }
  CHECK(frozen > 0);
  CHECK(moved > 0);
  CHECK(model.params().trainable(policy::PolicyModel::prompt_name(model.prompt_blocks() - 1)));
  CHECK_FALSE(model.params().trainable(policy::PolicyModel::prompt_name(0)));
  CHECK_THROWS_AS(apply_freeze(model, FreezePolicy::encoder, false), ConfigError);
}

TEST_CASE("fine-tune and a reduced tib coincide") {
  // With no replay and no distillation, tib has nothing left beyond plain
  // fine-tuning, so both must produce the same bytes.
  auto cfg = quick_config();
  const auto opts = cli::to_options(cfg);
  auto sched = cli::to_schedule(cfg, 3);
  sched.replay_k = 0;
  sched.lambda_dis = 0;
  const auto demos = make_demos({0, 1}, cfg.demos, data_seed_for(3), opts.world);
  const auto base = run_base(sched, demos, opts);
  const auto ft = run_protocol(sched, Method::finetune, opts, &base, &demos);
  const auto tib = run_protocol(sched, Method::tib, opts, &base, &demos);
  CHECK(ft.checkpoints == tib.checkpoints);
  CHECK(ft.data_hash == tib.data_hash);
}

TEST_CASE("runs are deterministic down to the artifact bytes") {
  const auto cfg = quick_config();
  const auto opts = cli::to_options(cfg);
  const auto sched = cli::to_schedule(cfg, 1);
  const auto a = run_protocol(sched, Method::imanip, opts);
  const auto b = run_protocol(sched, Method::imanip, opts);
  REQUIRE(a.steps.size() == 2);
  CHECK(a.checkpoints == b.checkpoints);
  CHECK(a.memory_bytes == b.memory_bytes);
  CHECK(a.steps[1].success == b.steps[1].success);
  CHECK(a.steps[0].wall_ms == 0.0);
  CHECK(a.steps[1].old_rate.has_value());
  CHECK_FALSE(a.steps[0].old_rate.has_value());
  CHECK(a.steps[1].skills == std::vector<int>{0, 1});
  CHECK(a.steps[1].trainable_params < a.steps[1].total_params);
  CHECK(a.all_average() == doctest::Approx((a.steps[0].all_rate + a.steps[1].all_rate) / 2));
  CHECK(a.incremental_all_average() == doctest::Approx(a.steps[1].all_rate));

  const fs::path root = fs::temp_directory_path() / "imanip_trainer_test";
  fs::remove_all(root);
  write_run_artifacts((root / "a").string(), a, opts);
  write_run_artifacts((root / "b").string(), b, opts);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(root / "a")) {
    INFO(e.path().filename().string());
    CHECK(slurp(e.path()) == slurp(root / "b" / e.path().filename()));
    ++files;
  }
  CHECK(files >= 3 + 2 * a.steps.size());
  CHECK(fs::exists(root / "a" / "manifest.json"));
  CHECK(fs::exists(root / "a" / "metrics.csv"));
  CHECK(fs::exists(root / "a" / "curves.svg"));
  fs::remove_all(root);
}

TEST_CASE("methods share demonstrations and the base model") {
  const auto cfg = quick_config();
  const auto opts = cli::to_options(cfg);
  const auto sched = cli::to_schedule(cfg, 2);
  const auto demos = make_demos({0, 1}, cfg.demos, data_seed_for(2), opts.world);
  const auto base = run_base(sched, demos, opts);
  std::string hash;
  for (auto m : {Method::imanip, Method::finetune, Method::tib}) {
    const auto r = run_protocol(sched, m, opts, &base, &demos);
    if (hash.empty()) hash = r.data_hash;
    CHECK(r.data_hash == hash);
    CHECK(r.checkpoints[0] == io::sha256_hex(policy::encode_checkpoint(*base.model)));
  }
}

TEST_CASE("evaluation: random control and side effects") {
  const world::WorldConfig wc;
  SplitMix64 rng(8);
  const Actor random_actor = [&](const world::VoxelObservation&) { return testutil::random_action(8, 12, rng); };
  const auto rates = evaluate(random_actor, {0, 1, 2, 3, 4, 5}, 50, 13, wc);
  for (const auto& [s, r] : rates) {
    INFO(s);
    CHECK(r < 0.10);
  }

  auto cfg = quick_config();
  const auto opts = cli::to_options(cfg);
  policy::PolicyConfig pc = opts.policy;
  policy::PolicyModel m(pc);
  m.register_base({0});
  const auto before = policy::encode_checkpoint(m);
  const auto r1 = evaluate(m, {0}, 3, 4, wc);
  CHECK(policy::encode_checkpoint(m) == before);
  CHECK(evaluate(m, {0}, 3, 4, wc) == r1);
}

TEST_CASE("learnability gate aborts with a diagnostic") {
  auto cfg = quick_config();
  cfg.base_iterations = 0;
  cfg.gate = 0.99;
  const auto opts = cli::to_options(cfg);
  CHECK_THROWS_AS(run_protocol(cli::to_schedule(cfg, 0), Method::imanip, opts), TrainingError);
}

TEST_CASE("report rendering") {
  const auto cfg = quick_config();
  const auto opts = cli::to_options(cfg);
  const auto run = run_protocol(cli::to_schedule(cfg, 4), Method::finetune, opts);
  const auto csv = metrics_csv(run);
  CHECK(csv.find("step") != std::string::npos);
  CHECK(std::count(csv.begin(), csv.end(), '\n') >= 3);
  const auto svg = svg_curves("t", {{"a", {10, 20}}}, {"base", "1"});
  CHECK(svg.rfind("<svg", 0) == 0);
  const auto man = write_run_artifacts((fs::temp_directory_path() / "imanip_report_test").string(), run, opts);
  const auto cmp = compare_manifests({man, man});
  CHECK(std::count(cmp.csv.begin(), cmp.csv.end(), '\n') == 3);
  fs::remove_all(fs::temp_directory_path() / "imanip_report_test");
}

}  // TEST_SUITE
