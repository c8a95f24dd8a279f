#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include <json.hpp>

#include "imanip/binary_io.hpp"
#include "imanip/cli/commands.hpp"
#include "imanip/cli/config.hpp"
#include "imanip/errors.hpp"
#include "imanip/world/demo_io.hpp"

using namespace imanip;
namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "imanip_cli_test";

int run_cli(const std::string& args) {
  const std::string cmd = std::string(IMANIP_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string write_config(const std::string& name, const std::string& body) {
  fs::create_directories(kRoot);
  const auto p = kRoot / name;
  std::ofstream(p) << body;
  return p.string();
}

const char* kQuick =
    "width = 16\nlatents = 8\nlayers = 1\nhead_hidden = 16\nbase_iterations = 10\n"
    "step_iterations = 5\ndemos = 3\neval_episodes = 1\ngate = 0\n";

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("config defaults and round trip") {
  const cli::RunConfig d;
  CHECK(d.replay_k == 2);
  CHECK(d.prompt_len == 16);
  CHECK(d.lambda_dis == 0.01);
  CHECK(d.d_new == 8);
  CHECK(d.schedule == "B2-3N1");
  const auto text = cli::format_config(d);
  const auto back = cli::parse_config(text);
  CHECK(cli::format_config(back) == text);

  auto c = cli::parse_config("# comment\nschedule = B5-1N1\nreplay_k = 3  # inline\nlambda_dis=0.25\nseeds = 0,1,2\n");
  CHECK(c.schedule == "B5-1N1");
  CHECK(c.replay_k == 3);
  CHECK(c.lambda_dis == 0.25);
  CHECK(c.seeds == std::vector<std::uint64_t>{0, 1, 2});
  CHECK(cli::parse_config(cli::format_config(c)).seeds == c.seeds);
  for (const auto& k : cli::config_keys()) CHECK_NOTHROW(cli::get_key(c, k));
  const auto s = cli::to_schedule(c, 2);
  CHECK(s.seed == 2);
  CHECK(s.replay_k == 3);
  CHECK(s.base.size() == 5);
}

TEST_CASE("config errors") {
  CHECK_THROWS_AS(cli::parse_config("colour = red\n"), ConfigError);
  CHECK_THROWS_AS(cli::parse_config("replay_k = two\n"), ConfigError);
  CHECK_THROWS_AS(cli::parse_config("lambda_dis = -0.1\n"), ConfigError);
  CHECK_THROWS_AS(cli::parse_config("schedule = B2-3M1\n"), ConfigError);
  CHECK_THROWS_AS(cli::parse_config("just words\n"), ConfigError);
  CHECK_THROWS_AS(cli::load_config((kRoot / "missing.cfg").string()), FormatError);
  // parses, but cannot be bound to six skills
  CHECK_THROWS_AS(cli::to_schedule(cli::parse_config("schedule = B9-9N9\n"), 0), ParseError);
}

TEST_CASE("exit code table") {
  CHECK(cli::exit_code_for(ConfigError("x")) == cli::kExitUsage);
  CHECK(cli::exit_code_for(ParseError("x")) == cli::kExitUsage);
  CHECK(cli::exit_code_for(FormatError("x")) == cli::kExitIo);
  CHECK(cli::exit_code_for(TrainingError("x")) == cli::kExitGate);
  CHECK(cli::exit_code_for(ContractError("x")) == cli::kExitInvariant);
  CHECK(cli::exit_code_for(std::runtime_error("x")) == cli::kExitFailure);
}

TEST_CASE("binary: usage errors") {
  CHECK(run_cli("") != 0);
  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("run --bogus") == 2);
  CHECK(run_cli("run --schedule B9-9N9") == 2);
  CHECK(run_cli("run --schedule B2-3M1") == 2);
  CHECK(run_cli("run --method ewc") == 2);
  CHECK(run_cli("run --config " + (kRoot / "nope.cfg").string()) == 3);
  CHECK(run_cli("report " + (kRoot / "nowhere").string()) == 3);
  CHECK(run_cli("ablate --param colour --values 1,2") == 2);
}

TEST_CASE("binary: sample-demo, run, ablate, report") {
  fs::remove_all(kRoot);
  const auto cfg = write_config("quick.cfg", kQuick);

  const auto demo_dir = kRoot / "demos";
  REQUIRE(run_cli("sample-demo --skill slide_block --count 3 --out " + demo_dir.string()) == 0);
  const auto demos = world::load_demos((demo_dir / "demos.imdemo").string());
  CHECK(demos.size() == 3);
  CHECK(fs::exists(demo_dir / "demos.json"));
  CHECK(run_cli("sample-demo --skill juggle --out " + demo_dir.string()) == 2);

  std::vector<std::string> runs;
  for (const char* m : {"imanip", "finetune", "tib"}) {
    const auto dir = kRoot / m;
    REQUIRE(run_cli("run --config " + cfg + " --schedule B1-1N1 --method " + m + " --seed 0 --out " + dir.string()) == 0);
    for (const char* f : {"manifest.json", "metrics.csv", "curves.svg", "config.txt"}) CHECK(fs::exists(dir / f));
    const auto man = nlohmann::json::parse(io::read_text((dir / "manifest.json").string()));
    for (const auto& f : man["files"]) {
      INFO(f["path"].get<std::string>());
      CHECK(io::sha256_file((dir / f["path"].get<std::string>()).string()) == f["sha256"].get<std::string>());
    }
    runs.push_back(dir.string());
  }
  // manifests agree on the shared demonstration data
  std::set<std::string> hashes;
  for (const auto& r : runs) hashes.insert(nlohmann::json::parse(io::read_text(r + "/manifest.json"))["data_hash"].dump());
  CHECK(hashes.size() == 1);

  // IMANIP_OUT overrides --out
  const auto env_dir = kRoot / "from_env";
  const std::string env_cmd = "IMANIP_OUT=" + env_dir.string() + " " + IMANIP_CLI + " run --config " + cfg +
                              " --schedule B1-0N1 --out " + (kRoot / "ignored2").string() + " >/dev/null 2>&1";
  CHECK(std::system(env_cmd.c_str()) == 0);
  CHECK(fs::exists(env_dir / "manifest.json"));
  CHECK_FALSE(fs::exists(kRoot / "ignored2"));

  const auto abl = kRoot / "ablate";
  REQUIRE(run_cli("ablate --config " + cfg + " --schedule B1-1N1 --param replay_k --values 1,2 --out " + abl.string()) == 0);
  CHECK(fs::exists(abl / "replay_k=1" / "manifest.json"));
  CHECK(fs::exists(abl / "replay_k=2" / "manifest.json"));
  CHECK(fs::exists(abl / "ablation.csv"));

  const auto rep = kRoot / "report";
  REQUIRE(run_cli("report " + runs[0] + " " + runs[1] + " " + runs[2] + " --out " + rep.string()) == 0);
  const auto csv = io::read_text((rep / "comparison.csv").string());
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
  CHECK(csv.find("finetune") != std::string::npos);
  CHECK(fs::exists(rep / "comparison.svg"));
  fs::remove_all(kRoot);
}

}  // TEST_SUITE
