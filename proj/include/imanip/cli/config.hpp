#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "imanip/trainer/trainer.hpp"

namespace imanip::cli {

// Run configuration. Text form is one `key = value` per line, `#` comments.
struct RunConfig {
  std::string schedule = "B2-3N1";
  std::string method = "imanip";
  std::string strategy = "farthest-entropy";
  std::string freeze = "encoder+epio";
  std::string optimizer = "adam";
  std::string entropy = "loss";  // loss | shannon
  std::size_t replay_k = 2;
  double lambda_dis = 0.01;
  double lr = 2e-3;
  double replay_ratio = 0.5;
  bool augment_colors = true;
  int augment_shift = 2;
  double weight_decay = 0.0;
  double gate = 0.5;
  int base_iterations = 1500;
  int step_iterations = 600;
  int batch_size = 8;
  int prompt_len = 16;
  int d_new = 8;
  int grid = 8;
  int rot_bins = 12;
  int width = 48;
  int latents = 16;
  int layers = 2;
  int patch = 2;
  int head_hidden = 64;
  int trans_hidden = 32;
  int demos = 20;
  int eval_episodes = 25;
  bool per_skill_base_prompts = false;
  bool timing = false;
  std::vector<std::uint64_t> seeds{0};
  std::string out = "imanip_out";

};

// All recognised keys in canonical order.
const std::vector<std::string>& config_keys();

// Throws ConfigError for unknown keys or malformed values.
void set_key(RunConfig& cfg, const std::string& key, const std::string& value);
std::string get_key(const RunConfig& cfg, const std::string& key);

RunConfig parse_config(const std::string& text, RunConfig base = {});
RunConfig load_config(const std::string& path, RunConfig base = {});
std::string format_config(const RunConfig& cfg);

trainer::Schedule to_schedule(const RunConfig& cfg, std::uint64_t seed);
trainer::TrainerOptions to_options(const RunConfig& cfg);

}  // namespace imanip::cli
