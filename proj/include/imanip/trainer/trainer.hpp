#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "imanip/memory/replay_buffer.hpp"
#include "imanip/policy/policy.hpp"
#include "imanip/trainer/schedule.hpp"

namespace imanip::trainer {

enum class Method { imanip, finetune, tib };
Method parse_method(const std::string& text);  // ConfigError
const char* method_name(Method m);

struct TrainerOptions {
  policy::PolicyConfig policy;
  world::WorldConfig world;
  int demos_per_skill = 20;
  int eval_episodes = 25;
  memory::EntropyMode entropy = memory::EntropyMode::action_loss;
  double gate = 0.5;          // base all-skill success below this aborts
  bool record_wall_time = false;
  double replay_ratio = -1;   // < 0: uniform over the union pool
  bool augment_colors = false;  // relabel colours within each skill's variation symmetry
  int augment_shift = 0;      // max random table-plane shift per training sample, in cells
  double weight_decay = 0.0;  // decoupled, applied to trainable weights each step
  double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8;
};

struct StepReport {
  int step = 0;  // 0 = base
  std::vector<int> skills;      // every skill learned so far, in order
  std::vector<int> new_skills;
  std::map<int, double> success;
  std::optional<double> old_rate;  // absent at the base step
  double new_rate = 0;
  double all_rate = 0;
  std::size_t trainable_params = 0;
  std::size_t total_params = 0;
  int iterations = 0;
  double wall_ms = 0;
  double l_act = 0;  // mean over the final tenth of the phase
  double l_dis = 0;
};

// Demonstrations are generated once per (skill, data seed) and shared by all methods.
using DemoSet = std::map<int, std::vector<world::Demonstration>>;
DemoSet make_demos(const std::vector<int>& skills, int per_skill, std::uint64_t data_seed, const world::WorldConfig& cfg);
std::uint64_t data_seed_for(std::uint64_t run_seed);

// A rollout policy: observation → action.
using Actor = std::function<world::KeyframeAction(const world::VoxelObservation&)>;
Actor model_actor(const policy::PolicyModel& model);

// Success rate per skill over `episodes` rollouts of at most max_steps keyframes.
std::map<int, double> evaluate(const Actor& actor, const std::vector<int>& skills, int episodes, std::uint64_t seed,
                               const world::WorldConfig& cfg);
std::map<int, double> evaluate(const policy::PolicyModel& model, const std::vector<int>& skills, int episodes,
                               std::uint64_t seed, const world::WorldConfig& cfg);

struct PhaseStats {
  int iterations = 0;
  double l_act = 0;
  double l_dis = 0;
};

// Fixed-budget training on uniform draws over memory ∪ fresh. `teacher`
// enables distillation with weight lambda.
PhaseStats train_phase(policy::PolicyModel& model, const std::vector<const memory::StoredSample*>& memory,
                       const std::vector<world::KeyframeSample>& fresh, const policy::PolicyModel* teacher,
                       double lambda, int iterations, const Schedule& schedule, std::uint64_t seed,
                       const TrainerOptions& opts);

// Applies the freeze policy after an extension step.
void apply_freeze(policy::PolicyModel& model, FreezePolicy policy, bool extended);

struct BaseResult {
  std::shared_ptr<const policy::PolicyModel> model;
  StepReport report;
};
BaseResult run_base(const Schedule& schedule, const DemoSet& demos, const TrainerOptions& opts);

struct MethodPlan {
  bool extend = true;
  bool distill = true;
  bool replay = true;
  FreezePolicy freeze = FreezePolicy::encoder_epio;
  memory::Strategy strategy = memory::Strategy::farthest_entropy;
};
MethodPlan plan_for(Method m, const Schedule& s);

// One incremental step. `model` is updated in place; `buffer` receives the new
// skills' exemplars after training.
StepReport run_increment(policy::PolicyModel& model, const policy::PolicyModel& snapshot, memory::ReplayBuffer& buffer,
                         const std::vector<int>& new_skills, int step_index, const std::vector<int>& learned_before,
                         const Schedule& schedule, const MethodPlan& plan, const DemoSet& demos,
                         const TrainerOptions& opts);

struct RunReport {
  Schedule schedule;
  Method method = Method::imanip;
  std::vector<StepReport> steps;
  std::vector<std::string> checkpoints;  // encoded checkpoint per step, hex SHA-256
  std::vector<std::vector<std::uint8_t>> checkpoint_bytes;
  std::vector<std::string> memory_index;  // JSON per step
  std::vector<std::vector<std::uint8_t>> memory_bytes;
  std::string data_hash;
  std::shared_ptr<const policy::PolicyModel> final_model;

  // Mean of the All column over every step, and over incremental steps only.
  double all_average() const;
  double incremental_all_average() const;
};

RunReport run_protocol(const Schedule& schedule, Method method, const TrainerOptions& opts,
                       const BaseResult* base = nullptr, const DemoSet* demos = nullptr);

}  // namespace imanip::trainer
