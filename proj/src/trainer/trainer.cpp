#include "imanip/trainer/trainer.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>
#include <optional>

#include "imanip/binary_io.hpp"
#include "imanip/errors.hpp"
#include "imanip/losses/losses.hpp"
#include "imanip/policy/checkpoint.hpp"
#include "imanip/world/demo_io.hpp"

namespace imanip::trainer {

namespace g = imanip::grad;

Method parse_method(const std::string& text) {
  if (text == "imanip") return Method::imanip;
  if (text == "finetune") return Method::finetune;
  if (text == "tib") return Method::tib;
  throw ConfigError("unknown method '" + text + "' (imanip, finetune, tib)");
}

const char* method_name(Method m) {
  switch (m) {
    case Method::imanip: return "imanip";
    case Method::finetune: return "finetune";
    case Method::tib: return "tib";
  }
  return "?";
}

std::uint64_t data_seed_for(std::uint64_t run_seed) { return derive_seed(run_seed, 0xda7au); }

DemoSet make_demos(const std::vector<int>& skills, int per_skill, std::uint64_t data_seed, const world::WorldConfig& cfg) {
  DemoSet out;
  for (int s : skills) {
    auto& list = out[s];
    for (int j = 0; j < per_skill; ++j) list.push_back(world::training_demo(s, j, data_seed, cfg));
  }
  return out;
}

Actor model_actor(const policy::PolicyModel& model) {
  return [&model](const world::VoxelObservation& obs) { return policy::predict_action(model.infer(obs).q); };
}

std::map<int, double> evaluate(const Actor& actor, const std::vector<int>& skills, int episodes, std::uint64_t seed,
                               const world::WorldConfig& cfg) {
  std::map<int, double> out;
  for (int s : skills) {
    const auto& spec = world::skill(s);
    const int nvar = static_cast<int>(spec.variations.size());
    int solved = 0;
    for (int e = 0; e < episodes; ++e) {
      const int variation = e % nvar;
      const std::uint64_t ep_seed =
          derive_seed(derive_seed(seed, 0xe7a1u + static_cast<std::uint64_t>(s)), static_cast<std::uint64_t>(e));
      world::WorldState state = spec.initial_state(variation, ep_seed, cfg);
      const auto tokens = world::tokenize(spec.instruction(variation));
      for (int t = 0; t < cfg.max_steps; ++t) {
        const auto action = actor(world::render(state, tokens, cfg));
        state = world::step(state, action, cfg);
        if (spec.success(variation, state)) {
          ++solved;
          break;
        }
      }
    }
    out[s] = episodes > 0 ? static_cast<double>(solved) / episodes : 0.0;
  }
  return out;
}

std::map<int, double> evaluate(const policy::PolicyModel& model, const std::vector<int>& skills, int episodes,
                               std::uint64_t seed, const world::WorldConfig& cfg) {
  return evaluate(model_actor(model), skills, episodes, seed, cfg);
}

namespace {

struct AdamState {
  std::vector<double> m, v;
};

double mean_of(const std::map<int, double>& rates, const std::vector<int>& skills) {
  if (skills.empty()) return 0.0;
  double s = 0.0;
  for (int k : skills) s += rates.at(k);
  return s / static_cast<double>(skills.size());
}

std::vector<world::KeyframeSample> samples_of(const DemoSet& demos, const std::vector<int>& skills) {
  std::vector<world::KeyframeSample> out;
  for (int s : skills) {
    for (const auto& d : demos.at(s)) out.insert(out.end(), d.samples.begin(), d.samples.end());
  }
  return out;
}

double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

}  // namespace

// Random colour relabeling within the skill's variation symmetry, then a random
// table-plane shift. Returns nothing when the sample is left as is.
std::optional<world::KeyframeSample> augment(const world::KeyframeSample& in, const TrainerOptions& opts,
                                             SplitMix64& rng) {
  std::optional<world::KeyframeSample> out;
  if (opts.augment_colors) {
    if (const auto skill = world::skill_for_instruction(in.obs.tokens)) {
      const auto& maps = world::color_symmetries(*skill);
      const std::size_t pick = maps.size() > 1 ? rng.below(maps.size()) : 0;
      if (pick != 0) out = world::recolor_sample(in, maps[pick]);
    }
  }
  if (opts.augment_shift > 0) {
    const auto span = static_cast<std::uint64_t>(2 * opts.augment_shift + 1);
    const int dx = static_cast<int>(rng.below(span)) - opts.augment_shift;
    const int dy = static_cast<int>(rng.below(span)) - opts.augment_shift;
    if (dx != 0 || dy != 0) {
      if (auto moved = world::shift_sample(out ? *out : in, dx, dy)) out = std::move(moved);
    }
  }
  return out;
}

PhaseStats train_phase(policy::PolicyModel& model, const std::vector<const memory::StoredSample*>& memory,
                       const std::vector<world::KeyframeSample>& fresh, const policy::PolicyModel* teacher,
                       double lambda, int iterations, const Schedule& schedule, std::uint64_t seed,
                       const TrainerOptions& opts) {
  PhaseStats stats;
  stats.iterations = iterations;
  if (iterations == 0) return stats;
  const bool distill = teacher != nullptr && lambda > 0.0;

  // Teacher outputs are fixed for the whole phase.
  std::vector<policy::QValues> mem_q, fresh_q;
  if (distill) {
    for (const auto* m : memory) mem_q.push_back(teacher->infer(m->sample.obs).q);
    for (const auto& f : fresh) fresh_q.push_back(teacher->infer(f.obs).q);
  }

  SplitMix64 rng(seed);
  std::map<std::string, AdamState> adam;
  const int tail = std::max(1, iterations / 10);
  double tail_act = 0.0, tail_dis = 0.0;
  for (int it = 0; it < iterations; ++it) {
    std::vector<memory::BatchItem> batch;
    if (opts.replay_ratio >= 0.0 && !memory.empty() && !fresh.empty()) {
      for (int b = 0; b < schedule.batch_size; ++b) {
        if (rng.uniform() < opts.replay_ratio) {
          const std::size_t i = rng.below(static_cast<std::uint64_t>(memory.size()));
          batch.push_back({&memory[i]->sample, true, i});
        } else {
          const std::size_t i = rng.below(static_cast<std::uint64_t>(fresh.size()));
          batch.push_back({&fresh[i], false, i});
        }
      }
    } else {
      batch = memory::sample_batch(memory, fresh, static_cast<std::size_t>(schedule.batch_size), rng);
    }

    // Tape and bound parameters are released before the update so that the
    // parameter storage is not shared (no copy-on-write per step).
    g::GradientMap grads;
    double l_act_value = 0.0, l_dis_value = 0.0;
    {
    g::Tape tape;
    g::TapeScope scope(tape);
    const g::BoundParams p = model.params().bind(&tape);
    std::vector<g::Tensor> act_terms, dis_terms;
    for (const auto& item : batch) {
      std::optional<world::KeyframeSample> shifted = augment(*item.sample, opts, rng);
      const world::KeyframeSample& s = shifted ? *shifted : *item.sample;
      const auto out = model.forward(s.obs, p);
      act_terms.push_back(losses::action_loss(out.q, s.action));
      if (distill) {
        if (shifted) {
          dis_terms.push_back(losses::distill_loss(teacher->infer(s.obs).q, out.q));
        } else {
          const auto& q_old = item.from_memory ? mem_q[item.pool_index] : fresh_q[item.pool_index];
          dis_terms.push_back(losses::distill_loss(q_old, out.q));
        }
      }
    }
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    const g::Tensor l_act = g::scale(g::sum(g::concat(act_terms, 0)), inv_b);
    g::Tensor loss = l_act;
    l_act_value = l_act.item();
    if (distill) {
      const g::Tensor l_dis = g::scale(g::sum(g::concat(dis_terms, 0)), inv_b);
      l_dis_value = l_dis.item();
      loss = losses::total_loss(l_act, l_dis, lambda);
    }
    grads = tape.backward(loss);
    }
    if (it >= iterations - tail) {
      tail_act += l_act_value / tail;
      tail_dis += l_dis_value / tail;
    }

    const double t = static_cast<double>(it + 1);
    // Cosine decay over the phase.
    const double lr = schedule.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * it / iterations));
    for (const auto& [name, grad] : grads) {
      if (!model.params().trainable(name)) throw ContractError("gradient reached frozen parameter " + name);
      auto w = model.params().mutable_data(name);
      const auto gv = grad.data();
      if (opts.weight_decay > 0.0) {
        const double keep = 1.0 - lr * opts.weight_decay;
        for (auto& x : w) x *= keep;
      }
      if (schedule.optimizer == OptimizerKind::sgd) {
        for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * gv[i];
      } else {
        auto& st = adam[name];
        if (st.m.empty()) {
          st.m.assign(w.size(), 0.0);
          st.v.assign(w.size(), 0.0);
        }
        const double b1 = opts.adam_beta1, b2 = opts.adam_beta2;
        const double c1 = 1.0 - std::pow(b1, t), c2 = 1.0 - std::pow(b2, t);
        for (std::size_t i = 0; i < w.size(); ++i) {
          st.m[i] = b1 * st.m[i] + (1 - b1) * gv[i];
          st.v[i] = b2 * st.v[i] + (1 - b2) * gv[i] * gv[i];
          w[i] -= lr * (st.m[i] / c1) / (std::sqrt(st.v[i] / c2) + opts.adam_eps);
        }
      }
    }
  }
  stats.l_act = tail_act;
  stats.l_dis = tail_dis;
  return stats;
}

void apply_freeze(policy::PolicyModel& model, FreezePolicy policy, bool extended) {
  auto& params = model.params();
  params.set_all_trainable(true);
  if (policy == FreezePolicy::none) return;
  if (!extended) throw ConfigError(std::string("freeze policy '") + freeze_name(policy) + "' needs an extended model");
  const bool enc = policy == FreezePolicy::encoder || policy == FreezePolicy::encoder_epio;
  const bool epio = policy == FreezePolicy::epio || policy == FreezePolicy::encoder_epio;
  if (enc) params.set_trainable_prefix("encoder", false);
  if (epio) {
    params.set_trainable_prefix("epio", false);
    for (int b = 0; b + 1 < model.prompt_blocks(); ++b) params.set_trainable(policy::PolicyModel::prompt_name(b), false);
  }
  if (policy == FreezePolicy::decoder) params.set_trainable_prefix("decoder", false);
  // The newest prompt and weight blocks always learn.
  params.set_trainable(policy::PolicyModel::prompt_name(model.prompt_blocks() - 1), true);
  const int wb = model.weight_blocks() - 1;
  for (int l = 0; l < model.config().layers; ++l) {
    params.set_trainable(policy::PolicyModel::wq_name(l, wb), true);
    params.set_trainable(policy::PolicyModel::wk_name(l, wb), true);
  }
}

BaseResult run_base(const Schedule& schedule, const DemoSet& demos, const TrainerOptions& opts) {
  schedule.validate();
  const auto start = std::chrono::steady_clock::now();
  policy::PolicyConfig pc = opts.policy;
  pc.grid = opts.world.grid;
  pc.rot_bins = opts.world.rot_bins;
  pc.seed = derive_seed(schedule.seed, 0x90d1u);
  auto model = std::make_shared<policy::PolicyModel>(pc);
  model->register_base(schedule.base);
  const auto fresh = samples_of(demos, schedule.base);
  const auto stats = train_phase(*model, {}, fresh, nullptr, 0.0, schedule.base_iterations, schedule,
                                 derive_seed(schedule.seed, 0x7a10u), opts);
  StepReport r;
  r.step = 0;
  r.skills = schedule.base;
  r.new_skills = schedule.base;
  r.success = evaluate(*model, schedule.base, opts.eval_episodes, derive_seed(schedule.seed, 0xe7a1u), opts.world);
  r.new_rate = r.all_rate = mean_of(r.success, schedule.base);
  const auto counts = policy::count_parameters(*model);
  r.trainable_params = counts.trainable;
  r.total_params = counts.total;
  r.iterations = stats.iterations;
  r.l_act = stats.l_act;
  r.wall_ms = opts.record_wall_time ? elapsed_ms(start) : 0.0;
  if (r.all_rate < opts.gate) {
    std::string detail;
    for (const auto& [s, v] : r.success) detail += " " + world::skill(s).name + "=" + std::to_string(v);
    throw TrainingError("base training failed the learnability gate: all-skill success " + std::to_string(r.all_rate) +
                        " < " + std::to_string(opts.gate) + " (" + detail.substr(1) +
                        "); final L_act " + std::to_string(stats.l_act));
  }
  return {model, r};
}

MethodPlan plan_for(Method m, const Schedule& s) {
  MethodPlan p;
  switch (m) {
    case Method::imanip:
      p = {true, true, true, s.freeze, s.strategy};
      break;
    case Method::finetune:
      p = {false, false, false, FreezePolicy::none, s.strategy};
      break;
    case Method::tib:
      p = {false, true, true, FreezePolicy::none, memory::Strategy::herding};
      break;
  }
  if (s.replay_k == 0) p.replay = false;
  if (s.lambda_dis == 0.0) p.distill = false;
  return p;
}

StepReport run_increment(policy::PolicyModel& model, const policy::PolicyModel& snapshot, memory::ReplayBuffer& buffer,
                         const std::vector<int>& new_skills, int step_index, const std::vector<int>& learned_before,
                         const Schedule& schedule, const MethodPlan& plan, const DemoSet& demos,
                         const TrainerOptions& opts) {
  const auto start = std::chrono::steady_clock::now();
  if (plan.extend) model.extend_for_skills(new_skills);
  apply_freeze(model, plan.freeze, plan.extend);
  const auto fresh = samples_of(demos, new_skills);
  std::vector<const memory::StoredSample*> mem;
  if (plan.replay) mem = buffer.all();
  const auto stats = train_phase(model, mem, fresh, plan.distill ? &snapshot : nullptr, schedule.lambda_dis,
                                 schedule.step_iterations, schedule,
                                 derive_seed(schedule.seed, 0x7a10u + static_cast<std::uint64_t>(step_index)), opts);
  std::vector<int> learned = learned_before;
  learned.insert(learned.end(), new_skills.begin(), new_skills.end());

  StepReport r;
  r.step = step_index;
  r.skills = learned;
  r.new_skills = new_skills;
  r.success = evaluate(model, learned, opts.eval_episodes, derive_seed(schedule.seed, 0xe7a1u), opts.world);
  r.old_rate = mean_of(r.success, learned_before);
  r.new_rate = mean_of(r.success, new_skills);
  r.all_rate = mean_of(r.success, learned);
  const auto counts = policy::count_parameters(model);
  r.trainable_params = counts.trainable;
  r.total_params = counts.total;
  r.iterations = stats.iterations;
  r.l_act = stats.l_act;
  r.l_dis = stats.l_dis;

  if (plan.replay) {
    memory::MemoryOptions mo{schedule.replay_k, plan.strategy, opts.entropy, derive_seed(schedule.seed, 0x3e30u)};
    for (int s : new_skills) memory::add_skill_to_memory(buffer, s, demos.at(s), model, mo);
  }
  r.wall_ms = opts.record_wall_time ? elapsed_ms(start) : 0.0;
  return r;
}

double RunReport::all_average() const {
  if (steps.empty()) return 0.0;
  double s = 0.0;
  for (const auto& st : steps) s += st.all_rate;
  return s / static_cast<double>(steps.size());
}

double RunReport::incremental_all_average() const {
  if (steps.size() < 2) return 0.0;
  double s = 0.0;
  for (std::size_t i = 1; i < steps.size(); ++i) s += steps[i].all_rate;
  return s / static_cast<double>(steps.size() - 1);
}

RunReport run_protocol(const Schedule& schedule, Method method, const TrainerOptions& opts, const BaseResult* base,
                       const DemoSet* demos_in) {
  schedule.validate();
  std::vector<int> all = schedule.base;
  for (const auto& st : schedule.steps) all.insert(all.end(), st.begin(), st.end());
  DemoSet owned;
  if (!demos_in) owned = make_demos(all, opts.demos_per_skill, data_seed_for(schedule.seed), opts.world);
  const DemoSet& demos = demos_in ? *demos_in : owned;

  RunReport run;
  run.schedule = schedule;
  run.method = method;
  {
    std::vector<world::Demonstration> flat;
    for (int s : all) flat.insert(flat.end(), demos.at(s).begin(), demos.at(s).end());
    run.data_hash = io::sha256_hex(world::encode_demos(flat, opts.world));
  }

  BaseResult owned_base;
  if (!base) {
    owned_base = run_base(schedule, demos, opts);
    base = &owned_base;
  }
  policy::PolicyModel model = *base->model;
  const MethodPlan plan = plan_for(method, schedule);
  memory::ReplayBuffer buffer(schedule.replay_k);
  if (plan.replay) {
    memory::MemoryOptions mo{schedule.replay_k, plan.strategy, opts.entropy, derive_seed(schedule.seed, 0x3e30u)};
    for (int s : schedule.base) memory::add_skill_to_memory(buffer, s, demos.at(s), model, mo);
  }
  auto record = [&](const StepReport& r) {
    run.steps.push_back(r);
    run.checkpoint_bytes.push_back(policy::encode_checkpoint(model));
    run.checkpoints.push_back(io::sha256_hex(run.checkpoint_bytes.back()));
    run.memory_index.push_back(memory::buffer_index_json(buffer));
    run.memory_bytes.push_back(memory::encode_buffer(buffer));
  };
  record(base->report);

  std::vector<int> learned = schedule.base;
  for (std::size_t k = 0; k < schedule.steps.size(); ++k) {
    const policy::PolicyModel snapshot = model;
    const auto r = run_increment(model, snapshot, buffer, schedule.steps[k], static_cast<int>(k + 1), learned, schedule,
                                 plan, demos, opts);
    learned = r.skills;
    record(r);
  }
  run.final_model = std::make_shared<policy::PolicyModel>(model);
  return run;
}

}  // namespace imanip::trainer
