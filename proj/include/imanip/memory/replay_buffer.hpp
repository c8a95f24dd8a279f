#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "imanip/policy/policy.hpp"
#include "imanip/rng.hpp"
#include "imanip/world/skillworld.hpp"

namespace imanip::memory {

enum class Strategy { farthest_entropy, random, episode, herding, hard_sample };
Strategy parse_strategy(const std::string& name);  // ConfigError on unknown names
const char* strategy_name(Strategy s);

// Scoring signal for entropy-based strategies.
enum class EntropyMode { action_loss, shannon };

struct EntropyRecord {
  std::size_t demo_id = 0;
  std::size_t slot = 0;
  double e = 0;
};

// Per-sample entropy of keyframe samples under `model` (inference mode).
std::vector<double> score_entropy(const policy::PolicyModel& model, const std::vector<world::KeyframeSample>& samples,
                                  EntropyMode mode = EntropyMode::action_loss);
// Scores every keyframe of every demo, tagged with demo index and slot.
std::vector<EntropyRecord> score_demos(const policy::PolicyModel& model, const std::vector<world::Demonstration>& demos,
                                       EntropyMode mode = EntropyMode::action_loss);

struct StoredSample {
  world::KeyframeSample sample;
  int skill_id = 0;
  std::size_t slot = 0;
  std::size_t demo_id = 0;       // index within the skill's training demos
  std::uint64_t episode_seed = 0;
  double entropy = 0;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t quota = 2) : quota_(quota) {}

  std::size_t quota() const { return quota_; }
  void add(StoredSample s);
  bool has_skill(int skill_id) const;
  std::vector<int> skills() const;

  using SlotKey = std::pair<int, std::size_t>;  // (skill, keyframe slot)
  const std::map<SlotKey, std::vector<StoredSample>>& slots() const { return slots_; }
  const std::vector<StoredSample>& slot(int skill_id, std::size_t slot) const;
  std::vector<const StoredSample*> all() const;
  std::size_t size() const;
  bool empty() const { return size() == 0; }

 private:
  std::size_t quota_;
  std::map<SlotKey, std::vector<StoredSample>> slots_;
};

struct MemoryOptions {
  std::size_t k = 2;
  Strategy strategy = Strategy::farthest_entropy;
  EntropyMode entropy = EntropyMode::action_loss;
  std::uint64_t seed = 0;  // random / episode draws
};

// Select exemplars for one skill and add them to `buffer`.
void add_skill_to_memory(ReplayBuffer& buffer, int skill_id, const std::vector<world::Demonstration>& demos,
                         const policy::PolicyModel& model, const MemoryOptions& opts);

ReplayBuffer build_memory(const std::map<int, std::vector<world::Demonstration>>& demos_by_skill,
                          const policy::PolicyModel& model, const MemoryOptions& opts);

struct BatchItem {
  const world::KeyframeSample* sample = nullptr;
  bool from_memory = false;
  std::size_t pool_index = 0;  // index into memory.all() or the new-sample list
};

// Uniform draws with replacement over the union of memory and new samples.
std::vector<BatchItem> sample_batch(const std::vector<const StoredSample*>& memory,
                                    const std::vector<world::KeyframeSample>& fresh, std::size_t batch_size,
                                    SplitMix64& rng);
std::vector<BatchItem> sample_batch(const ReplayBuffer& buffer, const std::vector<world::KeyframeSample>& fresh,
                                    std::size_t batch_size, SplitMix64& rng);

// Provenance index and binary payload for the run manifest.
std::string buffer_index_json(const ReplayBuffer& buffer);
std::vector<std::uint8_t> encode_buffer(const ReplayBuffer& buffer);

}  // namespace imanip::memory
