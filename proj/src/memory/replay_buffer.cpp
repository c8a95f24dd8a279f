#include "imanip/memory/replay_buffer.hpp"

#include <algorithm>
#include <numeric>

#include <json.hpp>

#include "imanip/binary_io.hpp"
#include "imanip/errors.hpp"
#include "imanip/losses/losses.hpp"
#include "imanip/memory/sampling.hpp"

namespace imanip::memory {

Strategy parse_strategy(const std::string& name) {
  if (name == "farthest-entropy" || name == "farthest_entropy") return Strategy::farthest_entropy;
  if (name == "random") return Strategy::random;
  if (name == "episode") return Strategy::episode;
  if (name == "herding") return Strategy::herding;
  if (name == "hard-sample" || name == "hard_sample") return Strategy::hard_sample;
  throw ConfigError("unknown replay strategy '" + name + "'");
}

const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::farthest_entropy: return "farthest-entropy";
    case Strategy::random: return "random";
    case Strategy::episode: return "episode";
    case Strategy::herding: return "herding";
    case Strategy::hard_sample: return "hard-sample";
  }
  return "?";
}

std::vector<double> score_entropy(const policy::PolicyModel& model, const std::vector<world::KeyframeSample>& samples,
                                  EntropyMode mode) {
  std::vector<double> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    const auto q = model.infer(s.obs).q;
    out.push_back(mode == EntropyMode::action_loss ? losses::action_loss(q, s.action).item()
                                                   : losses::predictive_entropy(q));
  }
  return out;
}

std::vector<EntropyRecord> score_demos(const policy::PolicyModel& model, const std::vector<world::Demonstration>& demos,
                                       EntropyMode mode) {
  std::vector<EntropyRecord> out;
  for (std::size_t d = 0; d < demos.size(); ++d) {
    const auto e = score_entropy(model, demos[d].samples, mode);
    for (std::size_t j = 0; j < e.size(); ++j) out.push_back({d, j, e[j]});
  }
  return out;
}

void ReplayBuffer::add(StoredSample s) {
  auto& list = slots_[{s.skill_id, s.slot}];
  if (list.size() >= quota_) throw ContractError("replay slot over quota");
  list.push_back(std::move(s));
}

bool ReplayBuffer::has_skill(int skill_id) const {
  return std::any_of(slots_.begin(), slots_.end(), [&](const auto& kv) { return kv.first.first == skill_id; });
}

std::vector<int> ReplayBuffer::skills() const {
  std::vector<int> out;
  for (const auto& kv : slots_) {
    if (out.empty() || out.back() != kv.first.first) out.push_back(kv.first.first);
  }
  return out;
}

const std::vector<StoredSample>& ReplayBuffer::slot(int skill_id, std::size_t slot) const {
  auto it = slots_.find({skill_id, slot});
  if (it == slots_.end()) throw LookupError("no replay slot (" + std::to_string(skill_id) + "," + std::to_string(slot) + ")");
  return it->second;
}

std::vector<const StoredSample*> ReplayBuffer::all() const {
  std::vector<const StoredSample*> out;
  for (const auto& kv : slots_) {
    for (const auto& s : kv.second) out.push_back(&s);
  }
  return out;
}

std::size_t ReplayBuffer::size() const {
  std::size_t n = 0;
  for (const auto& kv : slots_) n += kv.second.size();
  return n;
}

void add_skill_to_memory(ReplayBuffer& buffer, int skill_id, const std::vector<world::Demonstration>& demos,
                         const policy::PolicyModel& model, const MemoryOptions& opts) {
  if (opts.k == 0 || demos.empty()) return;
  if (buffer.quota() != opts.k) throw ConfigError("memory quota differs from the buffer quota");
  if (buffer.has_skill(skill_id)) throw RegistryError("skill " + std::to_string(skill_id) + " already in memory");
  auto store = [&](std::size_t d, std::size_t j, double e) {
    buffer.add({demos[d].samples[j], skill_id, j, d, demos[d].seed, e});
  };
  SplitMix64 rng(derive_seed(opts.seed, 0x3e30u + static_cast<std::uint64_t>(skill_id)));

  if (opts.strategy == Strategy::episode) {
    std::vector<std::size_t> order(demos.size());
    std::iota(order.begin(), order.end(), 0);
    shuffle(order.begin(), order.end(), rng);
    order.resize(std::min(opts.k, order.size()));
    std::sort(order.begin(), order.end());
    for (auto d : order) {
      for (std::size_t j = 0; j < demos[d].samples.size(); ++j) store(d, j, 0.0);
    }
    return;
  }

  // Group keyframe samples by ordinal slot.
  std::size_t slots = 0;
  for (const auto& d : demos) slots = std::max(slots, d.samples.size());
  const bool needs_entropy = opts.strategy == Strategy::farthest_entropy || opts.strategy == Strategy::hard_sample;
  for (std::size_t j = 0; j < slots; ++j) {
    std::vector<std::size_t> members;
    std::vector<world::KeyframeSample> samples;
    for (std::size_t d = 0; d < demos.size(); ++d) {
      if (j < demos[d].samples.size()) {
        members.push_back(d);
        samples.push_back(demos[d].samples[j]);
      }
    }
    const std::size_t k = std::min(opts.k, members.size());
    std::vector<double> e(members.size(), 0.0);
    if (needs_entropy) e = score_entropy(model, samples, opts.entropy);
    std::vector<std::size_t> pick;
    switch (opts.strategy) {
      case Strategy::farthest_entropy: pick = farthest_entropy_sample(e, k); break;
      case Strategy::hard_sample: pick = top_k(e, k); break;
      case Strategy::herding: {
        std::vector<std::vector<double>> feats;
        for (const auto& s : samples) {
          const auto f = model.infer(s.obs).features;
          feats.emplace_back(f.data().begin(), f.data().end());
        }
        pick = herding_select(feats, k);
        break;
      }
      case Strategy::random: {
        std::vector<std::size_t> idx(members.size());
        std::iota(idx.begin(), idx.end(), 0);
        shuffle(idx.begin(), idx.end(), rng);
        pick.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
        break;
      }
      case Strategy::episode: break;
    }
    for (auto i : pick) store(members[i], j, e[i]);
  }
}

ReplayBuffer build_memory(const std::map<int, std::vector<world::Demonstration>>& demos_by_skill,
                          const policy::PolicyModel& model, const MemoryOptions& opts) {
  ReplayBuffer buffer(opts.k);
  for (const auto& [skill_id, demos] : demos_by_skill) add_skill_to_memory(buffer, skill_id, demos, model, opts);
  return buffer;
}

std::vector<BatchItem> sample_batch(const std::vector<const StoredSample*>& memory,
                                    const std::vector<world::KeyframeSample>& fresh, std::size_t batch_size,
                                    SplitMix64& rng) {
  if (batch_size == 0) throw ContractError("sample_batch: batch size must be positive");
  const std::size_t total = memory.size() + fresh.size();
  if (total == 0) throw ContractError("sample_batch: both pools are empty");
  std::vector<BatchItem> out;
  out.reserve(batch_size);
  for (std::size_t b = 0; b < batch_size; ++b) {
    const std::size_t i = rng.below(static_cast<std::uint64_t>(total));
    if (i < memory.size()) {
      out.push_back({&memory[i]->sample, true, i});
    } else {
      out.push_back({&fresh[i - memory.size()], false, i - memory.size()});
    }
  }
  return out;
}

std::vector<BatchItem> sample_batch(const ReplayBuffer& buffer, const std::vector<world::KeyframeSample>& fresh,
                                    std::size_t batch_size, SplitMix64& rng) {
  return sample_batch(buffer.all(), fresh, batch_size, rng);
}

std::string buffer_index_json(const ReplayBuffer& buffer) {
  nlohmann::json j;
  j["quota"] = buffer.quota();
  j["size"] = buffer.size();
  j["entries"] = nlohmann::json::array();
  for (const auto* s : buffer.all()) {
    j["entries"].push_back({{"skill", s->skill_id},
                            {"slot", s->slot},
                            {"demo_id", s->demo_id},
                            {"episode_seed", s->episode_seed},
                            {"entropy", s->entropy}});
  }
  return j.dump();
}

std::vector<std::uint8_t> encode_buffer(const ReplayBuffer& buffer) {
  // "IMMEM1\0\0", u32 quota, u32 count, then per entry: i32 skill, u32 slot,
  // u32 demo, u64 seed, f64 entropy, action (6 × i32), 5 × f64 proprio,
  // tokens (u32 n + i32s), voxels (u32 nnz + {u32 index, f64 value}).
  io::Writer w;
  const char magic[8] = {'I', 'M', 'M', 'E', 'M', '1', '\0', '\0'};
  w.bytes(magic, 8);
  w.u32(static_cast<std::uint32_t>(buffer.quota()));
  const auto items = buffer.all();
  w.u32(static_cast<std::uint32_t>(items.size()));
  for (const auto* s : items) {
    w.i32(s->skill_id);
    w.u32(static_cast<std::uint32_t>(s->slot));
    w.u32(static_cast<std::uint32_t>(s->demo_id));
    w.u64(s->episode_seed);
    w.f64(s->entropy);
    const auto& a = s->sample.action;
    w.i32(a.trans);
    for (int r : a.rot) w.i32(r);
    w.i32(a.open);
    w.i32(a.collide);
    for (double p : s->sample.obs.proprio) w.f64(p);
    w.u32(static_cast<std::uint32_t>(s->sample.obs.tokens.size()));
    for (int t : s->sample.obs.tokens) w.i32(t);
    const auto v = s->sample.obs.voxels.data();
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
  w.u32(io::crc32(w.buffer().data(), w.buffer().size()));
  return w.buffer();
}

}  // namespace imanip::memory
