#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "helpers.hpp"
#include "imanip/errors.hpp"
#include "imanip/memory/keyframes.hpp"
#include "imanip/memory/replay_buffer.hpp"
#include "imanip/memory/sampling.hpp"
#include "imanip/world/skillworld.hpp"

using namespace imanip;
using namespace imanip::memory;

namespace {

std::vector<TrajectoryPoint> walk(int n) {
  std::vector<TrajectoryPoint> t;
  for (int i = 0; i < n; ++i) t.push_back({{i, 0, 0}, true});
  return t;
}

// Mean-closest greedy recomputed from scratch each round.
std::vector<std::size_t> herding_oracle(const std::vector<std::vector<double>>& f, std::size_t k) {
  const std::size_t dim = f[0].size();
  std::vector<double> mu(dim, 0.0);
  for (const auto& x : f)
    for (std::size_t d = 0; d < dim; ++d) mu[d] += x[d];
  for (auto& m : mu) m /= static_cast<double>(f.size());
  std::vector<std::size_t> picked;
  for (std::size_t t = 0; t < k; ++t) {
    double best = INFINITY;
    std::size_t arg = 0;
    for (std::size_t i = 0; i < f.size(); ++i) {
      if (std::find(picked.begin(), picked.end(), i) != picked.end()) continue;
      auto trial = picked;
      trial.push_back(i);
      double dist = 0;
      for (std::size_t d = 0; d < dim; ++d) {
        double m = 0;
        for (auto j : trial) m += f[j][d];
        m /= static_cast<double>(trial.size());
        dist += (m - mu[d]) * (m - mu[d]);
      }
      if (std::sqrt(dist) < best) {
        best = std::sqrt(dist);
        arg = i;
      }
    }
    picked.push_back(arg);
  }
  return picked;
}

policy::PolicyModel small_model() {
  policy::PolicyConfig c;
  c.width = 16;
  c.latents = 8;
  c.layers = 1;
  c.seed = 5;
  policy::PolicyModel m(c);
  m.register_base({0});
  return m;
}

std::vector<world::Demonstration> slide_demos(int n) {
  std::vector<world::Demonstration> out;
  for (int i = 0; i < n; ++i) out.push_back(world::training_demo(world::skill("slide_block").id, i, 7));
  return out;
}

}  // namespace

TEST_SUITE("memory") {

TEST_CASE("keyframe extraction rules") {
  SUBCASE("toggles and a final standstill") {
    auto t = walk(11);
    for (int i = 3; i < 7; ++i) t[static_cast<std::size_t>(i)].gripper_open = false;
    t[10].effector = t[9].effector;
    CHECK(extract_keyframes(t) == std::vector<std::size_t>{3, 7, 10});
  }
  SUBCASE("constant motion gives only the last step") { CHECK(extract_keyframes(walk(6)) == std::vector<std::size_t>{5}); }
  SUBCASE("standstill and toggle on the same step merge") {
    auto t = walk(5);
    t[2].effector = t[1].effector;
    t[2].gripper_open = false;
    t[3].gripper_open = false;
    t[4].gripper_open = false;
    CHECK(extract_keyframes(t) == std::vector<std::size_t>{2, 4});
  }
  SUBCASE("single step") { CHECK(extract_keyframes(walk(1)) == std::vector<std::size_t>{0}); }
  CHECK_THROWS_AS(extract_keyframes({}), ContractError);
}

TEST_CASE("farthest-entropy worked example") {
  const std::vector<double> e{0.1, 0.2, 0.9, 0.5};
  CHECK(farthest_entropy_sample(e, 2) == std::vector<std::size_t>{2, 0});
  const auto a = distance_array(e);
  // row sums 1.3 / 1.1 / 1.9 / 1.1
  const double rows[] = {1.3, 1.1, 1.9, 1.1};
  for (std::size_t i = 0; i < 4; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < 4; ++j) s += a[i * 4 + j];
    CHECK(s == doctest::Approx(rows[i]).epsilon(1e-12));
  }
  const auto opt = brute_force_dispersion(e, 2);
  CHECK(opt.subset == std::vector<std::size_t>{0, 2});
  CHECK(opt.objective == doctest::Approx(1.6).epsilon(1e-12));
  // hand enumeration of the six pairs
  double best = 0;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = i + 1; j < 4; ++j) best = std::max(best, 2 * std::abs(e[i] - e[j]));
  CHECK(best == doctest::Approx(1.6).epsilon(1e-12));
}

TEST_CASE("sampler edge cases") {
  CHECK(farthest_entropy_sample({0.3, 0.3, 0.3}, 2) == std::vector<std::size_t>{0, 1});
  auto all = farthest_entropy_sample({0.5, 0.1, 0.7}, 3);
  std::sort(all.begin(), all.end());
  CHECK(all == std::vector<std::size_t>{0, 1, 2});
  CHECK_THROWS_AS(farthest_entropy_sample({0.1, 0.2}, 3), ContractError);
  CHECK_THROWS_AS(farthest_entropy_sample({0.1, 0.2}, 0), ContractError);
  CHECK_THROWS_AS(brute_force_dispersion(std::vector<double>(40, 0.0), 10), ContractError);
  const auto one = brute_force_dispersion({0.1, 0.2, 0.9, 0.5}, 1);
  CHECK(one.subset == std::vector<std::size_t>{2});
  CHECK(one.objective == doctest::Approx(1.9).epsilon(1e-12));
  CHECK(top_k({0.2, 0.9, 0.9, 0.1}, 2) == std::vector<std::size_t>{1, 2});
}

TEST_CASE("distance array symmetry and zero diagonal") {
  SplitMix64 rng(2);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> e(1 + static_cast<std::size_t>(rng.below(12)));
    for (auto& x : e) x = 5 * rng.uniform();
    const auto a = distance_array(e);
    const std::size_t n = e.size();
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(a[i * n + i] == 0.0);
      for (std::size_t j = 0; j < n; ++j) CHECK(a[i * n + j] == a[j * n + i]);
    }
  }
}

TEST_CASE("greedy against the exhaustive optimum") {
  SplitMix64 rng(1000);
  double min_ratio = 1.0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 2 + static_cast<std::size_t>(rng.below(11));
    const std::size_t k = 1 + static_cast<std::size_t>(rng.below(static_cast<int>(std::min<std::size_t>(4, n))));
    std::vector<double> e(n);
    for (auto& x : e) x = rng.uniform() * 3;
    const auto s = farthest_entropy_sample(e, k);
    CHECK(s == farthest_entropy_sample(e, k));
    const auto opt = brute_force_dispersion(e, k);
    if (k == 1) {
      CHECK(opt.subset[0] == s[0]);
    } else {
      const double g = dispersion_objective(e, s);
      CHECK(g <= opt.objective + 1e-12);
      if (opt.objective > 0) min_ratio = std::min(min_ratio, g / opt.objective);
    }
    // first pick coincides with the K=1 optimum
    CHECK(brute_force_dispersion(e, 1).subset[0] == s[0]);
    // objective nondecreasing in K
    double prev = 0;
    for (std::size_t kk = 1; kk <= std::min<std::size_t>(4, n); ++kk) {
      const double obj = dispersion_objective(e, farthest_entropy_sample(e, kk));
      CHECK(obj >= prev - 1e-12);
      prev = obj;
    }
  }
  MESSAGE("greedy / optimum minimum ratio over 1000 instances: " << min_ratio);
  CHECK(min_ratio >= 0.75);
}

TEST_CASE("herding matches the from-scratch oracle") {
  SplitMix64 rng(31);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 1 + static_cast<std::size_t>(rng.below(10));
    const std::size_t dim = 1 + static_cast<std::size_t>(rng.below(5));
    std::vector<std::vector<double>> f(n, std::vector<double>(dim));
    for (auto& r : f)
      for (auto& x : r) x = rng.normal();
    const std::size_t k = 1 + static_cast<std::size_t>(rng.below(static_cast<int>(n)));
    CHECK(herding_select(f, k) == herding_oracle(f, k));
  }
  CHECK_THROWS_AS(herding_select({{1.0}, {1.0, 2.0}}, 1), DimensionError);
}

TEST_CASE("build_memory quotas per strategy") {
  const auto model = small_model();
  const auto demos = slide_demos(20);
  const int sid = world::skill("slide_block").id;
  for (auto strat : {Strategy::farthest_entropy, Strategy::random, Strategy::herding, Strategy::hard_sample}) {
    INFO(strategy_name(strat));
    MemoryOptions o;
    o.strategy = strat;
    const auto buf = build_memory({{sid, demos}}, model, o);
    CHECK(buf.size() == 8);
    CHECK(buf.slots().size() == 4);
    for (const auto& [key, list] : buf.slots()) {
      CHECK(list.size() == 2);
      CHECK(list[0].demo_id != list[1].demo_id);
      for (const auto& s : list) CHECK(s.sample.action == demos[s.demo_id].samples[key.second].action);
    }
    const auto again = build_memory({{sid, demos}}, model, o);
    CHECK(buffer_index_json(buf) == buffer_index_json(again));
    CHECK(encode_buffer(buf) == encode_buffer(again));
  }
  SUBCASE("farthest-entropy stores per-slot greedy picks") {
    MemoryOptions o;
    const auto buf = build_memory({{sid, demos}}, model, o);
    for (std::size_t j = 0; j < 4; ++j) {
      std::vector<world::KeyframeSample> samples;
      for (const auto& d : demos) samples.push_back(d.samples[j]);
      const auto e = score_entropy(model, samples);
      const auto pick = farthest_entropy_sample(e, 2);
      const auto& stored = buf.slot(sid, j);
      CHECK(stored[0].demo_id == pick[0]);
      CHECK(stored[1].demo_id == pick[1]);
      CHECK(stored[0].entropy == e[pick[0]]);
    }
  }
  SUBCASE("episode strategy stores whole episodes") {
    MemoryOptions o;
    o.strategy = Strategy::episode;
    const auto buf = build_memory({{sid, demos}}, model, o);
    std::set<std::size_t> ids;
    for (const auto* s : buf.all()) ids.insert(s->demo_id);
    CHECK(ids.size() == 2);
    CHECK(buf.size() == 8);
  }
  SUBCASE("quota and registry violations") {
    ReplayBuffer buf(2);
    MemoryOptions o;
    add_skill_to_memory(buf, sid, demos, model, o);
    CHECK_THROWS_AS(add_skill_to_memory(buf, sid, demos, model, o), RegistryError);
    o.k = 3;
    CHECK_THROWS_AS(add_skill_to_memory(buf, 1, demos, model, o), ConfigError);
    CHECK_THROWS_AS(buf.add(buf.slot(sid, 0)[0]), ContractError);
    CHECK_THROWS_AS(parse_strategy("oldest"), ConfigError);
  }
}

TEST_CASE("entropy scores") {
  const auto model = small_model();
  const auto demos = slide_demos(2);
  const auto a = score_entropy(model, demos[0].samples);
  CHECK(a == score_entropy(model, demos[0].samples));
  for (double e : a) CHECK(e > 0.0);
  const auto recs = score_demos(model, demos);
  CHECK(recs.size() == 8);
  CHECK(recs[5].demo_id == 1);
  CHECK(recs[5].slot == 1);
}

TEST_CASE("batch sampling draws uniformly over the union") {
  const auto model = small_model();
  const auto demos = slide_demos(20);
  MemoryOptions o;
  const auto buf = build_memory({{world::skill("slide_block").id, demos}}, model, o);
  std::vector<world::KeyframeSample> fresh;
  for (int i = 0; i < 4; ++i)
    for (const auto& s : world::training_demo(world::skill("press_button").id, i, 3).samples) fresh.push_back(s);
  SplitMix64 rng(77);
  const std::size_t draws = 10000;
  const auto batch = sample_batch(buf, fresh, draws, rng);
  double old = 0;
  for (const auto& b : batch) old += b.from_memory;
  const double p = 8.0 / (8.0 + static_cast<double>(fresh.size()));
  const double sigma = std::sqrt(p * (1 - p) / draws);
  MESSAGE("old fraction " << old / draws << " expected " << p);
  CHECK(std::abs(old / draws - p) <= 3 * sigma);

  SplitMix64 r1(5), r2(5);
  const auto b1 = sample_batch(buf, fresh, 32, r1);
  const auto b2 = sample_batch(buf, fresh, 32, r2);
  for (std::size_t i = 0; i < 32; ++i) {
    CHECK(b1[i].from_memory == b2[i].from_memory);
    CHECK(b1[i].pool_index == b2[i].pool_index);
  }
  SplitMix64 r3(6);
  for (const auto& b : sample_batch(ReplayBuffer(2), fresh, 50, r3)) CHECK_FALSE(b.from_memory);
  CHECK_THROWS_AS(sample_batch(ReplayBuffer(2), {}, 4, r3), ContractError);
}

}  // TEST_SUITE
