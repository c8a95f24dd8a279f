#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "imanip/errors.hpp"
#include "imanip/grad/grad_check.hpp"
#include "imanip/losses/losses.hpp"
#include "imanip/policy/checkpoint.hpp"
#include "imanip/policy/policy.hpp"

using namespace imanip;
using namespace imanip::policy;
using testutil::random_action;
using testutil::random_observation;

TEST_SUITE("policy") {

TEST_CASE("output shapes") {
  PolicyConfig c;
  c.width = 16;
  c.latents = 8;
  c.layers = 1;
  PolicyModel m(c);
  m.register_base({0});
  SplitMix64 rng(1);
  const auto obs = random_observation(8, rng, c.vocab_size());
  const auto out = m.infer(obs);
  CHECK(out.q.trans.shape() == grad::Shape{512});
  CHECK(out.q.rot.shape() == grad::Shape{3, 12});
  CHECK(out.q.open.shape() == grad::Shape{2});
  CHECK(out.q.collide.shape() == grad::Shape{2});
  CHECK(out.features.shape() == grad::Shape{32});

  auto wrong = random_observation(4, rng, c.vocab_size());
  CHECK_THROWS_AS(m.infer(wrong), DimensionError);
}

TEST_CASE("full-scale configuration validates without running") {
  const auto c = full_scale_config();
  CHECK_NOTHROW(c.validate());
  const auto h = c.head_shapes();
  CHECK(h.trans == 1000000);
  CHECK(h.rot_axes * h.rot_bins == 216);
  CHECK(h.open == 2);
  CHECK(h.collide == 2);
  PolicyConfig bad = c;
  bad.patch = 3;
  CHECK_THROWS_AS(bad.validate(), DimensionError);
}

TEST_CASE("language permutation with zeroed positional embeddings") {
  PolicyConfig c;
  c.width = 16;
  c.latents = 8;
  c.layers = 2;
  PolicyModel m(c);
  m.register_base({0});
  auto pos = m.params().mutable_data("encoder.lang.pos");
  std::fill(pos.begin(), pos.end(), 0.0);
  SplitMix64 rng(2);
  auto obs = random_observation(8, rng, c.vocab_size(), 5);
  obs.tokens = {3, 7, 11, 4, 9};
  const auto a = m.infer(obs);
  std::swap(obs.tokens[1], obs.tokens[3]);
  const auto b = m.infer(obs);
  CHECK(grad::max_abs_diff(a.q.trans, b.q.trans) <= 1e-12);
  CHECK(grad::max_abs_diff(a.q.rot, b.q.rot) <= 1e-12);
  CHECK(grad::max_abs_diff(a.q.open, b.q.open) <= 1e-12);
  CHECK(grad::max_abs_diff(a.q.collide, b.q.collide) <= 1e-12);
}

TEST_CASE("predict_action argmax and ties") {
  QValues q;
  q.trans = grad::Tensor::zeros({8});
  q.rot = grad::Tensor::matrix(3, 3, {0, 1, 1, 2, 0, 0, 0, 0, 5});
  q.open = grad::Tensor::vector({0.1, 2.0});
  q.collide = grad::Tensor::vector({0.0, 0.0});
  const auto a = predict_action(q);
  CHECK(a.trans == 0);
  CHECK(a.rot == std::array<int, 3>{1, 0, 2});
  CHECK(a.open == 1);
  CHECK(a.collide == 0);
}

TEST_CASE("extension registry, shapes and freezing") {
  PolicyConfig c = testutil::tiny_policy_config();
  PolicyModel m(c);
  m.register_base({0, 1});
  CHECK(m.key_width() == c.width);
  const auto before = count_parameters(m);
  m.extend_for_skill(2);
  m.extend_for_skill(3);
  CHECK_THROWS_AS(m.extend_for_skill(3), RegistryError);
  CHECK_THROWS_AS(m.extend_for_skill(0), RegistryError);
  CHECK(m.key_width() == c.width + 2 * c.d_new);
  CHECK(m.prompt_blocks() == 3);
  REQUIRE(m.registry().size() == 3);
  CHECK(m.registry()[1].skills == std::vector<int>{2});
  CHECK(m.registry()[2].skills == std::vector<int>{3});
  CHECK(m.registry()[2].prompt_block == 2);
  for (int l = 0; l < c.layers; ++l) {
    CHECK(m.params().get(PolicyModel::wq_name(l, 2)).shape() == grad::Shape{4, 2});
    CHECK(m.params().trainable(PolicyModel::wq_name(l, 2)));
    CHECK_FALSE(m.params().trainable(PolicyModel::wq_name(l, 1)));
    CHECK_FALSE(m.params().trainable(PolicyModel::wq_name(l, 0)));
  }
  CHECK_FALSE(m.params().trainable("encoder.voxel.w1"));
  CHECK_FALSE(m.params().trainable(PolicyModel::prompt_name(1)));
  CHECK(m.params().trainable(PolicyModel::prompt_name(2)));
  CHECK(m.params().trainable("decoder.head.w1"));
  const auto after = count_parameters(m);
  CHECK(after.total > before.total);
  CHECK(after.trainable < after.total);
}

TEST_CASE("zero extension keeps outputs when the new prompt is masked") {
  PolicyConfig c;
  c.width = 16;
  c.latents = 8;
  c.layers = 2;
  PolicyModel m(c);
  m.register_base({0});
  PolicyModel ext = m;
  ext.extend_for_skill(1);
  ForwardOptions mask;
  mask.masked_prompts = {false, true};
  SplitMix64 rng(3);
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const auto obs = random_observation(8, rng, c.vocab_size());
    const auto a = m.infer(obs).q;
    const auto b = ext.infer(obs, mask).q;
    worst = std::max({worst, grad::max_abs_diff(a.trans, b.trans), grad::max_abs_diff(a.rot, b.rot),
                      grad::max_abs_diff(a.open, b.open), grad::max_abs_diff(a.collide, b.collide)});
  }
  CHECK(worst <= 1e-12);
  // Unmasked, the new prompt is part of the input and does change the output.
  const auto obs = random_observation(8, rng, c.vocab_size());
  CHECK(grad::max_abs_diff(m.infer(obs).q.trans, ext.infer(obs).q.trans) > 0.0);
}

TEST_CASE("full L_total gradient matches finite differences on a tiny model") {
  PolicyConfig c = testutil::tiny_policy_config();
  PolicyModel teacher(c);
  teacher.register_base({0});
  PolicyModel m = teacher;
  m.extend_for_skill(1);
  // Move the zero block off its initial point so every path is exercised.
  m.params().set_all_trainable(true);
  SplitMix64 rng(4);
  for (const auto& name : m.params().names()) {
    for (auto& v : m.params().mutable_data(name)) v += 0.05 * rng.normal();
  }
  std::vector<world::KeyframeSample> batch;
  for (int i = 0; i < 3; ++i) batch.push_back({random_observation(2, rng, c.vocab, 3), random_action(2, 3, rng)});
  std::vector<QValues> old_q;
  for (const auto& s : batch) old_q.push_back(teacher.infer(s.obs).q);

  const auto loss = [&](const grad::BoundParams& p) {
    std::vector<QValues> q;
    std::vector<world::KeyframeAction> y;
    for (const auto& s : batch) {
      q.push_back(m.forward(s.obs, p).q);
      y.push_back(s.action);
    }
    return losses::total_loss(losses::action_loss(q, y), losses::distill_loss(old_q, q), 0.5);
  };
  const auto rep = grad::grad_check(loss, m.params());
  INFO("worst " << rep.worst_param << "[" << rep.worst_index << "] analytic " << rep.analytic << " numeric "
                << rep.numeric);
  CHECK(rep.coordinates == m.params().scalar_count());
  CHECK(rep.ok(1e-4));
}

TEST_CASE("gradient keys equal the trainable set after extension") {
  PolicyConfig c = testutil::tiny_policy_config();
  PolicyModel m(c);
  m.register_base({0});
  m.extend_for_skill(1);
  SplitMix64 rng(5);
  const auto obs = random_observation(2, rng, c.vocab);
  grad::Tape tape;
  grad::TapeScope scope(tape);
  const auto p = m.params().bind(&tape);
  const auto g = tape.backward(losses::action_loss(m.forward(obs, p).q, random_action(2, 3, rng)));
  std::vector<std::string> keys;
  for (const auto& kv : g) keys.push_back(kv.first);
  CHECK(keys == m.params().trainable_names());
}

TEST_CASE("prompt attribution") {
  PolicyConfig c = testutil::tiny_policy_config();
  PolicyModel m(c);
  CHECK_THROWS_AS(prompt_attribution(m, {}), ContractError);
  m.register_base({0});
  SplitMix64 rng(6);
  std::vector<world::KeyframeSample> batch;
  for (int i = 0; i < 4; ++i) batch.push_back({random_observation(2, rng, c.vocab), random_action(2, 3, rng)});
  CHECK_THROWS_AS(prompt_attribution(m, {}), ContractError);
  const auto one = prompt_attribution(m, batch);
  REQUIRE(one.size() == 1);
  CHECK(one[0] == 1.0);
  m.extend_for_skill(1);
  m.extend_for_skill(2);
  const auto three = prompt_attribution(m, batch);
  REQUIRE(three.size() == 3);
  double total = 0.0;
  for (double w : three) {
    CHECK(w >= 0.0);
    total += w;
  }
  CHECK(std::abs(total - 1.0) <= 1e-12);
  // Attribution enables gradients temporarily but leaves the flags alone.
  CHECK_FALSE(m.params().trainable(PolicyModel::prompt_name(0)));
}

TEST_CASE("checkpoint round trip is bit exact") {
  PolicyConfig c = testutil::tiny_policy_config();
  PolicyModel m(c);
  m.register_base({0, 1});
  m.extend_for_skill(4);
  const auto bytes = encode_checkpoint(m);
  const PolicyModel r = decode_checkpoint(bytes);
  CHECK(encode_checkpoint(r) == bytes);
  CHECK(r.registry().size() == 2);
  CHECK(r.weight_blocks() == 2);
  for (const auto& n : m.params().names()) {
    CHECK(grad::bit_equal(m.params().get(n), r.params().get(n)));
    CHECK(m.params().trainable(n) == r.params().trainable(n));
  }
  auto corrupt = bytes;
  corrupt[corrupt.size() / 2] ^= 0x01;
  CHECK_THROWS_AS(decode_checkpoint(corrupt), FormatError);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(bad_magic), FormatError);
}

}  // TEST_SUITE
