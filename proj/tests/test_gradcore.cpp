#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "imanip/errors.hpp"
#include "imanip/grad/grad_check.hpp"
#include "imanip/grad/ops.hpp"
#include "imanip/grad/params.hpp"
#include "imanip/grad/tape.hpp"

using namespace imanip;
using namespace imanip::grad;
using testutil::random_tensor;

namespace {

// Wraps a unary tensor function as a grad_check over one parameter "x".
GradCheckReport check_unary(const std::function<Tensor(const Tensor&)>& f, Tensor x) {
  ParameterSet ps;
  ps.add("x", std::move(x));
  return grad_check([&](const BoundParams& p) { return sum(f(p("x"))); }, ps);
}

// Weighted sum with fixed random weights: probes every output coordinate.
Tensor probe(const Tensor& y, std::uint64_t seed = 99) {
  SplitMix64 rng(seed);
  return sum(mul(y, random_tensor(y.shape(), rng)));
}

}  // namespace

TEST_SUITE("gradcore") {

TEST_CASE("tensor invariants") {
  CHECK_THROWS_AS(Tensor({2, 2}, {1, 2, 3}), DimensionError);
  CHECK_THROWS_AS(Tensor({2, 0}, {}), DimensionError);
  const Tensor t = Tensor::matrix(2, 2, {1, 2, 3, 4});
  Tensor u = t;
  u.mutable_data()[0] = 9;
  CHECK(t[0] == 1);  // copy-on-write
  CHECK(u[0] == 9);
}

TEST_CASE("matmul examples") {
  const Tensor a = Tensor::matrix(2, 2, {1, 2, 3, 4});
  const Tensor id = Tensor::matrix(2, 2, {1, 0, 0, 1});
  CHECK(bit_equal(matmul(a, id), a));
  const Tensor r = matmul(Tensor::matrix(1, 2, {1, 0}), Tensor::matrix(2, 1, {2, 5}));
  CHECK(r.shape() == Shape{1, 1});
  CHECK(r[0] == 2);
  CHECK_THROWS_AS(matmul(a, Tensor::matrix(3, 1, {1, 2, 3})), DimensionError);

  SplitMix64 rng(1);
  ParameterSet ps;
  ps.add("a", random_tensor({3, 3}, rng));
  ps.add("b", random_tensor({3, 3}, rng));
  const auto rep = grad_check([](const BoundParams& p) { return sum(matmul(p("a"), p("b"))); }, ps);
  CHECK(rep.max_rel_error <= 1e-6);
  // d sum(AB)/dA = 1·Bᵀ: row sums of B.
  Tape tape;
  TapeScope scope(tape);
  const auto bp = ps.bind(&tape);
  const auto g = tape.backward(sum(matmul(bp("a"), bp("b"))));
  const auto& b = ps.get("b");
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t k = 0; k < 3; ++k) CHECK(g.at("a")[i * 3 + k] == doctest::Approx(b[k * 3] + b[k * 3 + 1] + b[k * 3 + 2]));
  }
}

TEST_CASE("elementwise examples") {
  CHECK(bit_equal(add(Tensor::vector({1, 2}), Tensor::vector({3, 4})), Tensor::vector({4, 6})));
  CHECK(bit_equal(scale(Tensor::vector({2, 4}), 0.5), Tensor::vector({1, 2})));
  CHECK(bit_equal(mul(Tensor::vector({1, 2}), Tensor::scalar(3)), Tensor::vector({3, 6})));
  CHECK_THROWS_AS(add(Tensor::vector({1, 2}), Tensor::vector({1, 2, 3})), DimensionError);
  const auto rep = check_unary([](const Tensor& x) { return gelu(x); }, Tensor::vector({-1, 0, 2}));
  CHECK(rep.max_rel_error <= 1e-6);
  // abs: subgradient 0 at 0.
  Tape tape;
  TapeScope scope(tape);
  const Tensor x = tape.watch("x", Tensor::vector({-2, 0, 3}));
  const auto g = tape.backward(sum(imanip::grad::abs(x)));
  CHECK(g.at("x").values() == std::vector<double>{-1, 0, 1});
}

TEST_CASE("softmax examples and properties") {
  const Tensor s = softmax(Tensor::vector({0, 0}), 0);
  CHECK(s[0] == 0.5);
  CHECK(s[1] == 0.5);
  const Tensor big = softmax(Tensor::vector({1000, 0}), 0);
  CHECK(std::abs(big[0] - 1.0) <= 1e-12);
  CHECK(big[1] <= 1e-12);
  SplitMix64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t rows = 1 + rng.below(std::uint64_t{6}), cols = 1 + rng.below(std::uint64_t{16});
    const Tensor x = random_tensor({rows, cols}, rng, 20.0);
    const Tensor y = softmax(x, 1);
    for (std::size_t r = 0; r < rows; ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < cols; ++c) {
        const double v = y[r * cols + c];
        CHECK(v > 0.0);
        CHECK(v <= 1.0);
        total += v;
      }
      CHECK(std::abs(total - 1.0) <= 1e-12);
    }
  }
  const auto rep = check_unary([](const Tensor& x) { return probe(softmax(x, 0)); }, random_tensor({5}, rng));
  CHECK(rep.max_rel_error <= 1e-6);
}

TEST_CASE("cross entropy examples") {
  CHECK(cross_entropy(Tensor::vector({0, 0}), 0).item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(cross_entropy(Tensor::vector({50, 0}), 0).item() < 1e-20);
  CHECK_THROWS_AS(cross_entropy(Tensor::vector({0, 0}), 2), IndexError);
  SplitMix64 rng(3);
  const Tensor logits = random_tensor({6}, rng, 3.0);
  Tape tape;
  TapeScope scope(tape);
  const Tensor x = tape.watch("x", logits);
  const auto g = tape.backward(cross_entropy(x, 4));
  const Tensor p = softmax(logits, 0);
  for (std::size_t i = 0; i < 6; ++i) CHECK(std::abs(g.at("x")[i] - (p[i] - (i == 4 ? 1.0 : 0.0))) <= 1e-12);
  const auto rep = check_unary([](const Tensor& v) { return cross_entropy(v, 4); }, logits);
  CHECK(rep.max_rel_error <= 1e-6);
}

TEST_CASE("layer norm examples") {
  const Tensor ones = Tensor::ones({4}), zeros = Tensor::zeros({4});
  const Tensor c = layer_norm(Tensor::vector({3, 3, 3, 3}), ones, zeros);
  for (double v : c.data()) CHECK(v == 0.0);
  const Tensor y = layer_norm(Tensor::vector({1, 3}), Tensor::ones({2}), Tensor::zeros({2}));
  // (x − 2) / sqrt(1 + 1e-5)
  const double expect = 1.0 / std::sqrt(1.0 + 1e-5);
  CHECK(std::abs(y[0] + expect) <= 1e-12);
  CHECK(std::abs(y[1] - expect) <= 1e-12);
  CHECK(std::abs(y[1] - 1.0) <= 1e-4);
  CHECK_THROWS_AS(layer_norm(Tensor::vector({1, 3}), Tensor::ones({3}), Tensor::zeros({3})), DimensionError);
  SplitMix64 rng(4);
  ParameterSet ps;
  ps.add("x", random_tensor({2, 8}, rng));
  ps.add("g", random_tensor({8}, rng));
  ps.add("b", random_tensor({8}, rng));
  const auto rep = grad_check([](const BoundParams& p) { return probe(layer_norm(p("x"), p("g"), p("b"))); }, ps);
  CHECK(rep.max_rel_error <= 1e-5);
}

TEST_CASE("concat slice gather") {
  const Tensor a = Tensor::matrix(2, 1, {1, 2}), b = Tensor::matrix(1, 1, {3});
  const Tensor c = concat({a, b}, 0);
  CHECK(c.shape() == Shape{3, 1});
  CHECK(c.values() == std::vector<double>{1, 2, 3});
  SplitMix64 rng(5);
  const Tensor x = random_tensor({6, 4}, rng);
  CHECK(bit_equal(concat({slice(x, 0, 0, 3), slice(x, 0, 3, 6)}, 0), x));
  CHECK(bit_equal(concat({slice(x, 1, 0, 1), slice(x, 1, 1, 4)}, 1), x));
  CHECK_THROWS_AS(slice(x, 0, 4, 8), DimensionError);
  CHECK_THROWS_AS(concat({a, Tensor::matrix(1, 2, {1, 2})}, 0), DimensionError);
  const std::vector<std::size_t> bad{7};
  CHECK_THROWS_AS(gather(x, 0, bad), DimensionError);
  {
    Tape tape;
    TapeScope scope(tape);
    const Tensor ta = tape.watch("a", a), tb = tape.watch("b", b);
    const auto g = tape.backward(sum(concat({ta, tb}, 0)));
    CHECK(bit_equal(g.at("a"), Tensor::ones({2, 1})));
  }
  ParameterSet ps;
  ps.add("x", x);
  const std::vector<std::size_t> idx{0, 2, 2, 5};
  CHECK(grad_check([&](const BoundParams& p) { return probe(gather(p("x"), 0, idx)); }, ps).max_rel_error <= 1e-6);
  const std::vector<std::size_t> cols{3, 0, 3};
  CHECK(grad_check([&](const BoundParams& p) { return probe(gather(p("x"), 1, cols)); }, ps).max_rel_error <= 1e-6);
}

TEST_CASE("backward contract") {
  Tape tape;
  TapeScope scope(tape);
  const Tensor p = tape.watch("p", Tensor::vector({1, 2, 3}));
  const auto g = tape.backward(sum(p));
  CHECK(bit_equal(g.at("p"), Tensor::ones({3})));
  CHECK_THROWS_AS(tape.backward(p), ContractError);

  // Frozen parameters are never watched and receive no gradient.
  ParameterSet ps;
  ps.add("w", Tensor::vector({1, 2}));
  ps.add("frozen", Tensor::vector({3, 4}), false);
  Tape t2;
  TapeScope s2(t2);
  const auto bp = ps.bind(&t2);
  const auto g2 = t2.backward(sum(mul(bp("w"), bp("frozen"))));
  CHECK(g2.count("w") == 1);
  CHECK(g2.count("frozen") == 0);
  CHECK(g2.at("w").values() == std::vector<double>{3, 4});

  // Loss from another tape.
  Tape other;
  CHECK_THROWS_AS(other.backward(sum(bp("w"))), ContractError);
}

TEST_CASE("gradient accumulation at fan-out") {
  SplitMix64 rng(6);
  const Tensor x0 = random_tensor({3, 3}, rng);
  auto grad_of = [&](const std::function<Tensor(const Tensor&)>& f) {
    Tape tape;
    TapeScope scope(tape);
    const Tensor x = tape.watch("x", x0);
    return tape.backward(f(x)).at("x");
  };
  const Tensor both = grad_of([](const Tensor& x) { return add(sum(gelu(x)), sum(square(x))); });
  const Tensor g1 = grad_of([](const Tensor& x) { return sum(gelu(x)); });
  const Tensor g2 = grad_of([](const Tensor& x) { return sum(square(x)); });
  CHECK(max_abs_diff(both, add(g1, g2)) <= 1e-15);
  // Same tensor used twice in one product.
  const Tensor sq = grad_of([](const Tensor& x) { return sum(mul(x, x)); });
  CHECK(max_abs_diff(sq, scale(x0, 2.0)) <= 1e-15);
}

TEST_CASE("every differentiable op passes grad_check on random shapes") {
  SplitMix64 rng(7);
  for (int trial = 0; trial < 6; ++trial) {
    const std::size_t m = 1 + rng.below(std::uint64_t{16}), k = 1 + rng.below(std::uint64_t{16});
    const std::size_t n = 1 + rng.below(std::uint64_t{6});
    ParameterSet ps;
    ps.add("a", random_tensor({m, k}, rng));
    ps.add("b", random_tensor({k, n}, rng));
    ps.add("c", random_tensor({m, k}, rng));
    ps.add("bt", random_tensor({n, k}, rng));
    ps.add("row", random_tensor({k}, rng));
    ps.add("s", random_tensor({1}, rng));
    const std::vector<std::pair<const char*, LossFn>> cases = {
        {"matmul", [](const BoundParams& p) { return probe(matmul(p("a"), p("b"))); }},
        {"matmul_nt", [](const BoundParams& p) { return probe(matmul_nt(p("a"), p("bt"))); }},
        {"transpose", [](const BoundParams& p) { return probe(transpose(p("a"))); }},
        {"add", [](const BoundParams& p) { return probe(add(p("a"), p("c"))); }},
        {"sub", [](const BoundParams& p) { return probe(sub(p("a"), p("s"))); }},
        {"mul", [](const BoundParams& p) { return probe(mul(p("a"), p("c"))); }},
        {"mul_scalar", [](const BoundParams& p) { return probe(mul(p("s"), p("a"))); }},
        {"scale", [](const BoundParams& p) { return probe(scale(p("a"), -1.7)); }},
        {"abs", [](const BoundParams& p) { return probe(imanip::grad::abs(add(p("a"), Tensor::scalar(0.01)))); }},
        {"gelu", [](const BoundParams& p) { return probe(gelu(p("a"))); }},
        {"square", [](const BoundParams& p) { return probe(square(p("a"))); }},
        {"softmax0", [](const BoundParams& p) { return probe(softmax(p("a"), 0)); }},
        {"softmax1", [](const BoundParams& p) { return probe(softmax(p("a"), 1)); }},
        {"log_softmax", [](const BoundParams& p) { return probe(log_softmax(p("a"), 1)); }},
        {"layer_norm", [](const BoundParams& p) { return probe(layer_norm(p("a"), p("row"), p("row"))); }},
        {"sum_axis", [](const BoundParams& p) { return probe(sum(p("a"), 0)); }},
        {"mean", [](const BoundParams& p) { return mean(square(p("a"))); }},
        {"max_axis", [](const BoundParams& p) { return probe(max(p("a"), 0)); }},
        {"mse", [](const BoundParams& p) { return mse(p("a"), p("c")); }},
        {"add_row", [](const BoundParams& p) { return probe(add_row(p("a"), p("row"))); }},
        {"reshape", [](const BoundParams& p) { return probe(reshape(p("a"), {p("a").numel()})); }},
        {"concat", [](const BoundParams& p) { return probe(concat({p("a"), p("c")}, 1)); }},
        {"slice", [](const BoundParams& p) { return probe(slice(p("a"), 1, 0, (p("a").dim(1) + 1) / 2)); }},
    };
    for (const auto& [name, fn] : cases) {
      const auto rep = grad_check(fn, ps);
      INFO(name << " worst " << rep.worst_param << "[" << rep.worst_index << "] analytic " << rep.analytic
                << " numeric " << rep.numeric);
      CHECK(rep.ok(1e-5));
    }
    // Sparse product: gradient to the dense operand only.
    std::vector<double> dense(m * k, 0.0);
    for (auto& v : dense) v = rng.uniform() < 0.3 ? rng.uniform() : 0.0;
    const auto f = SparseRows::from_dense(m, k, dense);
    CHECK(f.to_dense() == dense);
    const auto rep = grad_check([&](const BoundParams& p) { return probe(sparse_matmul(f, p("b"))); }, ps);
    CHECK(rep.ok(1e-5));
    CHECK(max_abs_diff(sparse_matmul(f, ps.get("b")), matmul(Tensor({m, k}, dense), ps.get("b"))) <= 1e-12);
  }
}

TEST_CASE("grad_check self tests") {
  SplitMix64 rng(8);
  ParameterSet ps;
  ps.add("w", random_tensor({4, 3}, rng));
  // Coefficients bounded away from zero keep round-off out of the relative error.
  const Tensor c({4, 3}, {1.0, -1.5, 2.0, -1.25, 1.75, -2.0, 1.5, -1.0, 1.125, -1.875, 1.25, -1.5});
  const auto linear_rep = grad_check([&](const BoundParams& p) { return sum(mul(p("w"), c)); }, ps);
  CHECK(linear_rep.max_rel_error <= 1e-10);
  CHECK(linear_rep.coordinates == 12);

  ParameterSet logit;
  logit.add("z", random_tensor({6}, rng, 2.0));
  const auto ce_rep = grad_check([](const BoundParams& p) { return cross_entropy(reshape(softmax(p("z"), 0), {6}), 2); },
                                 logit);
  CHECK(ce_rep.max_rel_error <= 1e-6);

  // Negative control: a backward rule off by a factor of 1.5.
  const auto broken = grad_check(
      [](const BoundParams& p) {
        const Tensor& z = p("z");
        Tensor value = square(z.detached());
        const Tensor zc = z.detached();
        return sum(custom_op(value, {z}, [zc](const std::vector<double>& g, GradSlots& gin) {
          if (!gin[0]) return;
          for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += 1.5 * 2.0 * zc[i] * g[i];
        }));
      },
      logit);
  CHECK(broken.max_rel_error > 1e-2);

  // Non-finite evaluation points are reported with the coordinate.
  ParameterSet edge;
  edge.add("v", Tensor::vector({1.0, 1e-300}));
  const auto bad = grad_check([](const BoundParams& p) { return sum(mul(p("v"), Tensor::vector({1.0, 1e308}))); }, edge,
                              1e300);
  CHECK_FALSE(bad.finite);
  CHECK_FALSE(bad.message.empty());
}

TEST_CASE("determinism of forward and backward") {
  SplitMix64 rng(9);
  const Tensor a = random_tensor({5, 7}, rng), b = random_tensor({7, 3}, rng);
  auto run = [&] {
    Tape tape;
    TapeScope scope(tape);
    const Tensor ta = tape.watch("a", a), tb = tape.watch("b", b);
    const Tensor y = softmax(matmul(gelu(ta), tb), 1);
    return std::pair{y, tape.backward(probe(y))};
  };
  const auto [y1, g1] = run();
  const auto [y2, g2] = run();
  CHECK(bit_equal(y1, y2));
  CHECK(bit_equal(g1.at("a"), g2.at("a")));
  CHECK(bit_equal(g1.at("b"), g2.at("b")));
}

TEST_CASE("non-finite outputs are rejected") {
  CHECK_THROWS_AS(mul(Tensor::vector({1e308}), Tensor::vector({1e308})), ContractError);
}

TEST_CASE("parameter set registry") {
  ParameterSet ps;
  ps.add("encoder.w", Tensor::ones({2}));
  ps.add("encoder.b", Tensor::ones({1}));
  ps.add("encoderx", Tensor::ones({1}));
  CHECK_THROWS_AS(ps.add("encoder.w", Tensor::ones({2})), RegistryError);
  CHECK(ps.set_trainable_prefix("encoder", false) == 2);
  CHECK(ps.trainable("encoderx"));
  CHECK(ps.size() == 3);  // freezing never deletes
  CHECK(ps.trainable_scalar_count() == 1);
  CHECK_THROWS_AS(ps.set("encoder.w", Tensor::ones({3})), DimensionError);
}

}  // TEST_SUITE
