#include <cmath>

#include "../support/primitive_cases.hpp"
#include "doctest.h"

using namespace condensor;
using test::random_tensor;

TEST_CASE("elementwise primitives") {
  auto a = Tensor::from({2}, std::vector<double>{1, 2});
  auto b = Tensor::from({2}, std::vector<double>{3, 4});
  CHECK(add(a, b).to_vector() == std::vector<double>{4, 6});
  auto r = relu(Tensor::from({3}, std::vector<double>{-1, 0, 2}));
  CHECK(r.to_vector() == std::vector<double>{0, 0, 2});
}

TEST_CASE("conv2d with identity-centre kernel returns the input") {
  auto x = Tensor::full({1, 1, 3, 3}, 1.0, DType::f64);
  std::vector<double> k(9, 0.0);
  k[4] = 1.0;
  auto w = Tensor::from({1, 1, 3, 3}, k);
  CHECK(conv2d(x, w).to_vector() == x.to_vector());
}

TEST_CASE("conv2d against a direct sum") {
  std::mt19937_64 rng(3);
  auto x = random_tensor({2, 3, 5, 4}, rng);
  auto w = random_tensor({2, 3, 3, 3}, rng);
  auto y = conv2d(x, w).to_vector();
  auto xv = x.to_vector(), wv = w.to_vector();
  for (int n = 0; n < 2; ++n)
    for (int o = 0; o < 2; ++o)
      for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 4; ++j) {
          double acc = 0;
          for (int c = 0; c < 3; ++c)
            for (int a = 0; a < 3; ++a)
              for (int bb = 0; bb < 3; ++bb) {
                int si = i + a - 1, sj = j + bb - 1;
                if (si < 0 || si >= 5 || sj < 0 || sj >= 4) continue;
                acc += xv[((n * 3 + c) * 5 + si) * 4 + sj] * wv[((o * 3 + c) * 3 + a) * 3 + bb];
              }
          CHECK(y[((n * 2 + o) * 5 + i) * 4 + j] == doctest::Approx(acc).epsilon(1e-12));
        }
}

TEST_CASE("shape and dtype errors name the op") {
  auto a = Tensor::zeros({2, 3}, DType::f64);
  auto b = Tensor::zeros({3, 2}, DType::f64);
  CHECK_THROWS_AS(add(a, b), ShapeError);
  try {
    matmul(a, a);
    FAIL("expected throw");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("matmul") != std::string::npos);
    CHECK(std::string(e.what()).find("[2,3]") != std::string::npos);
  }
  CHECK_THROWS_AS(add(a, Tensor::zeros({2, 3}, DType::f32)), DTypeError);
  std::vector<std::int32_t> bad{0, 5};
  CHECK_THROWS_AS(softmax_cross_entropy(a, bad), ShapeError);
}

TEST_CASE("backward basics") {
  Tape tape;
  TapeScope scope(tape);
  auto x = tape.watch(Tensor::from({3}, std::vector<double>{1, 2, 3}));
  auto g = tape.backward(sum(square(x)), {x});
  CHECK(g[0].to_vector() == std::vector<double>{2, 4, 6});

  auto p = tape.watch(Tensor::scalar(2.0, DType::f64));
  auto q = tape.watch(Tensor::scalar(5.0, DType::f64));
  auto gp = tape.backward(mul(p, q), {p});
  CHECK(gp[0].item() == 5.0);
}

TEST_CASE("backward errors") {
  Tape tape;
  TapeScope scope(tape);
  auto x = tape.watch(Tensor::from({2}, std::vector<double>{1, 2}));
  CHECK_THROWS_AS(tape.backward(square(x), {x}), GraphError);
  auto stray = Tensor::from({2}, std::vector<double>{1, 2});
  CHECK_THROWS_AS(tape.backward(sum(x), {stray}), GraphError);
  Tape other;
  auto y = other.watch(stray);
  CHECK_THROWS_AS(tape.backward(sum(x), {y}), GraphError);
}

TEST_CASE("double backward of x^3") {
  Tape tape(TapeMode::higher_order);
  TapeScope scope(tape);
  auto x = tape.watch(Tensor::scalar(2.0, DType::f64));
  auto y = mul(mul(x, x), x);
  auto g = tape.backward(y, {x});
  CHECK(g[0].item() == doctest::Approx(12.0));
  CHECK(g[0].has_node());
  auto gg = tape.backward(g[0], {x});
  CHECK(gg[0].item() == doctest::Approx(12.0));
}

TEST_CASE("double backward of sum(x^3) is 6x") {
  std::mt19937_64 rng(11);
  auto xv = random_tensor({7}, rng, -2, 2);
  Tape tape(TapeMode::higher_order);
  TapeScope scope(tape);
  auto x = tape.watch(xv);
  auto g = tape.backward(sum(mul(square(x), x)), {x});
  // d/dx sum(g) = 6x since g = 3x^2
  auto gg = tape.backward(sum(g[0]), {x});
  auto v = xv.to_vector();
  auto got = gg[0].to_vector();
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(got[i] == doctest::Approx(6 * v[i]).epsilon(1e-5));
}

TEST_CASE("first-order tape returns constants") {
  Tape tape;
  TapeScope scope(tape);
  auto x = tape.watch(Tensor::scalar(2.0, DType::f64));
  auto g = tape.backward(mul(x, x), {x});
  CHECK_FALSE(g[0].has_node());
  CHECK_THROWS_AS(tape.backward(mul(x, x), {x}, true), GraphError);
}

TEST_CASE("finite_difference_grad") {
  auto f = [](const Tensor& x) { return sum(square(x)); };
  auto g = finite_difference_grad(f, Tensor::from({2}, std::vector<double>{1, 2}), 1e-4);
  CHECK(g.at(0) == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(g.at(1) == doctest::Approx(4.0).epsilon(1e-6));
  auto c = finite_difference_grad([](const Tensor&) { return Tensor::scalar(3.0, DType::f64); },
                                  Tensor::from({3}, std::vector<double>{1, 2, 3}), 1e-3);
  CHECK(c.to_vector() == std::vector<double>{0, 0, 0});
  CHECK_THROWS(finite_difference_grad(f, c, 0.0));
}

TEST_CASE("softmax cross-entropy gradient agrees with finite differences") {
  std::vector<std::int32_t> labels{1, 0};
  auto logits = Tensor::from({2, 3}, std::vector<double>{0.3, -1.2, 2.0, 0.5, 0.1, -0.4});
  auto f = [&](const Tensor& x) { return softmax_cross_entropy(x, labels); };
  Tape tape;
  TapeScope scope(tape);
  auto x = tape.watch(logits);
  auto g = tape.backward(f(x), {x});
  CHECK(max_relative_error(g[0], finite_difference_grad(f, logits, 1e-6)) < 1e-5);
}

TEST_CASE("every primitive matches finite differences (f64)") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 3; ++trial)
    for (const auto& c : test::primitive_cases(rng)) {
      CAPTURE(c.name);
      CHECK(test::gradient_error(c.fn, c.inputs) < 1e-5);
    }
}

TEST_CASE("every primitive supports a second backward pass") {
  std::mt19937_64 rng(77);
  for (const auto& c : test::primitive_cases(rng)) {
    CAPTURE(c.name);
    CHECK(test::second_order_error(c.fn, c.inputs, rng) < 1e-4);
  }
}

TEST_CASE("backward is linear in the loss") {
  std::mt19937_64 rng(5);
  auto xv = random_tensor({2, 2, 4, 4}, rng);
  auto wv = random_tensor({3, 2, 3, 3}, rng);
  const double a = 0.7, b = -1.3;
  Tape tape;
  TapeScope scope(tape);
  auto x = tape.watch(xv);
  auto w = tape.watch(wv);
  auto l1 = sum(square(conv2d(x, w)));
  auto l2 = mean(relu(conv2d(x, w)));
  auto g1 = tape.backward(l1, {w})[0].to_vector();
  auto g2 = tape.backward(l2, {w})[0].to_vector();
  auto gc = tape.backward(add(scale(l1, a), scale(l2, b)), {w})[0].to_vector();
  for (std::size_t i = 0; i < gc.size(); ++i)
    CHECK(gc[i] == doctest::Approx(a * g1[i] + b * g2[i]).epsilon(1e-6));
}

TEST_CASE("forward replay is bit-identical") {
  auto run = [] {
    std::mt19937_64 rng(99);
    auto x = random_tensor({2, 3, 8, 8}, rng, -1, 1, DType::f32);
    auto w = random_tensor({4, 3, 3, 3}, rng, -1, 1, DType::f32);
    Tape tape;
    TapeScope scope(tape);
    auto xw = tape.watch(x);
    return instance_norm(conv2d(xw, w)).to_vector();
  };
  CHECK(run() == run());
}

TEST_CASE("apply_primitive dispatches by id") {
  auto a = Tensor::from({2}, std::vector<double>{1, 2});
  PrimitiveAttrs attrs;
  attrs.scalar = 3.0;
  CHECK(apply_primitive(Primitive::scalar_mul, {a}, attrs).to_vector() == std::vector<double>{3, 6});
  CHECK_THROWS_AS(apply_primitive(Primitive::add, {a}), ShapeError);
  CHECK(all_primitives().size() == 25);
}
