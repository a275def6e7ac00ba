#pragma once

// Finite-difference harness and one case per autodiff primitive; used by the
// selftest, the acceptance suite and the unit tests.

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "condensor/gradcheck.hpp"
#include "condensor/ops.hpp"
#include "condensor/tensor.hpp"

namespace condensor::check {

inline Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0,
                            DType dtype = DType::f64) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(static_cast<std::size_t>(condensor::numel(shape)));
  for (auto& x : v) x = u(rng);
  return Tensor::from_values(shape, v, dtype);
}

// Values bounded away from zero (for relu kinks, division, sqrt/log domains).
inline Tensor away_from_zero(const Shape& shape, std::mt19937_64& rng, bool positive = false) {
  std::uniform_real_distribution<double> mag(0.2, 1.5);
  std::bernoulli_distribution sign(0.5);
  std::vector<double> v(static_cast<std::size_t>(condensor::numel(shape)));
  for (auto& x : v) x = mag(rng) * ((positive || sign(rng)) ? 1.0 : -1.0);
  return Tensor::from_values(shape, v, DType::f64);
}

using MultiFn = std::function<Tensor(const std::vector<Tensor>&)>;

// Worst relative error between tape gradients and central differences over all inputs of f.
inline double gradient_error(const MultiFn& f, const std::vector<Tensor>& inputs, double h = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    condensor::Tape tape;
    std::vector<Tensor> watched;
    {
      condensor::TapeScope scope(tape);
      for (const auto& x : inputs) watched.push_back(tape.watch(x));
      Tensor loss = f(watched);
      auto g = tape.backward(loss, {watched[i]});
      auto fi = [&](const Tensor& xi) {
        auto args = inputs;
        args[i] = xi;
        return f(args);
      };
      Tensor numeric = condensor::finite_difference_grad(fi, inputs[i], h);
      worst = std::max(worst, condensor::max_relative_error(g[0], numeric));
    }
  }
  return worst;
}

// Error of the second-order path: d/dx <grad_x f, u> against central differences
// of the first-order gradient contracted with u.
inline double second_order_error(const MultiFn& f, const std::vector<Tensor>& inputs, std::mt19937_64& rng,
                                 double h = 1e-5) {
  double worst = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Tensor u = random_tensor(inputs[i].shape(), rng);
    auto contracted = [&](const std::vector<Tensor>& args, bool higher) {
      condensor::Tape tape(higher ? condensor::TapeMode::higher_order : condensor::TapeMode::first_order);
      condensor::TapeScope scope(tape);
      std::vector<Tensor> w;
      for (const auto& x : args) w.push_back(tape.watch(x));
      auto g = tape.backward(f(w), {w[i]});
      Tensor h_val = condensor::sum(condensor::mul(g[0], u));
      if (!higher) return std::vector<Tensor>{h_val.detach()};
      auto gg = tape.backward(h_val, {w[i]}, false);
      return std::vector<Tensor>{h_val.detach(), gg[0]};
    };
    const auto analytic = contracted(inputs, true)[1];
    auto fi = [&](const Tensor& xi) {
      auto args = inputs;
      args[i] = xi;
      return contracted(args, false)[0];
    };
    const Tensor numeric = condensor::finite_difference_grad(fi, inputs[i], h);
    worst = std::max(worst, condensor::max_relative_error(analytic, numeric));
  }
  return worst;
}

// Scalarizes a tensor-valued op with fixed random weights so every output element matters.
inline MultiFn weighted(std::function<Tensor(const std::vector<Tensor>&)> op, const Shape& out_shape,
                        std::mt19937_64& rng) {
  const Tensor r = random_tensor(out_shape, rng);
  return [op, r](const std::vector<Tensor>& x) { return condensor::sum(condensor::mul(op(x), r)); };
}

struct PrimitiveCase {
  std::string name;
  std::vector<Tensor> inputs;
  MultiFn fn;
};

inline std::vector<PrimitiveCase> primitive_cases(std::mt19937_64& rng) {
  using namespace condensor;
  std::vector<PrimitiveCase> cases;
  auto add_case = [&](std::string name, std::vector<Tensor> in, std::function<Tensor(const std::vector<Tensor>&)> op,
                      const Shape& out) { cases.push_back({std::move(name), std::move(in), weighted(std::move(op), out, rng)}); };

  add_case("add", {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)},
           [](const auto& x) { return add(x[0], x[1]); }, {3, 4});
  add_case("add_broadcast", {random_tensor({3, 4}, rng), random_tensor({1, 4}, rng)},
           [](const auto& x) { return add(x[0], x[1]); }, {3, 4});
  add_case("sub", {random_tensor({2, 5}, rng), random_tensor({2, 5}, rng)},
           [](const auto& x) { return sub(x[0], x[1]); }, {2, 5});
  add_case("mul", {random_tensor({2, 3}, rng), random_tensor({2, 3}, rng)},
           [](const auto& x) { return mul(x[0], x[1]); }, {2, 3});
  add_case("div", {random_tensor({2, 3}, rng), away_from_zero({2, 3}, rng)},
           [](const auto& x) { return div(x[0], x[1]); }, {2, 3});
  add_case("scalar_mul", {random_tensor({4}, rng)}, [](const auto& x) { return scale(x[0], -2.5); }, {4});
  add_case("matmul", {random_tensor({3, 4}, rng), random_tensor({4, 2}, rng)},
           [](const auto& x) { return matmul(x[0], x[1]); }, {3, 2});
  add_case("conv2d", {random_tensor({2, 2, 5, 5}, rng), random_tensor({3, 2, 3, 3}, rng)},
           [](const auto& x) { return conv2d(x[0], x[1]); }, {2, 3, 5, 5});
  add_case("relu", {away_from_zero({3, 4}, rng)}, [](const auto& x) { return relu(x[0]); }, {3, 4});
  add_case("avg_pool", {random_tensor({2, 2, 4, 4}, rng)}, [](const auto& x) { return avg_pool2(x[0]); },
           {2, 2, 2, 2});
  add_case("instance_norm", {random_tensor({2, 3, 4, 4}, rng)}, [](const auto& x) { return instance_norm(x[0]); },
           {2, 3, 4, 4});
  add_case("flatten", {random_tensor({2, 3, 2, 2}, rng)}, [](const auto& x) { return flatten(x[0]); }, {2, 12});
  add_case("reshape", {random_tensor({6}, rng)}, [](const auto& x) { return reshape(x[0], {2, 3}); }, {2, 3});
  add_case("sum", {random_tensor({3, 3}, rng)}, [](const auto& x) { return sum(x[0]); }, {});
  add_case("mean", {random_tensor({3, 3}, rng)}, [](const auto& x) { return mean(x[0]); }, {});
  {
    std::vector<std::int32_t> labels{0, 2, 1, 2};
    add_case("softmax_cross_entropy", {random_tensor({4, 3}, rng, -2, 2)},
             [labels](const auto& x) { return softmax_cross_entropy(x[0], labels); }, {});
  }
  add_case("square", {random_tensor({5}, rng)}, [](const auto& x) { return square(x[0]); }, {5});
  add_case("sqrt", {away_from_zero({5}, rng, true)}, [](const auto& x) { return sqrt(x[0]); }, {5});
  add_case("exp", {random_tensor({5}, rng)}, [](const auto& x) { return exp(x[0]); }, {5});
  add_case("log", {away_from_zero({5}, rng, true)}, [](const auto& x) { return log(x[0]); }, {5});
  add_case("concat", {random_tensor({2, 3}, rng), random_tensor({1, 3}, rng)},
           [](const auto& x) { return concat({x[0], x[1]}); }, {3, 3});
  {
    std::vector<std::int64_t> rows{2, 0, 2};
    add_case("index_select", {random_tensor({4, 3}, rng)}, [rows](const auto& x) { return index_select(x[0], rows); },
             {3, 3});
  }
  add_case("transpose", {random_tensor({2, 3}, rng)}, [](const auto& x) { return transpose(x[0]); }, {3, 2});
  add_case("expand", {random_tensor({1, 3}, rng)}, [](const auto& x) { return expand(x[0], {4, 3}); }, {4, 3});
  add_case("sum_to", {random_tensor({4, 3}, rng)}, [](const auto& x) { return sum_to(x[0], {1, 3}); }, {1, 3});
  add_case("softmax", {random_tensor({3, 4}, rng)}, [](const auto& x) { return softmax(x[0]); }, {3, 4});
  return cases;
}

}  // namespace condensor::check
