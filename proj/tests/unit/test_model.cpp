#include <cmath>

#include "../support/helpers.hpp"
#include "condensor/model.hpp"
#include "doctest.h"

using namespace condensor;
using test::random_tensor;

namespace {
ModelArch tiny() {
  ModelArch a;
  a.depth = 1;
  a.width = 2;
  a.in_channels = 1;
  a.in_hw = 4;
  a.num_classes = 2;
  return a;
}
}  // namespace

TEST_CASE("parameter count of a tiny model") {
  CHECK(param_count(tiny()) == 42);
  auto p = init_params(tiny(), {7, DType::f64});
  CHECK(p.flat_size() == 42);
  CHECK(p.names().front() == "block0.conv.bias");
  auto no_norm = tiny();
  no_norm.norm = NormKind::none;
  CHECK(param_count(no_norm) == 38);
}

TEST_CASE("arch validation") {
  auto a = tiny();
  a.in_hw = 6;
  a.depth = 2;
  CHECK_THROWS_WITH_AS(a.validate(), doctest::Contains("not divisible"), Error);
  CHECK_THROWS_AS(parse_norm("batch"), Error);
  CHECK(parse_norm("none") == NormKind::none);
}

TEST_CASE("cross-entropy reference values") {
  std::vector<std::int32_t> y0{0};
  CHECK(ce_loss(Tensor::from({1, 3}, std::vector<double>{0, 0, 0}), y0).item() == doctest::Approx(std::log(3.0)));
  CHECK(ce_loss(Tensor::from({1, 2}, std::vector<double>{100, 0}), y0).item() == doctest::Approx(0.0));
  CHECK(ce_loss(Tensor::from({1, 2}, std::vector<double>{1, 0}), y0).item() ==
        doctest::Approx(0.31326168751822286).epsilon(1e-12));
  std::vector<std::int32_t> bad{2};
  CHECK_THROWS_AS(ce_loss(Tensor::from({1, 2}, std::vector<double>{1, 0}), bad), Error);
}

TEST_CASE("forward is batch independent and permutation equivariant") {
  std::mt19937_64 rng(11);
  auto arch = tiny();
  arch.width = 3;
  arch.num_classes = 4;
  auto p = init_params(arch, {3, DType::f64});
  auto x = random_tensor({5, 1, 4, 4}, rng);
  auto full = forward(arch, p, x).to_vector();
  for (std::int64_t i = 0; i < 5; ++i) {
    auto single = forward(arch, p, narrow(x, i, 1)).to_vector();
    for (int k = 0; k < 4; ++k) CHECK(single[k] == doctest::Approx(full[i * 4 + k]).epsilon(1e-12));
  }
  std::vector<std::int64_t> perm{3, 0, 4, 1, 2};
  auto permuted = forward(arch, p, index_select(x, perm)).to_vector();
  for (std::size_t i = 0; i < perm.size(); ++i)
    for (int k = 0; k < 4; ++k) CHECK(permuted[i * 4 + k] == doctest::Approx(full[perm[i] * 4 + k]).epsilon(1e-12));
}

TEST_CASE("init is deterministic per seed") {
  auto a = init_params(tiny(), {5, DType::f32}).flat_values();
  auto b = init_params(tiny(), {5, DType::f32}).flat_values();
  auto c = init_params(tiny(), {6, DType::f32}).flat_values();
  CHECK(a == b);
  CHECK(a != c);
}

TEST_CASE("loss gradients w.r.t. input and parameters match finite differences") {
  std::mt19937_64 rng(5);
  auto arch = tiny();
  arch.depth = 2;
  arch.in_hw = 8;
  arch.num_classes = 3;
  auto p = init_params(arch, {1, DType::f64});
  auto x = random_tensor({3, 1, 8, 8}, rng);
  std::vector<std::int32_t> y{0, 2, 1};
  auto f = [&](const std::vector<Tensor>& in) {
    return ce_loss(forward(arch, p.unflatten(in[1]), in[0]), y);
  };
  CHECK(test::gradient_error(f, {x, p.flatten()}) < 1e-5);
}

TEST_CASE("flatten/unflatten round trip") {
  auto p = init_params(tiny(), {2, DType::f64});
  auto q = p.unflatten(p.flatten());
  CHECK(q.flat_values() == p.flat_values());
  CHECK_THROWS_AS(p.unflatten(Tensor::zeros({3}, DType::f64)), ShapeError);
}

TEST_CASE("predict breaks ties toward the lowest class") {
  auto arch = tiny();
  auto p = init_params(arch, {0, DType::f64});
  ParamSet z = p.with_tensors([&] {
    std::vector<Tensor> v;
    for (const auto& t : p.tensors()) v.push_back(Tensor::zeros(t.shape(), DType::f64));
    return v;
  }());
  auto pred = predict(arch, z, Tensor::zeros({3, 1, 4, 4}, DType::f64), 2);
  CHECK(pred == std::vector<std::int32_t>{0, 0, 0});
}
