#include <cmath>

#include "../support/helpers.hpp"
#include "condensor/dc.hpp"
#include "condensor/rng.hpp"
#include "condensor/synthetic.hpp"
#include "condensor/train.hpp"
#include "doctest.h"

using namespace condensor;
using test::random_tensor;

namespace {
std::vector<Tensor> one(std::vector<double> v) {
  const auto n = static_cast<std::int64_t>(v.size());
  return {Tensor::from({1, n}, std::move(v))};
}

TensorSet gauss_set(std::int64_t n, DType dtype) {
  auto [tr, te] = make_two_gaussians(4, n, 8, 40, 10, 3);
  auto pre = Preprocessor::fit(tr, {false, Normalization::standardize, 1e-6, dtype});
  return pre.apply(tr);
}

ModelArch tiny() { return {1, 2, 1, 4, 2, NormKind::instance}; }
}  // namespace

TEST_CASE("gradient distance reference values") {
  CHECK(gradient_distance(one({1, 0}), one({0, 1}), DistanceMode::layerwise_cosine).item() == doctest::Approx(1.0));
  CHECK(gradient_distance(one({1, 0}), one({-1, 0}), DistanceMode::layerwise_cosine).item() == doctest::Approx(2.0));
  CHECK(gradient_distance(one({1, 2}), one({1, 2}), DistanceMode::layerwise_cosine).item() ==
        doctest::Approx(0.0).scale(1.0));
  CHECK(gradient_distance(one({1, 2}), one({3, 0}), DistanceMode::layerwise_l2).item() == doctest::Approx(8.0));
}

TEST_CASE("gradient distance properties") {
  std::mt19937_64 rng(8);
  std::vector<Tensor> a{random_tensor({3, 2, 3, 3}, rng), random_tensor({3}, rng), random_tensor({4, 5}, rng)};
  std::vector<Tensor> b{random_tensor({3, 2, 3, 3}, rng), random_tensor({3}, rng), random_tensor({4, 5}, rng)};
  for (auto mode : {DistanceMode::layerwise_cosine, DistanceMode::layerwise_l2}) {
    const double ab = gradient_distance(a, b, mode).item();
    CHECK(ab >= 0);
    CHECK(ab == doctest::Approx(gradient_distance(b, a, mode).item()));
    CHECK(gradient_distance(a, a, mode).item() == doctest::Approx(0.0).scale(1.0));
    CHECK(ab <= (mode == DistanceMode::layerwise_cosine ? 2.0 * (3 + 4) : 1e9));
  }
  // biases do not take part
  auto b2 = a;
  b2[1] = random_tensor({3}, rng);
  CHECK(gradient_distance(a, b2, DistanceMode::layerwise_l2).item() == 0.0);
}

TEST_CASE("zero-norm groups count as orthogonal") {
  std::int64_t zeros = 0;
  auto a = std::vector<Tensor>{Tensor::from({2, 2}, std::vector<double>{0, 0, 1, 0})};
  auto b = std::vector<Tensor>{Tensor::from({2, 2}, std::vector<double>{1, 1, 1, 0})};
  CHECK(gradient_distance(a, b, DistanceMode::layerwise_cosine, &zeros).item() == doctest::Approx(1.0));
  CHECK(zeros == 1);
  CHECK_THROWS_AS(gradient_distance(a, std::vector<Tensor>{}, DistanceMode::layerwise_l2), ShapeError);
}

TEST_CASE("gradient distance derivative matches finite differences") {
  std::mt19937_64 rng(9);
  for (auto mode : {DistanceMode::layerwise_cosine, DistanceMode::layerwise_l2}) {
    auto f = [mode](const std::vector<Tensor>& in) {
      return gradient_distance({in[0], in[2]}, {in[1], in[3]}, mode);
    };
    CHECK(test::gradient_error(f, {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng),
                                   random_tensor({2, 2, 3, 3}, rng), random_tensor({2, 2, 3, 3}, rng)}) < 1e-5);
  }
}

TEST_CASE("meta-gradient of the matching loss") {
  auto train = gauss_set(40, DType::f64);
  DcConfig cfg;
  cfg.batch_real = 8;
  cfg.seed = 4;
  CHECK(meta_gradient_check(train, tiny(), cfg) < 1e-4);
  cfg.distance = DistanceMode::layerwise_l2;
  CHECK(meta_gradient_check(train, tiny(), cfg) < 1e-4);
  cfg.aug.transforms = {Transform::brightness};
  CHECK(meta_gradient_check(train, tiny(), cfg) < 1e-4);
}

TEST_CASE("zero synthetic lr keeps the sampled real images") {
  auto train = gauss_set(40, DType::f32);
  DcConfig cfg;
  cfg.syn_lr = 0;
  cfg.outer_iters = 3;
  cfg.batch_real = 8;
  auto r = dc_distill(train, tiny(), cfg);
  auto init = init_synthetic(train, 1, InitMode::real_samples, derive_seed(cfg.seed, "dc.init"));
  CHECK(r.synthetic.images.to_vector() == init.images.to_vector());
  CHECK(r.synthetic.labels == std::vector<std::int32_t>{0, 1});
  CHECK(r.loss_curve.size() == 3);
}

TEST_CASE("dc is deterministic and keeps class balance") {
  auto train = gauss_set(40, DType::f32);
  DcConfig cfg;
  cfg.ipc = 2;
  cfg.outer_iters = 4;
  cfg.batch_real = 8;
  cfg.seed = 12;
  auto a = dc_distill(train, tiny(), cfg);
  auto b = dc_distill(train, tiny(), cfg);
  CHECK(a.synthetic.images.to_vector() == b.synthetic.images.to_vector());
  CHECK(a.loss_curve == b.loss_curve);
  CHECK(a.synthetic.labels == balanced_labels(2, 2));
  cfg.batch_real = 30;
  CHECK_THROWS_WITH_AS(dc_distill(train, tiny(), cfg), doctest::Contains("class 0 has 20 images"), DataError);
}

TEST_CASE("dc on separable two-gaussian data") {
  auto [tr, te] = make_two_gaussians(4, 200, 200, 40, 10, 5);
  auto pre = Preprocessor::fit(tr, {false, Normalization::standardize, 1e-6, DType::f32});
  auto train = pre.apply(tr), test_set = pre.apply(te);
  DcConfig cfg;
  cfg.outer_iters = 60;
  cfg.batch_real = 32;
  cfg.init = InitMode::gaussian_noise;
  auto r = dc_distill(train, tiny(), cfg);
  double first = 0, last = 0;
  for (int i = 0; i < 10; ++i) first += r.loss_curve[i], last += r.loss_curve[r.loss_curve.size() - 1 - i];
  CHECK(last < first);
  SgdConfig sgd;
  sgd.epochs = 100;
  sgd.lr = 0.01;
  sgd.momentum = 0.9;
  auto params = train_sgd(tiny(), init_params(tiny(), {1, DType::f32}), r.synthetic.as_set(), sgd);
  CHECK(accuracy(tiny(), params, test_set) >= 0.95);
}
