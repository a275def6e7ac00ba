#include "../support/helpers.hpp"
#include "condensor/augment.hpp"
#include "doctest.h"

using namespace condensor;
using test::random_tensor;

TEST_CASE("empty policy is the identity") {
  std::mt19937_64 rng(1);
  auto x = random_tensor({2, 3, 8, 8}, rng, -1, 1, DType::f32);
  auto y = augment(x, AugPolicy::none(), 42);
  CHECK(y.to_vector() == x.to_vector());
}

TEST_CASE("every transform preserves shape and is deterministic per seed") {
  std::mt19937_64 rng(2);
  auto x = random_tensor({3, 3, 8, 8}, rng);
  AugPolicy p;
  p.cutout_pixels = 4;
  for (auto t : all_transforms()) {
    CAPTURE(transform_name(t));
    auto a = apply_transform(x, t, p, 7);
    CHECK(a.shape() == x.shape());
    CHECK(apply_transform(x, t, p, 7).to_vector() == a.to_vector());
  }
}

TEST_CASE("siamese: equal seeds give equal parameters on different batches") {
  std::mt19937_64 rng(3);
  AugPolicy p;
  p.transforms = all_transforms();
  p.crop_pixels = 2;
  p.cutout_pixels = 3;
  auto x1 = random_tensor({2, 1, 6, 6}, rng);
  auto x2 = random_tensor({2, 1, 6, 6}, rng);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    // every transform here is linear or affine in the pixels, so augmenting a sum
    // with the same parameters equals the sum of the augmented batches up to the shift
    auto a = augment(x1, p, seed).to_vector();
    auto b = augment(x2, p, seed).to_vector();
    auto z = augment(Tensor::zeros({2, 1, 6, 6}, DType::f64), p, seed).to_vector();
    auto s = augment(add(x1, x2), p, seed).to_vector();
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(s[i] + z[i] == doctest::Approx(a[i] + b[i]).epsilon(1e-9));
  }
}

TEST_CASE("sample i gets the same parameters regardless of batch size") {
  std::mt19937_64 rng(4);
  auto x = random_tensor({4, 1, 8, 8}, rng);
  AugPolicy p;
  for (auto t : all_transforms()) {
    CAPTURE(transform_name(t));
    auto full = apply_transform(x, t, p, 11).to_vector();
    auto head = apply_transform(narrow(x, 0, 2), t, p, 11).to_vector();
    for (std::size_t i = 0; i < head.size(); ++i) CHECK(head[i] == doctest::Approx(full[i]));
  }
}

TEST_CASE("brightness gradient of the sum is all ones") {
  std::mt19937_64 rng(5);
  auto x = random_tensor({2, 1, 4, 4}, rng);
  Tape tape;
  TapeScope scope(tape);
  auto w = tape.watch(x);
  auto g = tape.backward(sum(apply_transform(w, Transform::brightness, AugPolicy{}, 3)), {w})[0];
  for (double v : g.to_vector()) CHECK(v == 1.0);
}

TEST_CASE("transforms match finite differences") {
  std::mt19937_64 rng(6);
  AugPolicy p;
  p.crop_pixels = 2;
  p.cutout_pixels = 3;
  for (auto t : all_transforms()) {
    CAPTURE(transform_name(t));
    auto x = random_tensor({2, 3, 6, 6}, rng);
    auto f = test::weighted([&](const std::vector<Tensor>& in) { return apply_transform(in[0], t, p, 9); },
                            {2, 3, 6, 6}, rng);
    CHECK(test::gradient_error(f, {x}) < 1e-5);
  }
}

TEST_CASE("flip mirrors columns; crop with zero magnitude is the identity") {
  auto x = Tensor::from({1, 1, 1, 3}, std::vector<double>{1, 2, 3});
  AugPolicy p;
  bool seen_flip = false;
  for (std::uint64_t s = 0; s < 10; ++s) {
    auto y = apply_transform(x, Transform::flip, p, s).to_vector();
    CHECK((y == std::vector<double>{1, 2, 3} || y == std::vector<double>{3, 2, 1}));
    seen_flip |= y[0] == 3;
  }
  CHECK(seen_flip);
  p.crop_pixels = 0;
  CHECK(apply_transform(x, Transform::crop, p, 1).to_vector() == x.to_vector());
}

TEST_CASE("magnitudes out of range are rejected") {
  auto x = Tensor::zeros({1, 1, 8, 8}, DType::f64);
  AugPolicy p;
  p.crop_pixels = 5;
  CHECK_THROWS_WITH_AS(apply_transform(x, Transform::crop, p, 0), doctest::Contains("crop_pixels"), Error);
  p = {};
  p.brightness = 3;
  CHECK_THROWS_AS(p.validate(), Error);
  CHECK_THROWS_AS(parse_aug_list("crop,blur"), Error);
  auto q = parse_aug_list("crop, flip,cutout");
  CHECK(aug_list(q) == "crop,flip,cutout");
  CHECK(aug_list(AugPolicy::mtt_default()) == "crop,flip,cutout");
  CHECK(parse_aug_list("none").empty());
}
