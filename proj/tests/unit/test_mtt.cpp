#include <cmath>
#include <filesystem>

#include "../support/helpers.hpp"
#include "condensor/mtt.hpp"
#include "condensor/ops.hpp"
#include "condensor/gradcheck.hpp"
#include "condensor/synthetic.hpp"
#include "doctest.h"

using namespace condensor;

namespace {
ModelArch tiny() { return {1, 2, 1, 4, 2, NormKind::instance}; }

AugPolicy small_aug() {
  auto p = AugPolicy::mtt_default();
  p.crop_pixels = 1;
  p.cutout_pixels = 2;
  return p;
}

TensorSet gauss_set(std::int64_t n, DType dtype) {
  auto [tr, te] = make_two_gaussians(4, n, 8, 40, 10, 3);
  return Preprocessor::fit(tr, {false, Normalization::standardize, 1e-6, dtype}).apply(tr);
}

Tensor vec(std::vector<double> v) {
  const auto n = static_cast<std::int64_t>(v.size());
  return Tensor::from({n}, std::move(v));
}
}  // namespace

TEST_CASE("trajectory loss reference values") {
  auto start = vec({0, 0}), target = vec({1, 0});
  CHECK(trajectory_loss(target, start, target).item() == 0.0);
  CHECK(trajectory_loss(start, start, target).item() == doctest::Approx(1.0));
  CHECK(trajectory_loss(vec({0.5, 0}), start, target).item() == doctest::Approx(0.25));
  CHECK_THROWS_AS(trajectory_loss(start, target, target), Error);
  CHECK_THROWS_AS(trajectory_loss(vec({1}), start, target), ShapeError);
}

TEST_CASE("trajectory loss is scale invariant") {
  std::mt19937_64 rng(2);
  auto a = test::random_tensor({7}, rng), b = test::random_tensor({7}, rng), c = test::random_tensor({7}, rng);
  const double base = trajectory_loss(a, b, c).item();
  for (double s : {-3.0, 0.5, 1e3})
    CHECK(trajectory_loss(scale(a, s), scale(b, s), scale(c, s)).item() == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("student unroll on a scalar quadratic") {
  ParamSet p;
  p.set("w", Tensor::scalar(1.0, DType::f64));
  Tape tape(TapeMode::higher_order);
  TapeScope scope(tape);
  auto half_square = [](const ParamSet& q, int) { return scale(square(q.at("w")), 0.5); };
  auto out = student_unroll(p, 2, Tensor::scalar(0.5, DType::f64), half_square);
  CHECK(out.at("w").item() == doctest::Approx(0.25));
  auto same = student_unroll(p, 5, Tensor::scalar(0.0, DType::f64), half_square);
  CHECK(same.at("w").item() == 1.0);
  CHECK_THROWS_AS(student_unroll(p, 1, Tensor::scalar(-0.1, DType::f64), half_square), Error);
}

TEST_CASE("student unroll with zero step size is the identity") {
  auto train = gauss_set(8, DType::f64);
  auto p = init_params(tiny(), {3, DType::f64});
  Tape tape(TapeMode::higher_order);
  TapeScope scope(tape);
  auto out = student_unroll(tiny(), train.images, train.labels, p, 3, Tensor::scalar(0.0, DType::f64),
                            small_aug(), 1);
  CHECK(out.flat_values() == p.flat_values());
}

TEST_CASE("unrolled meta-gradient w.r.t. pixels matches finite differences") {
  auto train = gauss_set(8, DType::f64);
  const auto p = init_params(tiny(), {3, DType::f64});
  const auto images = narrow(train.images, 0, 2);
  const std::vector<std::int32_t> labels{train.labels[0], train.labels[1]};
  for (const auto& policy : {AugPolicy::none(), small_aug()}) {
    auto norm_after_unroll = [&](const Tensor& x, Tensor* grad) {
      Tape tape(TapeMode::higher_order);
      TapeScope scope(tape);
      auto w = tape.watch(x);
      auto out = student_unroll(tiny(), w, labels, p, 3, Tensor::scalar(0.1, DType::f64), policy, 2);
      auto value = sum(square(out.flatten()));
      if (grad) *grad = tape.backward(value, {w}, false)[0];
      return value.detach();
    };
    Tensor analytic;
    norm_after_unroll(images, &analytic);
    auto numeric = finite_difference_grad([&](const Tensor& x) { return norm_after_unroll(x, nullptr); }, images, 1e-5);
    CHECK(max_relative_error(analytic, numeric) < 1e-4);
  }
}

TEST_CASE("end-to-end trajectory meta-gradient") {
  auto train = gauss_set(16, DType::f64);
  TeacherConfig tc;
  tc.n_teachers = 1;
  tc.epochs = 3;
  tc.batch = 4;
  tc.lr = 0.05;
  auto buffers = train_teachers(train, tiny(), tc);
  MttConfig cfg;
  cfg.ipc = 1;
  cfg.syn_steps = 3;
  cfg.expert_epochs = 1;
  cfg.alpha_init = 0.05;
  cfg.aug = small_aug();
  CHECK(mtt_meta_gradient_check(buffers[0], train, cfg) < 1e-4);
}

TEST_CASE("teacher snapshots") {
  auto train = gauss_set(128, DType::f32);
  TeacherConfig tc;
  tc.n_teachers = 1;
  tc.epochs = 1;
  tc.batch = 128;
  tc.snapshot_interval = 1;
  auto b = train_teachers(train, tiny(), tc);
  REQUIRE(b.size() == 1);
  CHECK(b[0].snapshots.size() == 2);
  CHECK(b[0].snapshots[0] != b[0].snapshots[1]);

  tc.lr = 0;
  tc.epochs = 2;
  tc.batch = 32;
  tc.snapshot_interval = 0;
  b = train_teachers(train, tiny(), tc);
  CHECK(b[0].snapshots.size() == 3);
  for (const auto& s : b[0].snapshots) CHECK(s == b[0].snapshots[0]);

  tc.lr = 0.01;
  tc.n_teachers = 3;
  tc.threads = 2;
  auto par = train_teachers(train, tiny(), tc);
  tc.threads = 1;
  auto seq = train_teachers(train, tiny(), tc);
  REQUIRE(par.size() == 3);
  for (int t = 0; t < 3; ++t) CHECK(par[t].snapshots == seq[t].snapshots);
  CHECK(seq[0].snapshots != seq[1].snapshots);
}

TEST_CASE("teacher loss decreases on an easy dataset") {
  auto [tr, te] = make_texture_dataset({2, 1, 8, 256, 16, 40, 20, 1, 7});
  auto train = Preprocessor::fit(tr, {false, Normalization::standardize, 1e-6, DType::f32}).apply(tr);
  ModelArch arch{2, 4, 1, 8, 2, NormKind::instance};
  TeacherConfig tc;
  tc.n_teachers = 1;
  tc.epochs = 4;
  tc.batch = 64;
  auto b = train_teachers(train, arch, tc)[0];
  auto layout = init_params(arch, {0, DType::f32});
  auto loss_at = [&](const std::vector<float>& s) {
    NoRecordGuard no_record;
    auto p = layout.unflatten(Tensor::from({static_cast<std::int64_t>(s.size())}, s));
    return ce_loss(forward(arch, p, train.images), train.labels).item();
  };
  CHECK(loss_at(b.snapshots.back()) < loss_at(b.snapshots.front()));
}

TEST_CASE("MTTJ round trip and errors") {
  TrajectoryBuffer b;
  b.arch = tiny();
  b.lr = 0.01f;
  b.seed = 0x1234567890abcdefULL;
  const auto n = static_cast<std::size_t>(param_count(tiny()));
  for (int k = 0; k < 3; ++k) {
    std::vector<float> s(n);
    for (std::size_t i = 0; i < n; ++i) s[i] = static_cast<float>(k) * 0.5f - static_cast<float>(i) * 0.01f;
    b.snapshots.push_back(s);
  }
  auto bytes = encode_mttj(b);
  CHECK(bytes.size() == 4 + 4 + 6 * 4 + 4 + 8 + 3 * n * 4 + 4 + 8);
  auto back = decode_mttj(bytes);
  CHECK(back.snapshots == b.snapshots);
  CHECK(back.arch == b.arch);
  CHECK(back.seed == b.seed);
  CHECK(encode_mttj(back) == bytes);

  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_mttj(bad), FormatError);
  bad = bytes;
  bad.pop_back();
  CHECK_THROWS_AS(decode_mttj(bad), FormatError);
  bad = bytes;
  bad[4] = 9;
  CHECK_THROWS_WITH_AS(decode_mttj(bad), doctest::Contains("version"), FormatError);

  auto path = std::filesystem::temp_directory_path() / "condensor_mttj_test" / "t.mttj";
  save_trajectory(b, path);
  CHECK(load_trajectory(path).snapshots == b.snapshots);
  std::filesystem::remove_all(path.parent_path());
}

TEST_CASE("mtt config checks and a short run") {
  auto train = gauss_set(64, DType::f32);
  TeacherConfig tc;
  tc.n_teachers = 2;
  tc.epochs = 4;
  tc.batch = 16;
  tc.snapshot_interval = 4;
  auto buffers = train_teachers(train, tiny(), tc);
  MttConfig cfg;
  cfg.ipc = 2;
  cfg.iters = 6;
  cfg.syn_steps = 2;
  cfg.expert_epochs = 2;
  cfg.syn_lr = 10;
  cfg.aug = small_aug();
  auto a = mtt_distill(buffers, train, tiny(), cfg);
  auto b = mtt_distill(buffers, train, tiny(), cfg);
  CHECK(a.synthetic.images.to_vector() == b.synthetic.images.to_vector());
  CHECK(a.loss_curve == b.loss_curve);
  CHECK(a.loss_curve.size() == 6);
  for (double al : a.alpha_curve) CHECK(al > 0);
  REQUIRE(a.synthetic.alpha.has_value());

  cfg.max_start = 3;  // 3 + 2 > 4
  CHECK_THROWS_WITH_AS(mtt_distill(buffers, train, tiny(), cfg), doctest::Contains("exceeds"), Error);
  cfg.max_start = -1;
  CHECK_THROWS_AS(mtt_distill({}, train, tiny(), cfg), Error);
  auto other = tiny();
  other.width = 3;
  CHECK_THROWS_AS(mtt_distill(buffers, train, other, cfg), Error);
}

TEST_CASE("identical teacher endpoints are skipped") {
  auto train = gauss_set(32, DType::f32);
  TeacherConfig tc;
  tc.n_teachers = 1;
  tc.epochs = 3;
  tc.batch = 32;
  auto b = train_teachers(train, tiny(), tc)[0];
  auto frozen = b;
  frozen.snapshots[1] = frozen.snapshots[0];
  frozen.snapshots[2] = frozen.snapshots[0];
  MttConfig cfg;
  cfg.ipc = 1;
  cfg.iters = 8;
  cfg.syn_steps = 1;
  cfg.expert_epochs = 2;
  cfg.max_start = 1;
  cfg.aug = small_aug();
  auto r = mtt_distill({frozen}, train, tiny(), cfg);
  CHECK(r.loss_curve.size() == 8);
  CHECK(r.skipped > 0);
}
