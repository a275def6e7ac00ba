#include "condensor/selftest.hpp"

#include <cmath>
#include <cstdio>

#include "condensor/augment.hpp"
#include "condensor/checks.hpp"
#include "condensor/dataset.hpp"
#include "condensor/dc.hpp"
#include "condensor/indicator.hpp"
#include "condensor/model.hpp"
#include "condensor/mtt.hpp"
#include "condensor/synthetic.hpp"

namespace condensor {

namespace {

CheckResult bounded(std::string name, double value, double limit) {
  return {std::move(name), std::isfinite(value) && value < limit, value, limit, {}};
}

CheckResult near(std::string name, double value, double expected, double tol) {
  auto r = bounded(std::move(name), std::abs(value - expected), tol);
  r.detail = "got " + std::to_string(value) + ", expected " + std::to_string(expected);
  return r;
}

template <class F>
void guarded(std::vector<CheckResult>& out, const std::string& name, F&& f) {
  try {
    f();
  } catch (const std::exception& e) {
    out.push_back({name, false, 0, 0, e.what()});
  }
}

TensorSet gauss_set(std::int64_t n) {
  auto [tr, te] = make_two_gaussians(4, n, 8, 40, 10, 3);
  return Preprocessor::fit(tr, {false, Normalization::standardize, 1e-6, DType::f64}).apply(tr);
}

ModelArch tiny() { return {1, 2, 1, 4, 2, NormKind::instance}; }

AugPolicy small_aug() {
  auto p = AugPolicy::mtt_default();
  p.crop_pixels = 1;
  p.cutout_pixels = 2;
  return p;
}

Tensor vec(std::vector<double> v) {
  const auto n = static_cast<std::int64_t>(v.size());
  return Tensor::from({n}, std::move(v));
}

}  // namespace

std::vector<CheckResult> gradient_suite(double tol) {
  std::vector<CheckResult> out;
  std::mt19937_64 rng(2024);
  for (const auto& c : check::primitive_cases(rng)) {
    guarded(out, "primitive " + c.name, [&] { out.push_back(bounded("primitive " + c.name, check::gradient_error(c.fn, c.inputs), tol)); });
    guarded(out, "second order " + c.name, [&] {
      out.push_back(bounded("second order " + c.name, check::second_order_error(c.fn, c.inputs, rng), tol));
    });
  }

  for (auto norm : {NormKind::instance, NormKind::none}) {
    const std::string name = "convnet forward norm=" + std::string(norm_name(norm));
    guarded(out, name, [&] {
      ModelArch arch{2, 3, 2, 8, 3, norm};
      auto p = init_params(arch, {1, DType::f64});
      auto x = check::random_tensor({3, 2, 8, 8}, rng);
      std::vector<std::int32_t> y{0, 2, 1};
      auto f = [&](const std::vector<Tensor>& in) { return ce_loss(forward(arch, p.unflatten(in[1]), in[0]), y); };
      out.push_back(bounded(name, check::gradient_error(f, {x, p.flatten()}), tol));
    });
  }

  AugPolicy policy;
  policy.crop_pixels = 2;
  policy.cutout_pixels = 3;
  for (auto t : all_transforms()) {
    const std::string name = "augmentation " + std::string(transform_name(t));
    guarded(out, name, [&] {
      auto x = check::random_tensor({2, 3, 6, 6}, rng);
      auto f = check::weighted([&](const std::vector<Tensor>& in) { return apply_transform(in[0], t, policy, 9); },
                               {2, 3, 6, 6}, rng);
      out.push_back(bounded(name, check::gradient_error(f, {x}), tol));
    });
  }

  for (auto mode : {DistanceMode::layerwise_cosine, DistanceMode::layerwise_l2}) {
    const std::string name = "dc meta-gradient " + std::string(distance_name(mode));
    guarded(out, name, [&] {
      DcConfig cfg;
      cfg.batch_real = 8;
      cfg.seed = 4;
      cfg.distance = mode;
      out.push_back(bounded(name, meta_gradient_check(gauss_set(40), tiny(), cfg), tol));
    });
  }

  guarded(out, "mtt meta-gradient", [&] {
    auto train = gauss_set(16);
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
    out.push_back(bounded("mtt meta-gradient", mtt_meta_gradient_check(buffers[0], train, cfg), tol));
  });
  return out;
}

std::vector<CheckResult> algebraic_suite() {
  std::vector<CheckResult> out;
  guarded(out, "trajectory loss", [&] {
    auto start = vec({0, 0}), target = vec({1, 0});
    out.push_back(near("trajectory loss perfect match", trajectory_loss(target, start, target).item(), 0.0, 1e-12));
    out.push_back(near("trajectory loss no progress", trajectory_loss(start, start, target).item(), 1.0, 1e-12));
    out.push_back(near("trajectory loss halfway", trajectory_loss(vec({0.5, 0}), start, target).item(), 0.25, 1e-12));
  });
  guarded(out, "gradient distance", [&] {
    auto one = [](std::vector<double> v) { return std::vector<Tensor>{Tensor::from({1, 2}, std::move(v))}; };
    std::mt19937_64 rng(3);
    std::vector<Tensor> g{check::random_tensor({3, 2, 3, 3}, rng), check::random_tensor({2, 5}, rng)};
    const auto cos = DistanceMode::layerwise_cosine;
    out.push_back(near("gradient distance identical", gradient_distance(g, g, cos).item(), 0.0, 1e-12));
    out.push_back(near("gradient distance orthogonal", gradient_distance(one({1, 0}), one({0, 1}), cos).item(), 1.0, 1e-12));
    out.push_back(near("gradient distance opposite", gradient_distance(one({1, 0}), one({-1, 0}), cos).item(), 2.0, 1e-12));
  });
  guarded(out, "pearson", [&] {
    const std::vector<std::pair<double, double>> line{{0, 1}, {1, 3}, {2, 5}}, neg{{1, -1}, {2, -2}, {4, -4}},
        hand{{1, 2}, {2, 2}, {3, 4}};
    out.push_back(near("pearson y=2x+1", pearson_r(line), 1.0, 1e-12));
    out.push_back(near("pearson y=-x", pearson_r(neg), -1.0, 1e-12));
    out.push_back(near("pearson hand example", pearson_r(hand), std::sqrt(3.0) / 2.0, 1e-4));
  });
  guarded(out, "zca off-diagonal covariance", [&] {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> g;
    const int n = 400, d = 4;
    std::vector<double> v(n * d);
    for (int i = 0; i < n; ++i) {
      double z0 = g(rng), z1 = g(rng), z2 = g(rng), z3 = g(rng);
      v[i * d + 0] = 2 * z0 + 1;
      v[i * d + 1] = z0 + 0.5 * z1;
      v[i * d + 2] = 0.3 * z2 - 2;
      v[i * d + 3] = z3 + z1;
    }
    auto x = Tensor::from_values({n, 1, 2, 2}, v, DType::f64);
    auto y = zca_apply(zca_fit(x, 1e-8), x).to_vector();
    double worst = 0;
    for (int a = 0; a < d; ++a)
      for (int b = a + 1; b < d; ++b) {
        double ma = 0, mb = 0, c = 0;
        for (int i = 0; i < n; ++i) ma += y[i * d + a] / n, mb += y[i * d + b] / n;
        for (int i = 0; i < n; ++i) c += (y[i * d + a] - ma) * (y[i * d + b] - mb) / n;
        worst = std::max(worst, std::abs(c));
      }
    out.push_back(bounded("zca off-diagonal covariance", worst, 1e-4));
  });
  auto same = [](const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
    return CheckResult{{}, a == b, 0, 0, a == b ? "" : "re-encoded bytes differ"};
  };
  guarded(out, "mdds round trip", [&] {
    auto [tr, te] = make_texture_dataset({3, 2, 8, 30, 6, 28, 56, 1, 5});
    tr.class_names = {"a", "b", "c"};
    const auto bytes = encode_mdds(tr);
    auto r = same(bytes, encode_mdds(decode_mdds(bytes)));
    r.name = "mdds round trip";
    out.push_back(r);
  });
  guarded(out, "mdds-f32 round trip", [&] {
    std::mt19937_64 rng(4);
    SyntheticDataset s;
    s.images = check::random_tensor({4, 1, 4, 4}, rng, -1, 1, DType::f32);
    s.labels = balanced_labels(2, 2);
    s.ipc = 2;
    s.num_classes = 2;
    s.name = "toy";
    const auto bytes = encode_mdds_f32(s);
    auto r = same(bytes, encode_mdds_f32(decode_mdds_f32(bytes)));
    r.name = "mdds-f32 round trip";
    out.push_back(r);
  });
  guarded(out, "mttj round trip", [&] {
    auto train = gauss_set(16);
    TeacherConfig tc;
    tc.n_teachers = 1;
    tc.epochs = 2;
    tc.batch = 8;
    const auto bytes = encode_mttj(train_teachers(train, tiny(), tc)[0]);
    auto r = same(bytes, encode_mttj(decode_mttj(bytes)));
    r.name = "mttj round trip";
    out.push_back(r);
  });
  return out;
}

std::vector<CheckResult> format_suite(const std::vector<std::filesystem::path>& files) {
  std::vector<CheckResult> out;
  for (const auto& f : files) {
    const std::string name = "format " + f.string();
    guarded(out, name, [&] {
      const auto bytes = read_file(f);
      const std::string magic(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(std::min<std::size_t>(4, bytes.size())));
      if (magic == "MTTJ") {
        decode_mttj(bytes);
      } else if (peek_mdds_kind(f) == MddsKind::f32) {
        decode_mdds_f32(bytes);
      } else {
        decode_mdds(bytes);
      }
      out.push_back({name, true, 0, 0, {}});
    });
  }
  return out;
}

std::string format_check(const CheckResult& r) {
  std::string s = std::string(r.pass ? "PASS " : "FAIL ") + r.name;
  if (r.limit > 0) {
    char buf[96];
    std::snprintf(buf, sizeof buf, " (error %.3g, limit %.3g)", r.value, r.limit);
    s += buf;
  }
  if (!r.detail.empty() && !r.pass) s += ": " + r.detail;
  return s;
}

}  // namespace condensor
