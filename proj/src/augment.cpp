#include "condensor/augment.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "condensor/error.hpp"
#include "condensor/ops.hpp"
#include "condensor/rng.hpp"

namespace condensor {

std::string_view transform_name(Transform t) {
  switch (t) {
    case Transform::crop: return "crop";
    case Transform::flip: return "flip";
    case Transform::scale: return "scale";
    case Transform::rotate: return "rotate";
    case Transform::brightness: return "brightness";
    case Transform::saturation: return "saturation";
    case Transform::contrast: return "contrast";
    case Transform::cutout: return "cutout";
  }
  return "?";
}

std::vector<Transform> all_transforms() {
  return {Transform::crop,       Transform::flip,       Transform::scale,    Transform::rotate,
          Transform::brightness, Transform::saturation, Transform::contrast, Transform::cutout};
}

Transform parse_transform(std::string_view s) {
  for (auto t : all_transforms())
    if (transform_name(t) == s) return t;
  throw Error("unknown augmentation '" + std::string(s) + "'");
}

AugPolicy AugPolicy::mtt_default() {
  AugPolicy p;
  p.transforms = {Transform::crop, Transform::flip, Transform::cutout};
  return p;
}

void AugPolicy::validate(std::int64_t height, std::int64_t width) const {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw Error("augmentation: " + what);
  };
  need(crop_pixels >= 0 && (height == 0 || crop_pixels <= std::min(height, width) / 2.0),
       "crop_pixels out of range [0, H/2]");
  need(scale_ratio >= 0 && scale_ratio < 1, "scale_ratio out of range [0, 1)");
  need(rotate_degrees >= 0 && rotate_degrees <= 180, "rotate_degrees out of range [0, 180]");
  need(brightness >= 0 && brightness <= 2, "brightness out of range [0, 2]");
  need(saturation >= 0 && saturation <= 4, "saturation out of range [0, 4]");
  need(contrast >= 0 && contrast <= 1, "contrast out of range [0, 1]");
  need(cutout_pixels >= 0 && (height == 0 || cutout_pixels <= static_cast<double>(std::min(height, width))),
       "cutout_pixels out of range [0, min(H, W)]");
}

AugPolicy parse_aug_list(std::string_view list, AugPolicy base) {
  base.transforms.clear();
  if (list.empty() || list == "none") return base;
  std::size_t start = 0;
  while (start <= list.size()) {
    auto comma = list.find(',', start);
    auto item = list.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    base.transforms.push_back(parse_transform(item));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return base;
}

std::string aug_list(const AugPolicy& p) {
  if (p.empty()) return "none";
  std::string out;
  for (auto t : p.transforms) {
    if (!out.empty()) out += ",";
    out += transform_name(t);
  }
  return out;
}

namespace {

// Maps an output pixel (centred coordinates) to the input position it samples.
struct Affine {
  double a = 1, b = 0, c = 0, d = 1, ty = 0, tx = 0;  // in = [a b; c d] * out + t
};

std::shared_ptr<ResamplePlan> plan_from(const std::vector<Affine>& per_sample, std::int64_t h, std::int64_t w) {
  auto plan = std::make_shared<ResamplePlan>();
  const auto n = static_cast<std::int64_t>(per_sample.size());
  plan->batch = n;
  plan->in_h = plan->out_h = h;
  plan->in_w = plan->out_w = w;
  plan->index.assign(static_cast<std::size_t>(n * h * w * 4), -1);
  plan->weight.assign(plan->index.size(), 0.0);
  const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
  for (std::int64_t s = 0; s < n; ++s) {
    const auto& m = per_sample[static_cast<std::size_t>(s)];
    for (std::int64_t i = 0; i < h; ++i)
      for (std::int64_t j = 0; j < w; ++j) {
        const double oy = i - cy, ox = j - cx;
        const double y = m.a * oy + m.b * ox + m.ty + cy;
        const double x = m.c * oy + m.d * ox + m.tx + cx;
        const double fy = std::floor(y), fx = std::floor(x);
        const double wy = y - fy, wx = x - fx;
        const auto base = static_cast<std::size_t>(((s * h + i) * w + j) * 4);
        const std::int64_t ys[2] = {static_cast<std::int64_t>(fy), static_cast<std::int64_t>(fy) + 1};
        const std::int64_t xs[2] = {static_cast<std::int64_t>(fx), static_cast<std::int64_t>(fx) + 1};
        const double wys[2] = {1 - wy, wy}, wxs[2] = {1 - wx, wx};
        for (int p = 0; p < 2; ++p)
          for (int q = 0; q < 2; ++q) {
            const double wt = wys[p] * wxs[q];
            if (wt == 0.0 || ys[p] < 0 || ys[p] >= h || xs[q] < 0 || xs[q] >= w) continue;
            plan->index[base + p * 2 + q] = static_cast<std::int32_t>(ys[p] * w + xs[q]);
            plan->weight[base + p * 2 + q] = wt;
          }
      }
  }
  return plan;
}

// Per-sample constant of shape [N, 1, 1, 1].
Tensor per_sample(const std::vector<double>& v, DType dtype) {
  return Tensor::from_values({static_cast<std::int64_t>(v.size()), 1, 1, 1}, v, dtype);
}

}  // namespace

Tensor apply_transform(const Tensor& batch, Transform t, const AugPolicy& policy, std::uint64_t shared_seed) {
  if (batch.rank() != 4) throw ShapeError("augment: expected [N,C,H,W], got " + shape_str(batch.shape()));
  const auto n = batch.dim(0), ch = batch.dim(1), h = batch.dim(2), w = batch.dim(3);
  policy.validate();
  if (t == Transform::crop && policy.crop_pixels > static_cast<double>(std::min(h, w)) / 2.0)
    throw Error("augmentation: crop_pixels out of range [0, H/2]");
  if (t == Transform::cutout && policy.cutout_pixels > static_cast<double>(std::min(h, w)))
    throw Error("augmentation: cutout_pixels out of range [0, min(H, W)]");
  Rng rng(derive_seed(shared_seed, "aug.params"));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto dtype = batch.dtype();

  switch (t) {
    case Transform::crop: {
      const auto m = static_cast<int>(std::floor(policy.crop_pixels));
      std::uniform_int_distribution<int> shift(-m, m);
      std::vector<Affine> a(static_cast<std::size_t>(n));
      for (auto& s : a) {
        s.ty = shift(rng);
        s.tx = shift(rng);
      }
      return resample(batch, plan_from(a, h, w));
    }
    case Transform::flip: {
      std::vector<Affine> a(static_cast<std::size_t>(n));
      for (auto& s : a)
        if (u(rng) < 0.5) s.d = -1;
      return resample(batch, plan_from(a, h, w));
    }
    case Transform::scale: {
      std::vector<Affine> a(static_cast<std::size_t>(n));
      for (auto& s : a) {
        s.a = 1.0 / (1 - policy.scale_ratio + 2 * policy.scale_ratio * u(rng));
        s.d = 1.0 / (1 - policy.scale_ratio + 2 * policy.scale_ratio * u(rng));
      }
      return resample(batch, plan_from(a, h, w));
    }
    case Transform::rotate: {
      std::vector<Affine> a(static_cast<std::size_t>(n));
      for (auto& s : a) {
        const double th = (2 * u(rng) - 1) * policy.rotate_degrees * std::numbers::pi / 180.0;
        s.a = std::cos(th);
        s.b = -std::sin(th);
        s.c = std::sin(th);
        s.d = std::cos(th);
      }
      return resample(batch, plan_from(a, h, w));
    }
    case Transform::brightness: {
      std::vector<double> shift(static_cast<std::size_t>(n));
      for (auto& v : shift) v = (u(rng) - 0.5) * policy.brightness;
      return add(batch, per_sample(shift, dtype));
    }
    case Transform::saturation: {
      std::vector<double> f(static_cast<std::size_t>(n));
      for (auto& v : f) v = u(rng) * policy.saturation;
      const Tensor m = scale(sum_to(batch, {n, 1, h, w}), 1.0 / static_cast<double>(ch));
      return add(mul(sub(batch, m), per_sample(f, dtype)), m);
    }
    case Transform::contrast: {
      std::vector<double> f(static_cast<std::size_t>(n));
      for (auto& v : f) v = 1 - policy.contrast + 2 * policy.contrast * u(rng);
      const Tensor m = scale(sum_to(batch, {n, 1, 1, 1}), 1.0 / static_cast<double>(ch * h * w));
      return add(mul(sub(batch, m), per_sample(f, dtype)), m);
    }
    case Transform::cutout: {
      const auto side = static_cast<std::int64_t>(std::llround(policy.cutout_pixels));
      std::vector<double> mask(static_cast<std::size_t>(n * h * w), 1.0);
      for (std::int64_t s = 0; s < n; ++s) {
        const auto cy = static_cast<std::int64_t>(u(rng) * static_cast<double>(h));
        const auto cx = static_cast<std::int64_t>(u(rng) * static_cast<double>(w));
        for (auto i = std::max<std::int64_t>(0, cy - side / 2); i < std::min(h, cy - side / 2 + side); ++i)
          for (auto j = std::max<std::int64_t>(0, cx - side / 2); j < std::min(w, cx - side / 2 + side); ++j)
            mask[static_cast<std::size_t>((s * h + i) * w + j)] = 0.0;
      }
      return mul(batch, Tensor::from_values({n, 1, h, w}, mask, dtype));
    }
  }
  return batch;
}

Tensor augment(const Tensor& batch, const AugPolicy& policy, std::uint64_t shared_seed) {
  if (policy.empty()) return batch;
  Rng rng(derive_seed(shared_seed, "aug.choice"));
  std::uniform_int_distribution<std::size_t> pick(0, policy.transforms.size() - 1);
  return apply_transform(batch, policy.transforms[pick(rng)], policy, shared_seed);
}

}  // namespace condensor
