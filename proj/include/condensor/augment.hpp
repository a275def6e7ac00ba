#pragma once

// Siamese differentiable augmentation. One transform is picked per call from the
// enabled set; the seed fixes both the choice and the per-sample parameters, so
// two batches augmented with the same seed see the same transform (sample i of
// each batch gets the same parameters).

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "condensor/tensor.hpp"

namespace condensor {

enum class Transform { crop, flip, scale, rotate, brightness, saturation, contrast, cutout };

std::string_view transform_name(Transform t);
Transform parse_transform(std::string_view s);
std::vector<Transform> all_transforms();

struct AugPolicy {
  std::vector<Transform> transforms;
  double crop_pixels = 4;       // max shift per axis, in [0, H/2]
  double scale_ratio = 0.2;     // factor in [1 - r, 1 + r], r in [0, 1)
  double rotate_degrees = 15;   // in [0, 180]
  double brightness = 1.0;      // additive shift in [-m/2, m/2], m in [0, 2]
  double saturation = 2.0;      // factor in [0, m], m in [0, 4]
  double contrast = 0.5;        // factor in [1 - m, 1 + m], m in [0, 1]
  double cutout_pixels = 8;     // square side, in [0, min(H, W)]

  bool empty() const { return transforms.empty(); }
  // Size-dependent limits are checked only when height/width are given.
  void validate(std::int64_t height = 0, std::int64_t width = 0) const;

  static AugPolicy none() { return {}; }
  static AugPolicy mtt_default();
};

// "crop,flip,cutout" or "none"
AugPolicy parse_aug_list(std::string_view list, AugPolicy base = {});
std::string aug_list(const AugPolicy& p);

Tensor augment(const Tensor& batch, const AugPolicy& policy, std::uint64_t shared_seed);
// Applies one given transform with parameters drawn from shared_seed.
Tensor apply_transform(const Tensor& batch, Transform t, const AugPolicy& policy, std::uint64_t shared_seed);

}  // namespace condensor
