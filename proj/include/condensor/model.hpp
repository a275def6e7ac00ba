#pragma once

// ConvNet classifier: depth x [conv3x3 -> instance norm -> relu -> avgpool2],
// then a linear head over the flattened features.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "condensor/params.hpp"
#include "condensor/tensor.hpp"

namespace condensor {

enum class NormKind { instance, none };

std::string_view norm_name(NormKind n);
NormKind parse_norm(std::string_view s);

struct ModelArch {
  int depth = 3;
  int width = 32;
  int in_channels = 1;
  int in_hw = 32;
  int num_classes = 2;
  NormKind norm = NormKind::instance;

  void validate() const;
  std::int64_t feature_dim() const;
  bool operator==(const ModelArch&) const = default;
};

// Kaiming-uniform weights (bound sqrt(6 / fan_in)), zero biases, unit norm scales.
struct InitSpec {
  std::uint64_t seed = 0;
  DType dtype = DType::f32;
};

ParamSet init_params(const ModelArch& arch, const InitSpec& init);
std::int64_t param_count(const ModelArch& arch);

// batch: [N, in_channels, in_hw, in_hw] -> logits [N, num_classes]
Tensor forward(const ModelArch& arch, const ParamSet& params, const Tensor& batch);

// Mean cross-entropy; labels must lie in [0, num_classes).
Tensor ce_loss(const Tensor& logits, std::span<const std::int32_t> labels);

// Top-1 predictions, ties broken by the lowest class index.
std::vector<std::int32_t> predict(const ModelArch& arch, const ParamSet& params, const Tensor& images,
                                  std::int64_t batch = 256);

}  // namespace condensor
