#pragma once

// Dataset condensation by per-class gradient matching.

#include <cstdint>
#include <string_view>
#include <vector>

#include "condensor/augment.hpp"
#include "condensor/dataset.hpp"
#include "condensor/model.hpp"

namespace condensor {

enum class DistanceMode { layerwise_cosine, layerwise_l2 };
enum class InitMode { real_samples, gaussian_noise };

std::string_view distance_name(DistanceMode m);
DistanceMode parse_distance(std::string_view s);
std::string_view init_mode_name(InitMode m);
InitMode parse_init_mode(std::string_view s);

struct DcConfig {
  int ipc = 1;
  int outer_iters = 200;
  int net_resample_every = 1;
  int inner_steps = 1;
  double inner_lr = 0.01;
  double syn_lr = 0.1;
  int batch_real = 64;
  DistanceMode distance = DistanceMode::layerwise_cosine;
  InitMode init = InitMode::real_samples;
  AugPolicy aug;
  std::uint64_t seed = 0;

  void validate() const;
};

// Distance between two gradient lists in parameter order. Only tensors of rank >= 2
// (conv kernels, head weights) take part; each is split into groups along axis 0.
// Under cosine, a group where either side has zero norm contributes 1 and is
// counted in *zero_groups.
Tensor gradient_distance(const std::vector<Tensor>& ga, const std::vector<Tensor>& gb, DistanceMode mode,
                         std::int64_t* zero_groups = nullptr);

struct DcResult {
  SyntheticDataset synthetic;
  std::vector<double> loss_curve;  // mean matching loss over classes, per outer iteration
  std::int64_t zero_norm_groups = 0;
};

// Images drawn per class as the starting point (real_samples) or N(0, 1) noise.
SyntheticDataset init_synthetic(const TensorSet& train, int ipc, InitMode mode, std::uint64_t seed);

DcResult dc_distill(const TensorSet& train, const ModelArch& arch, const DcConfig& cfg);

// Worst relative error between the analytic derivative of the summed per-class
// matching loss w.r.t. the synthetic pixels and central differences, in f64.
double meta_gradient_check(const TensorSet& train, const ModelArch& arch, const DcConfig& cfg, double h = 1e-5);

}  // namespace condensor
