#pragma once

#include <cstdint>
#include <functional>

#include "condensor/augment.hpp"
#include "condensor/dataset.hpp"
#include "condensor/model.hpp"

namespace condensor {

struct SgdConfig {
  int epochs = 1;
  double lr = 0.01;
  double momentum = 0.0;
  std::int64_t batch = 128;
  AugPolicy aug;
  std::uint64_t seed = 0;  // shuffling and augmentation
};

// Called after every optimizer step with the 1-based step count and the batch loss.
using StepHook = std::function<void(std::int64_t step, const ParamSet& params, double loss)>;

// Minibatch SGD on ce_loss. Each epoch visits a fresh permutation in ceil(N / batch) steps.
ParamSet train_sgd(const ModelArch& arch, ParamSet params, const TensorSet& data, const SgdConfig& cfg,
                   const StepHook& hook = {});

std::int64_t steps_per_epoch(std::int64_t n, std::int64_t batch);

// Gradient of ce_loss w.r.t. params on one batch (first-order, detached).
std::vector<Tensor> loss_gradients(const ModelArch& arch, const ParamSet& params, const Tensor& images,
                                   std::span<const std::int32_t> labels, double* loss = nullptr);

double accuracy(const ModelArch& arch, const ParamSet& params, const TensorSet& test);

}  // namespace condensor
