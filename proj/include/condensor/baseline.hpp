#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "condensor/dataset.hpp"

namespace condensor {

// ipc indices per class, uniform without replacement, class-major order.
std::vector<std::int64_t> random_select_indices(std::span<const std::int32_t> labels, int num_classes, int ipc,
                                                std::uint64_t seed);

Dataset random_select(const Dataset& train, int ipc, std::uint64_t seed);
TensorSet random_select(const TensorSet& train, int ipc, std::uint64_t seed);

}  // namespace condensor
