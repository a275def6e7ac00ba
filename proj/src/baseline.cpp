#include "condensor/baseline.hpp"

#include "condensor/rng.hpp"

namespace condensor {

std::vector<std::int64_t> random_select_indices(std::span<const std::int32_t> labels, int num_classes, int ipc,
                                                std::uint64_t seed) {
  if (ipc < 1) throw DataError("random selection: ipc must be >= 1");
  const auto by_class = per_class_indices(labels);
  std::vector<std::int64_t> out;
  for (int c = 0; c < num_classes; ++c) {
    auto it = by_class.find(c);
    const auto have = it == by_class.end() ? 0 : static_cast<std::int64_t>(it->second.size());
    if (have < ipc)
      throw DataError("random selection: class " + std::to_string(c) + " has " + std::to_string(have) +
                      " images, ipc is " + std::to_string(ipc));
    Rng rng(derive_seed(seed, "random.select", static_cast<std::uint64_t>(c)));
    for (auto k : sample_without_replacement(have, ipc, rng)) out.push_back(it->second[static_cast<std::size_t>(k)]);
  }
  return out;
}

Dataset random_select(const Dataset& train, int ipc, std::uint64_t seed) {
  const std::vector<std::int32_t> labels(train.labels.begin(), train.labels.end());
  return train.subset(random_select_indices(labels, train.num_classes, ipc, seed));
}

TensorSet random_select(const TensorSet& train, int ipc, std::uint64_t seed) {
  return train.subset(random_select_indices(train.labels, train.num_classes, ipc, seed));
}

}  // namespace condensor
