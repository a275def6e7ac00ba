#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace condensor {

using Rng = std::mt19937_64;

// Seeds for named sub-streams ("teacher.0", "dc.init", ...) derived from one run seed.
std::uint64_t derive_seed(std::uint64_t root, std::string_view stream);
std::uint64_t derive_seed(std::uint64_t root, std::string_view stream, std::uint64_t index);

inline Rng make_rng(std::uint64_t root, std::string_view stream) { return Rng(derive_seed(root, stream)); }

// Uniform sample of k distinct values from [0, n), in draw order.
std::vector<std::int64_t> sample_without_replacement(std::int64_t n, std::int64_t k, Rng& rng);

std::vector<std::int64_t> permutation(std::int64_t n, Rng& rng);

}  // namespace condensor
