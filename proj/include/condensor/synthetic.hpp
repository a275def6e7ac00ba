#pragma once

// Generated datasets for tests and desk-scale experiments.

#include <cstdint>
#include <utility>

#include "condensor/dataset.hpp"

namespace condensor {

struct TextureSpec {
  int num_classes = 4;
  int channels = 1;
  int size = 16;
  std::int64_t train = 2000;
  std::int64_t test = 1000;
  double signal = 28.0;  // template amplitude, grey levels
  double noise = 56.0;   // per-pixel noise std, grey levels
  int smooth = 2;        // box-blur radius of the class templates
  std::uint64_t seed = 0;
};

// Each class is a fixed smoothed-noise template; samples add white noise around
// mid grey. Returns {train, test}.
std::pair<Dataset, Dataset> make_texture_dataset(const TextureSpec& spec);

// Two classes at +mu / -mu (a 1 x side x side encoding of a 2-D point) plus noise.
std::pair<Dataset, Dataset> make_two_gaussians(int side, std::int64_t train, std::int64_t test, double mu,
                                               double noise, std::uint64_t seed);

}  // namespace condensor
