#pragma once

#include "condensor/checks.hpp"

namespace test {
using namespace condensor::check;
using condensor::DType;
using condensor::Shape;
using condensor::Tensor;
}  // namespace test
