#pragma once

// Differentiable primitives. Binary elementwise ops broadcast numpy-style by
// inserting `expand` nodes; every vjp is written in terms of these same ops.

#include <cstdint>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "condensor/tensor.hpp"

namespace condensor {

// elementwise
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double c);
Tensor add_scalar(const Tensor& x, double c);
Tensor neg(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor square(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);

// shape
Tensor reshape(const Tensor& x, Shape shape);
Tensor flatten(const Tensor& x);  // [N, ...] -> [N, prod(...)]
Tensor expand(const Tensor& x, const Shape& shape);
Tensor sum_to(const Tensor& x, const Shape& shape);  // adjoint of expand
Tensor transpose(const Tensor& x);                    // 2-D
Tensor concat(const std::vector<Tensor>& parts);      // along axis 0
Tensor narrow(const Tensor& x, std::int64_t start, std::int64_t length);  // axis 0
Tensor pad_rows(const Tensor& x, std::int64_t start, std::int64_t total);  // adjoint of narrow
Tensor index_select(const Tensor& x, std::span<const std::int64_t> rows);  // axis 0
Tensor index_add(const Tensor& src, std::span<const std::int64_t> rows, std::int64_t total_rows);

// reductions
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// linear algebra / convolution; conv kernels are square with odd size and "same" padding
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor conv2d(const Tensor& x, const Tensor& w);
Tensor conv2d_input_grad(const Tensor& grad_out, const Tensor& w);
Tensor conv2d_weight_grad(const Tensor& x, const Tensor& grad_out, std::int64_t kernel);
Tensor avg_pool2(const Tensor& x);
Tensor avg_unpool2(const Tensor& g);  // adjoint of avg_pool2

// normalization, classification
Tensor instance_norm(const Tensor& x, double eps = 1e-5);
Tensor softmax(const Tensor& logits);  // rows of a 2-D tensor
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const std::int32_t> labels);  // batch mean

// Fixed bilinear resampling: each output pixel of sample n is a weighted sum of
// up to four input pixels of the same sample and channel (zero outside).
struct ResamplePlan {
  std::int64_t batch = 0, in_h = 0, in_w = 0, out_h = 0, out_w = 0;
  std::vector<std::int32_t> index;  // [batch*out_h*out_w*4], -1 for none
  std::vector<double> weight;       // same layout
};
Tensor resample(const Tensor& x, std::shared_ptr<const ResamplePlan> plan);
Tensor resample_transpose(const Tensor& g, std::shared_ptr<const ResamplePlan> plan);

Shape broadcast_shape(const Shape& a, const Shape& b);

enum class Primitive {
  add, sub, mul, scalar_mul, div, matmul, conv2d, relu, avg_pool, instance_norm, flatten, sum, mean,
  softmax_cross_entropy, square, sqrt, concat, index_select, exp, log, transpose, expand, sum_to,
  softmax, reshape,
};

std::string_view primitive_name(Primitive p);
std::vector<Primitive> all_primitives();

struct PrimitiveAttrs {
  double scalar = 1.0;
  Shape shape;
  std::vector<std::int64_t> indices;
  std::vector<std::int32_t> labels;
};

// Uniform entry point used by gradient checks and the Python bindings.
Tensor apply_primitive(Primitive op, const std::vector<Tensor>& inputs, const PrimitiveAttrs& attrs = {});

}  // namespace condensor
