#include "condensor/model.hpp"

#include <cmath>
#include <random>

#include "condensor/ops.hpp"
#include "condensor/rng.hpp"

namespace condensor {

std::string_view norm_name(NormKind n) { return n == NormKind::instance ? "instance" : "none"; }

NormKind parse_norm(std::string_view s) {
  if (s == "instance") return NormKind::instance;
  if (s == "none") return NormKind::none;
  throw Error("unknown norm '" + std::string(s) + "' (expected instance or none)");
}

void ModelArch::validate() const {
  if (depth < 1) throw Error("model: depth must be >= 1");
  if (width < 1) throw Error("model: width must be >= 1");
  if (in_channels < 1) throw Error("model: in_channels must be >= 1");
  if (num_classes < 2) throw Error("model: num_classes must be >= 2");
  if (in_hw < 1 || in_hw % (1 << depth) != 0)
    throw Error("model: input size " + std::to_string(in_hw) + " not divisible by 2^depth = " +
                std::to_string(1 << depth));
}

std::int64_t ModelArch::feature_dim() const {
  const std::int64_t hw = in_hw >> depth;
  return static_cast<std::int64_t>(width) * hw * hw;
}

namespace {
std::string block(int i, const char* part) { return "block" + std::to_string(i) + "." + part; }
}  // namespace

std::int64_t param_count(const ModelArch& arch) {
  arch.validate();
  std::int64_t n = 0;
  std::int64_t cin = arch.in_channels;
  for (int i = 0; i < arch.depth; ++i) {
    n += arch.width * cin * 9 + arch.width;
    if (arch.norm == NormKind::instance) n += 2 * arch.width;
    cin = arch.width;
  }
  return n + arch.feature_dim() * arch.num_classes + arch.num_classes;
}

ParamSet init_params(const ModelArch& arch, const InitSpec& init) {
  arch.validate();
  Rng rng(derive_seed(init.seed, "model.init"));
  auto uniform = [&](const Shape& shape, double bound) {
    std::uniform_real_distribution<double> u(-bound, bound);
    std::vector<double> v(static_cast<std::size_t>(numel(shape)));
    for (auto& x : v) x = u(rng);
    return Tensor::from_values(shape, v, init.dtype);
  };
  ParamSet p;
  std::int64_t cin = arch.in_channels;
  for (int i = 0; i < arch.depth; ++i) {
    const double fan_in = static_cast<double>(cin * 9);
    p.set(block(i, "conv.weight"), uniform({arch.width, cin, 3, 3}, std::sqrt(6.0 / fan_in)));
    p.set(block(i, "conv.bias"), Tensor::zeros({arch.width}, init.dtype));
    if (arch.norm == NormKind::instance) {
      p.set(block(i, "norm.weight"), Tensor::full({arch.width}, 1.0, init.dtype));
      p.set(block(i, "norm.bias"), Tensor::zeros({arch.width}, init.dtype));
    }
    cin = arch.width;
  }
  const double fan_in = static_cast<double>(arch.feature_dim());
  p.set("head.weight", uniform({arch.num_classes, arch.feature_dim()}, std::sqrt(6.0 / fan_in)));
  p.set("head.bias", Tensor::zeros({arch.num_classes}, init.dtype));
  return p;
}

Tensor forward(const ModelArch& arch, const ParamSet& params, const Tensor& batch) {
  if (batch.rank() != 4 || batch.dim(1) != arch.in_channels || batch.dim(2) != arch.in_hw ||
      batch.dim(3) != arch.in_hw)
    throw ShapeError("forward: batch " + shape_str(batch.shape()) + " does not match arch input [N," +
                     std::to_string(arch.in_channels) + "," + std::to_string(arch.in_hw) + "," +
                     std::to_string(arch.in_hw) + "]");
  Tensor h = batch;
  for (int i = 0; i < arch.depth; ++i) {
    const Shape per_channel{1, arch.width, 1, 1};
    h = add(conv2d(h, params.at(block(i, "conv.weight"))), reshape(params.at(block(i, "conv.bias")), per_channel));
    if (arch.norm == NormKind::instance) {
      h = instance_norm(h);
      h = add(mul(h, reshape(params.at(block(i, "norm.weight")), per_channel)),
              reshape(params.at(block(i, "norm.bias")), per_channel));
    }
    h = avg_pool2(relu(h));
  }
  h = flatten(h);
  return add(matmul(h, transpose(params.at("head.weight"))), reshape(params.at("head.bias"), {1, arch.num_classes}));
}

Tensor ce_loss(const Tensor& logits, std::span<const std::int32_t> labels) {
  return softmax_cross_entropy(logits, labels);
}

std::vector<std::int32_t> predict(const ModelArch& arch, const ParamSet& params, const Tensor& images,
                                  std::int64_t batch) {
  NoRecordGuard no_record;
  const std::int64_t n = images.dim(0);
  std::vector<std::int32_t> out;
  out.reserve(static_cast<std::size_t>(n));
  for (std::int64_t start = 0; start < n; start += batch) {
    const auto len = std::min(batch, n - start);
    const auto logits = forward(arch, params, narrow(images, start, len)).to_vector();
    for (std::int64_t i = 0; i < len; ++i) {
      std::int32_t best = 0;
      for (std::int32_t k = 1; k < arch.num_classes; ++k)
        if (logits[i * arch.num_classes + k] > logits[i * arch.num_classes + best]) best = k;
      out.push_back(best);
    }
  }
  return out;
}

}  // namespace condensor
