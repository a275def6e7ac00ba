#include "condensor/train.hpp"

#include "condensor/ops.hpp"
#include "condensor/rng.hpp"

namespace condensor {

std::int64_t steps_per_epoch(std::int64_t n, std::int64_t batch) { return (n + batch - 1) / batch; }

std::vector<Tensor> loss_gradients(const ModelArch& arch, const ParamSet& params, const Tensor& images,
                                   std::span<const std::int32_t> labels, double* loss) {
  Tape tape;
  TapeScope scope(tape);
  std::vector<Tensor> leaves;
  for (const auto& t : params.tensors()) leaves.push_back(tape.watch(t));
  const Tensor l = ce_loss(forward(arch, params.with_tensors(leaves), images), labels);
  if (loss) *loss = l.item();
  return tape.backward(l, leaves);
}

ParamSet train_sgd(const ModelArch& arch, ParamSet params, const TensorSet& data, const SgdConfig& cfg,
                   const StepHook& hook) {
  if (cfg.epochs < 0) throw Error("train: epochs must be >= 0");
  if (cfg.batch < 1) throw Error("train: batch must be >= 1");
  if (data.size() == 0) throw DataError("train: empty training set");
  const auto n = data.size();
  std::vector<Tensor> velocity;
  std::int64_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(derive_seed(cfg.seed, "train.shuffle", static_cast<std::uint64_t>(epoch)));
    const auto order = permutation(n, rng);
    for (std::int64_t start = 0; start < n; start += cfg.batch) {
      const auto len = std::min(cfg.batch, n - start);
      std::span<const std::int64_t> idx(order.data() + start, static_cast<std::size_t>(len));
      Tensor x = index_select(data.images, idx);
      std::vector<std::int32_t> y;
      for (auto i : idx) y.push_back(data.labels[static_cast<std::size_t>(i)]);
      x = augment(x, cfg.aug, derive_seed(cfg.seed, "train.aug", static_cast<std::uint64_t>(step)));
      double loss = 0;
      auto grads = loss_gradients(arch, params, x, y, &loss);

      NoRecordGuard no_record;
      auto current = params.tensors();
      if (cfg.momentum != 0.0) {
        if (velocity.empty()) {
          velocity = grads;
        } else {
          for (std::size_t k = 0; k < grads.size(); ++k) velocity[k] = add(scale(velocity[k], cfg.momentum), grads[k]);
        }
        grads = velocity;
      }
      for (std::size_t k = 0; k < current.size(); ++k) current[k] = sub(current[k], scale(grads[k], cfg.lr));
      params = params.with_tensors(current);
      ++step;
      if (hook) hook(step, params, loss);
    }
  }
  return params;
}

double accuracy(const ModelArch& arch, const ParamSet& params, const TensorSet& test) {
  if (test.size() == 0) throw DataError("accuracy: empty test set");
  const auto pred = predict(arch, params, test.images);
  std::int64_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == test.labels[i];
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

}  // namespace condensor
