#include "condensor/dc.hpp"

#include <random>

#include "condensor/gradcheck.hpp"
#include "condensor/log.hpp"
#include "condensor/ops.hpp"
#include "condensor/rng.hpp"
#include "condensor/train.hpp"

namespace condensor {

std::string_view distance_name(DistanceMode m) {
  return m == DistanceMode::layerwise_cosine ? "layerwise_cosine" : "layerwise_l2";
}

DistanceMode parse_distance(std::string_view s) {
  if (s == "layerwise_cosine" || s == "cosine") return DistanceMode::layerwise_cosine;
  if (s == "layerwise_l2" || s == "l2") return DistanceMode::layerwise_l2;
  throw Error("unknown distance '" + std::string(s) + "' (expected layerwise_cosine or layerwise_l2)");
}

std::string_view init_mode_name(InitMode m) { return m == InitMode::real_samples ? "real_samples" : "gaussian_noise"; }

InitMode parse_init_mode(std::string_view s) {
  if (s == "real_samples" || s == "real") return InitMode::real_samples;
  if (s == "gaussian_noise" || s == "noise") return InitMode::gaussian_noise;
  throw Error("unknown init mode '" + std::string(s) + "' (expected real_samples or gaussian_noise)");
}

void DcConfig::validate() const {
  if (ipc < 1) throw Error("dc: ipc must be >= 1");
  if (outer_iters < 1) throw Error("dc: outer_iters must be >= 1");
  if (net_resample_every < 1) throw Error("dc: net_resample_every must be >= 1");
  if (inner_steps < 0) throw Error("dc: inner_steps must be >= 0");
  if (batch_real < 1) throw Error("dc: batch_real must be >= 1");
  if (!(inner_lr > 0)) throw Error("dc: inner_lr must be positive");
  if (syn_lr < 0) throw Error("dc: syn_lr must be >= 0");
}

Tensor gradient_distance(const std::vector<Tensor>& ga, const std::vector<Tensor>& gb, DistanceMode mode,
                         std::int64_t* zero_groups) {
  if (ga.size() != gb.size()) throw ShapeError("gradient_distance: gradient lists differ in length");
  Tensor total;
  for (std::size_t k = 0; k < ga.size(); ++k) {
    if (ga[k].shape() != gb[k].shape())
      throw ShapeError("gradient_distance: shape " + shape_str(ga[k].shape()) + " vs " + shape_str(gb[k].shape()));
    if (ga[k].rank() < 2) continue;
    const auto groups = ga[k].dim(0);
    const Shape per_group{groups, ga[k].numel() / groups};
    const Tensor a = reshape(ga[k], per_group), b = reshape(gb[k], per_group);
    Tensor term;
    if (mode == DistanceMode::layerwise_l2) {
      term = sum(square(sub(a, b)));
    } else {
      const Shape col{groups, 1};
      const Tensor dot = sum_to(mul(a, b), col);
      const Tensor norms = mul(sum_to(square(a), col), sum_to(square(b), col));
      std::vector<double> mask(static_cast<std::size_t>(groups));
      const auto nv = norms.to_vector();
      for (std::size_t g = 0; g < mask.size(); ++g) mask[g] = nv[g] == 0.0 ? 1.0 : 0.0;
      const std::int64_t zeros = static_cast<std::int64_t>(std::count(mask.begin(), mask.end(), 1.0));
      if (zeros > 0) {
        if (zero_groups) *zero_groups += zeros;
        logging::debug("gradient_distance: ", zeros, " zero-norm group(s) in tensor ", k);
      }
      const Tensor denom = sqrt(add(norms, Tensor::from_values(col, mask, a.dtype())));
      term = sum(add_scalar(neg(div(dot, denom)), 1.0));
    }
    total = total.defined() ? add(total, term) : term;
  }
  if (!total.defined()) throw ShapeError("gradient_distance: no weight tensors to compare");
  return total;
}

SyntheticDataset init_synthetic(const TensorSet& train, int ipc, InitMode mode, std::uint64_t seed) {
  if (train.size() == 0) throw DataError("distill: empty training set");
  SyntheticDataset s;
  s.ipc = ipc;
  s.num_classes = train.num_classes;
  s.labels = balanced_labels(train.num_classes, ipc);
  Shape shape = train.images.shape();
  shape[0] = static_cast<std::int64_t>(s.labels.size());
  if (mode == InitMode::gaussian_noise) {
    Rng rng(derive_seed(seed, "distill.init"));
    std::normal_distribution<double> g;
    std::vector<double> v(static_cast<std::size_t>(numel(shape)));
    for (auto& x : v) x = g(rng);
    s.images = Tensor::from_values(shape, v, train.images.dtype());
    return s;
  }
  const auto by_class = per_class_indices(std::span<const std::int32_t>(train.labels));
  std::vector<std::int64_t> rows;
  for (int c = 0; c < train.num_classes; ++c) {
    auto it = by_class.find(c);
    const auto have = it == by_class.end() ? 0 : static_cast<std::int64_t>(it->second.size());
    if (have < ipc)
      throw DataError("distill: class " + std::to_string(c) + " has " + std::to_string(have) + " images, need " +
                      std::to_string(ipc));
    Rng rng(derive_seed(seed, "distill.init", static_cast<std::uint64_t>(c)));
    for (auto k : sample_without_replacement(have, ipc, rng)) rows.push_back(it->second[static_cast<std::size_t>(k)]);
  }
  NoRecordGuard no_record;
  s.images = index_select(train.images, rows);
  return s;
}

namespace {

struct ClassBatch {
  Tensor images;
  std::vector<std::int32_t> labels;
};

ClassBatch real_batch(const TensorSet& train, const std::vector<std::int64_t>& pool, int c, int size, Rng& rng) {
  ClassBatch b;
  std::vector<std::int64_t> rows;
  for (auto k : sample_without_replacement(static_cast<std::int64_t>(pool.size()), size, rng))
    rows.push_back(pool[static_cast<std::size_t>(k)]);
  NoRecordGuard no_record;
  b.images = index_select(train.images, rows);
  b.labels.assign(rows.size(), c);
  return b;
}

// Matching loss for one class; when `grad` is set, also its derivative w.r.t. syn.
Tensor class_matching_loss(const ModelArch& arch, const ParamSet& params, const std::vector<Tensor>& g_real,
                           const Tensor& syn, int c, const DcConfig& cfg, std::uint64_t aug_seed,
                           std::int64_t* zero_groups, Tensor* grad) {
  Tape tape(TapeMode::higher_order);
  TapeScope scope(tape);
  const Tensor s = tape.watch(syn);
  std::vector<Tensor> leaves;
  for (const auto& t : params.tensors()) leaves.push_back(tape.watch(t));
  const std::vector<std::int32_t> labels(static_cast<std::size_t>(syn.dim(0)), c);
  const Tensor loss = ce_loss(forward(arch, params.with_tensors(leaves), augment(s, cfg.aug, aug_seed)), labels);
  const auto g_syn = tape.backward(loss, leaves, true);
  const Tensor dist = gradient_distance(g_real, g_syn, cfg.distance, zero_groups);
  if (grad) *grad = tape.backward(dist, {s}, false)[0];
  return dist.detach();
}

}  // namespace

DcResult dc_distill(const TensorSet& train, const ModelArch& arch, const DcConfig& cfg) {
  cfg.validate();
  arch.validate();
  const auto by_class = per_class_indices(std::span<const std::int32_t>(train.labels));
  for (int c = 0; c < train.num_classes; ++c) {
    auto it = by_class.find(c);
    const auto have = it == by_class.end() ? 0 : it->second.size();
    if (static_cast<int>(have) < cfg.batch_real)
      throw DataError("dc: class " + std::to_string(c) + " has " + std::to_string(have) + " images, batch_real is " +
                      std::to_string(cfg.batch_real));
  }
  DcResult result;
  result.synthetic = init_synthetic(train, cfg.ipc, cfg.init, derive_seed(cfg.seed, "dc.init"));
  const auto dtype = train.images.dtype();
  std::vector<Tensor> syn;
  for (int c = 0; c < train.num_classes; ++c)
    syn.push_back(narrow(result.synthetic.images, static_cast<std::int64_t>(c) * cfg.ipc, cfg.ipc));

  Rng batch_rng(derive_seed(cfg.seed, "dc.real"));
  ParamSet params;
  for (int it = 0; it < cfg.outer_iters; ++it) {
    if (it % cfg.net_resample_every == 0)
      params = init_params(arch, {derive_seed(cfg.seed, "dc.net", static_cast<std::uint64_t>(it)), dtype});
    double iter_loss = 0;
    for (int c = 0; c < train.num_classes; ++c) {
      const auto aug_seed = derive_seed(cfg.seed, "dc.aug", static_cast<std::uint64_t>(it) * train.num_classes + c);
      const auto real = real_batch(train, by_class.at(c), c, cfg.batch_real, batch_rng);
      const auto g_real = loss_gradients(arch, params, augment(real.images, cfg.aug, aug_seed), real.labels);
      Tensor grad;
      iter_loss += class_matching_loss(arch, params, g_real, syn[c], c, cfg, aug_seed, &result.zero_norm_groups,
                                       cfg.syn_lr > 0 ? &grad : nullptr)
                       .item();
      if (cfg.syn_lr > 0) {
        NoRecordGuard no_record;
        syn[c] = sub(syn[c], scale(grad, cfg.syn_lr));
      }
    }
    result.loss_curve.push_back(iter_loss / train.num_classes);

    if (cfg.inner_steps > 0 && it + 1 < cfg.outer_iters) {
      TensorSet s{concat(syn), result.synthetic.labels, train.num_classes};
      SgdConfig inner;
      inner.epochs = cfg.inner_steps;
      inner.lr = cfg.inner_lr;
      inner.batch = s.size();
      inner.seed = derive_seed(cfg.seed, "dc.inner", static_cast<std::uint64_t>(it));
      params = train_sgd(arch, params, s, inner);
    }
  }
  if (result.zero_norm_groups > 0)
    logging::warn("dc: ", result.zero_norm_groups, " zero-norm gradient group(s) were scored as orthogonal");
  result.synthetic.images = concat(syn);
  return result;
}

double meta_gradient_check(const TensorSet& train, const ModelArch& arch, const DcConfig& cfg, double h) {
  TensorSet t64{train.images.astype(DType::f64), train.labels, train.num_classes};
  const auto syn0 = init_synthetic(t64, cfg.ipc, cfg.init, derive_seed(cfg.seed, "dc.init"));
  const ParamSet params = init_params(arch, {derive_seed(cfg.seed, "dc.net", 0), DType::f64});
  const auto by_class = per_class_indices(std::span<const std::int32_t>(t64.labels));
  Rng batch_rng(derive_seed(cfg.seed, "dc.real"));
  std::vector<std::vector<Tensor>> g_real;
  for (int c = 0; c < t64.num_classes; ++c) {
    const int size = std::min<int>(cfg.batch_real, static_cast<int>(by_class.at(c).size()));
    const auto real = real_batch(t64, by_class.at(c), c, size, batch_rng);
    g_real.push_back(loss_gradients(arch, params, augment(real.images, cfg.aug, derive_seed(cfg.seed, "dc.aug", c)),
                                    real.labels));
  }
  auto total = [&](const Tensor& images, Tensor* grad) {
    double value = 0;
    std::vector<Tensor> parts;
    for (int c = 0; c < t64.num_classes; ++c) {
      Tensor g;
      const Tensor syn_c = narrow(images, static_cast<std::int64_t>(c) * cfg.ipc, cfg.ipc);
      value += class_matching_loss(arch, params, g_real[c], syn_c, c, cfg, derive_seed(cfg.seed, "dc.aug", c), nullptr,
                                   grad ? &g : nullptr)
                   .item();
      if (grad) parts.push_back(g);
    }
    if (grad) *grad = concat(parts);
    return Tensor::scalar(value, DType::f64);
  };
  Tensor analytic;
  total(syn0.images, &analytic);
  const Tensor numeric = finite_difference_grad([&](const Tensor& x) { return total(x, nullptr); }, syn0.images, h);
  return max_relative_error(analytic, numeric);
}

}  // namespace condensor
