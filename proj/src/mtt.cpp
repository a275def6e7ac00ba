#include "condensor/mtt.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <random>
#include <thread>

#include "condensor/gradcheck.hpp"
#include "condensor/log.hpp"
#include "condensor/ops.hpp"
#include "condensor/rng.hpp"
#include "condensor/train.hpp"

namespace condensor {

void TrajectoryBuffer::validate() const {
  arch.validate();
  if (snapshots.size() < 2) throw FormatError(FormatError::Code::bad_header, "trajectory: need at least 2 snapshots");
  const auto want = static_cast<std::size_t>(param_count(arch));
  for (const auto& s : snapshots)
    if (s.size() != want)
      throw FormatError(FormatError::Code::payload_mismatch, "trajectory: snapshot length " + std::to_string(s.size()) +
                                                                 " != parameter count " + std::to_string(want));
}

// ---- MTTJ ----------------------------------------------------------------------------

namespace {

void put32(std::vector<std::uint8_t>& o, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) o.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put64(std::vector<std::uint8_t>& o, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) o.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

struct Reader {
  std::span<const std::uint8_t> b;
  std::size_t at = 0;
  void need(std::size_t n) const {
    if (b.size() - at < n) throw FormatError(FormatError::Code::truncated, "MTTJ: truncated file");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[at + i]) << (8 * i);
    at += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[at + i]) << (8 * i);
    at += 8;
    return v;
  }
};

}  // namespace

std::vector<std::uint8_t> encode_mttj(const TrajectoryBuffer& b) {
  b.validate();
  std::vector<std::uint8_t> o{'M', 'T', 'T', 'J'};
  put32(o, kMttjVersion);
  for (int v : {b.arch.depth, b.arch.width, b.arch.in_channels, b.arch.in_hw, b.arch.in_hw, b.arch.num_classes})
    put32(o, static_cast<std::uint32_t>(v));
  put32(o, static_cast<std::uint32_t>(b.snapshots.size()));
  put64(o, b.snapshots.front().size());
  for (const auto& s : b.snapshots)
    for (float f : s) put32(o, std::bit_cast<std::uint32_t>(f));
  put32(o, std::bit_cast<std::uint32_t>(static_cast<float>(b.lr)));
  put64(o, b.seed);
  return o;
}

TrajectoryBuffer decode_mttj(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "MTTJ", 4) != 0)
    throw FormatError(FormatError::Code::bad_magic, "MTTJ: bad magic (expected \"MTTJ\")");
  Reader r{bytes, 4};
  const auto version = r.u32();
  if (version != kMttjVersion) throw FormatError(FormatError::Code::bad_version, "MTTJ: unsupported version " + std::to_string(version));
  TrajectoryBuffer b;
  b.arch.depth = static_cast<int>(r.u32());
  b.arch.width = static_cast<int>(r.u32());
  b.arch.in_channels = static_cast<int>(r.u32());
  const auto h = r.u32(), w = r.u32();
  if (h != w) throw FormatError(FormatError::Code::bad_header, "MTTJ: non-square input " + std::to_string(h) + "x" + std::to_string(w));
  b.arch.in_hw = static_cast<int>(h);
  b.arch.num_classes = static_cast<int>(r.u32());
  const auto count = r.u32();
  const auto flat = r.u64();
  if (flat > bytes.size() || static_cast<std::uint64_t>(count) * flat * 4 != bytes.size() - r.at - 12)
    throw FormatError(FormatError::Code::payload_mismatch, "MTTJ: payload length mismatch");
  b.snapshots.assign(count, std::vector<float>(static_cast<std::size_t>(flat)));
  for (auto& s : b.snapshots)
    for (auto& f : s) f = std::bit_cast<float>(r.u32());
  b.lr = std::bit_cast<float>(r.u32());
  b.seed = r.u64();
  try {
    b.validate();
  } catch (const FormatError&) {
    throw;
  } catch (const Error& e) {
    throw FormatError(FormatError::Code::bad_header, std::string("MTTJ: ") + e.what());
  }
  return b;
}

TrajectoryBuffer load_trajectory(const std::filesystem::path& path) { return decode_mttj(read_file(path)); }
void save_trajectory(const TrajectoryBuffer& b, const std::filesystem::path& path) { write_file(path, encode_mttj(b)); }

// ---- teachers ------------------------------------------------------------------------

namespace {

std::vector<float> to_f32(const ParamSet& p) {
  const auto v = p.flat_values();
  return {v.begin(), v.end()};
}

TrajectoryBuffer train_one(const TensorSet& train, const ModelArch& arch, const TeacherConfig& cfg, int t) {
  TrajectoryBuffer b;
  b.arch = arch;
  b.lr = cfg.lr;
  b.seed = derive_seed(cfg.seed, "teacher", static_cast<std::uint64_t>(t));
  auto params = init_params(arch, {derive_seed(b.seed, "init"), train.images.dtype()});
  b.snapshots.push_back(to_f32(params));
  const auto interval = cfg.snapshot_interval > 0 ? cfg.snapshot_interval : steps_per_epoch(train.size(), cfg.batch);
  SgdConfig sgd;
  sgd.epochs = cfg.epochs;
  sgd.lr = cfg.lr;
  sgd.momentum = cfg.momentum;
  sgd.batch = cfg.batch;
  sgd.aug = cfg.aug;
  sgd.seed = derive_seed(b.seed, "sgd");
  train_sgd(arch, params, train, sgd, [&](std::int64_t step, const ParamSet& p, double) {
    if (step % interval == 0) b.snapshots.push_back(to_f32(p));
  });
  return b;
}

}  // namespace

std::vector<TrajectoryBuffer> train_teachers(const TensorSet& train, const ModelArch& arch, const TeacherConfig& cfg) {
  arch.validate();
  if (cfg.n_teachers < 1) throw Error("teachers: n_teachers must be >= 1");
  if (cfg.epochs < 1) throw Error("teachers: epochs must be >= 1");
  if (cfg.snapshot_interval < 0) throw Error("teachers: snapshot_interval must be >= 0");
  if (cfg.lr < 0) throw Error("teachers: lr must be >= 0");
  if (train.size() == 0) throw DataError("teachers: empty training set");
  std::vector<TrajectoryBuffer> out(static_cast<std::size_t>(cfg.n_teachers));
  const int workers = std::max(1, std::min(cfg.threads, cfg.n_teachers));
  if (workers == 1) {
    for (int t = 0; t < cfg.n_teachers; ++t) out[t] = train_one(train, arch, cfg, t);
    return out;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      try {
        for (int t = w; t < cfg.n_teachers; t += workers) out[t] = train_one(train, arch, cfg, t);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

// ---- student -------------------------------------------------------------------------

ParamSet student_unroll(const ParamSet& start, int steps, const Tensor& alpha, const StudentLoss& loss) {
  if (steps < 1) throw Error("student_unroll: steps must be >= 1");
  if (alpha.numel() != 1) throw ShapeError("student_unroll: alpha must be a scalar");
  if (alpha.item() < 0) throw Error("student_unroll: alpha must be >= 0");
  Tape* tape = active_tape();
  if (!tape || !recording()) throw GraphError("student_unroll: needs an active tape");
  std::vector<Tensor> theta;
  for (const auto& t : start.tensors()) theta.push_back(tape->owns(t) ? t : tape->watch(t));
  ParamSet current = start.with_tensors(theta);
  for (int j = 0; j < steps; ++j) {
    const auto grads = tape->backward(loss(current, j), theta);
    for (std::size_t k = 0; k < theta.size(); ++k) theta[k] = sub(theta[k], mul(alpha, grads[k]));
    current = current.with_tensors(theta);
  }
  return current;
}

ParamSet student_unroll(const ModelArch& arch, const Tensor& images, std::span<const std::int32_t> labels,
                        const ParamSet& start, int steps, const Tensor& alpha, const AugPolicy& policy,
                        std::uint64_t seed) {
  return student_unroll(start, steps, alpha, [&](const ParamSet& p, int j) {
    const Tensor x = augment(images, policy, derive_seed(seed, "student.aug", static_cast<std::uint64_t>(j)));
    return ce_loss(forward(arch, p, x), labels);
  });
}

Tensor trajectory_loss(const Tensor& student, const Tensor& start, const Tensor& target) {
  if (student.numel() != target.numel() || start.numel() != target.numel())
    throw ShapeError("trajectory_loss: length mismatch " + std::to_string(student.numel()) + "/" +
                     std::to_string(start.numel()) + "/" + std::to_string(target.numel()));
  const Tensor denom = sum(square(sub(start.detach(), target.detach())));
  if (denom.item() == 0.0) throw Error("trajectory_loss: teacher start equals target");
  return div(sum(square(sub(student, target.detach()))), denom);
}

// ---- distillation ----------------------------------------------------------------------

void MttConfig::validate() const {
  if (ipc < 1) throw Error("mtt: ipc must be >= 1");
  if (iters < 1) throw Error("mtt: iters must be >= 1");
  if (syn_steps < 1) throw Error("mtt: syn_steps must be >= 1");
  if (expert_epochs < 1) throw Error("mtt: expert_epochs must be >= 1");
  if (max_start < -1) throw Error("mtt: max_start must be >= 0 (or -1 for the default)");
  if (syn_lr < 0 || alpha_lr < 0) throw Error("mtt: learning rates must be >= 0");
  if (momentum < 0 || momentum >= 1) throw Error("mtt: momentum must be in [0, 1)");
  if (!(alpha_init > 0)) throw Error("mtt: alpha_init must be positive");
}

int MttConfig::resolved_max_start(std::int64_t last_index) const {
  const int m = max_start >= 0 ? max_start : static_cast<int>(std::floor(0.25 * static_cast<double>(last_index)));
  if (m + expert_epochs > last_index)
    throw Error("mtt: max_start + expert_epochs = " + std::to_string(m + expert_epochs) +
                " exceeds the last snapshot index " + std::to_string(last_index));
  return m;
}

namespace {

struct Sample {
  Tensor start, target;
};

// One outer evaluation: loss value and, when requested, gradients w.r.t. images and log alpha.
double outer_step(const ModelArch& arch, const ParamSet& layout, const Tensor& images,
                  std::span<const std::int32_t> labels, const Tensor& log_alpha, const Sample& s, const MttConfig& cfg,
                  std::uint64_t seed, bool higher, Tensor* g_images, Tensor* g_log_alpha) {
  Tape tape(higher ? TapeMode::higher_order : TapeMode::first_order);
  TapeScope scope(tape);
  const Tensor x = tape.watch(images);
  const Tensor la = tape.watch(log_alpha);
  const ParamSet start = layout.unflatten(s.start);
  const ParamSet final = student_unroll(arch, x, labels, start, cfg.syn_steps, exp(la), cfg.aug, seed);
  const Tensor loss = trajectory_loss(final.flatten(), s.start, s.target);
  if (g_images) {
    auto g = tape.backward(loss, {x, la}, false);
    *g_images = g[0];
    if (g_log_alpha) *g_log_alpha = g[1];
  }
  return loss.item();
}

Tensor snapshot_tensor(const std::vector<float>& v, DType dtype) {
  return Tensor::from({static_cast<std::int64_t>(v.size())}, std::vector<float>(v)).astype(dtype);
}

}  // namespace

MttResult mtt_distill(const std::vector<TrajectoryBuffer>& buffers, const TensorSet& train, const ModelArch& arch,
                      const MttConfig& cfg) {
  cfg.validate();
  if (buffers.empty()) throw Error("mtt: no teacher trajectories");
  for (const auto& b : buffers) {
    b.validate();
    if (b.arch != arch) throw Error("mtt: trajectory architecture does not match the model architecture");
  }
  if (train.num_classes != arch.num_classes) throw DataError("mtt: dataset classes != architecture classes");
  std::vector<int> max_start;
  for (const auto& b : buffers) max_start.push_back(cfg.resolved_max_start(b.last_index()));

  const auto dtype = train.images.dtype();
  MttResult result;
  result.synthetic = init_synthetic(train, cfg.ipc, cfg.init, derive_seed(cfg.seed, "mtt.init"));
  Tensor images = result.synthetic.images;
  const auto& labels = result.synthetic.labels;
  Tensor log_alpha = Tensor::scalar(std::log(cfg.alpha_init), dtype);
  Tensor v_images = Tensor::zeros(images.shape(), dtype);
  double v_alpha = 0;
  const ParamSet layout = init_params(arch, {0, dtype});

  Rng rng(derive_seed(cfg.seed, "mtt.sample"));
  for (int it = 0; it < cfg.iters; ++it) {
    Sample s;
    for (int attempt = 0;; ++attempt) {
      if (attempt == 100) throw Error("mtt: every sampled teacher segment has identical endpoints");
      const auto b = std::uniform_int_distribution<std::size_t>(0, buffers.size() - 1)(rng);
      const auto i = std::uniform_int_distribution<int>(0, max_start[b])(rng);
      const auto& from = buffers[b].snapshots[static_cast<std::size_t>(i)];
      const auto& to = buffers[b].snapshots[static_cast<std::size_t>(i + cfg.expert_epochs)];
      if (from == to) {
        logging::warn("mtt: teacher ", b, " snapshots ", i, " and ", i + cfg.expert_epochs, " are identical; resampling");
        ++result.skipped;
        continue;
      }
      s = {snapshot_tensor(from, dtype), snapshot_tensor(to, dtype)};
      break;
    }
    Tensor g_images, g_alpha;
    const double loss = outer_step(arch, layout, images, labels, log_alpha, s, cfg,
                                   derive_seed(cfg.seed, "mtt.iter", static_cast<std::uint64_t>(it)), true, &g_images,
                                   &g_alpha);
    result.loss_curve.push_back(loss);
    NoRecordGuard no_record;
    v_images = add(scale(v_images, cfg.momentum), g_images);
    images = sub(images, scale(v_images, cfg.syn_lr));
    if (cfg.alpha_learnable) {
      v_alpha = cfg.momentum * v_alpha + g_alpha.item();
      log_alpha = Tensor::scalar(log_alpha.item() - cfg.alpha_lr * v_alpha, dtype);
    }
    result.alpha_curve.push_back(std::exp(log_alpha.item()));
  }
  result.synthetic.images = images;
  result.synthetic.alpha = std::exp(log_alpha.item());
  return result;
}

double mtt_meta_gradient_check(const TrajectoryBuffer& buffer, const TensorSet& train, const MttConfig& cfg, double h) {
  buffer.validate();
  TensorSet t64{train.images.astype(DType::f64), train.labels, train.num_classes};
  const auto syn = init_synthetic(t64, cfg.ipc, cfg.init, derive_seed(cfg.seed, "mtt.init"));
  const ParamSet layout = init_params(buffer.arch, {0, DType::f64});
  const Sample s{snapshot_tensor(buffer.snapshots.front(), DType::f64),
                 snapshot_tensor(buffer.snapshots.at(static_cast<std::size_t>(cfg.expert_epochs)), DType::f64)};
  const Tensor log_alpha = Tensor::scalar(std::log(cfg.alpha_init), DType::f64);
  const auto seed = derive_seed(cfg.seed, "mtt.iter", 0);
  Tensor analytic;
  outer_step(buffer.arch, layout, syn.images, syn.labels, log_alpha, s, cfg, seed, true, &analytic, nullptr);
  const Tensor numeric = finite_difference_grad(
      [&](const Tensor& x) {
        return Tensor::scalar(
            outer_step(buffer.arch, layout, x, syn.labels, log_alpha, s, cfg, seed, false, nullptr, nullptr),
            DType::f64);
      },
      syn.images, h);
  return max_relative_error(analytic, numeric);
}

}  // namespace condensor
