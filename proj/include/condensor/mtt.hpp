#pragma once

// Trajectory matching: teachers record parameter snapshots while training on the
// real data; synthetic images (and a log step size) are optimized so that J
// student steps from snapshot i land near snapshot i + K.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "condensor/augment.hpp"
#include "condensor/dataset.hpp"
#include "condensor/dc.hpp"
#include "condensor/model.hpp"

namespace condensor {

struct TrajectoryBuffer {
  ModelArch arch;
  std::vector<std::vector<float>> snapshots;  // flattened ParamSets, theta_0 .. theta_I
  double lr = 0;
  std::uint64_t seed = 0;

  std::int64_t last_index() const { return static_cast<std::int64_t>(snapshots.size()) - 1; }
  void validate() const;
};

inline constexpr std::uint32_t kMttjVersion = 1;
std::vector<std::uint8_t> encode_mttj(const TrajectoryBuffer& b);
TrajectoryBuffer decode_mttj(std::span<const std::uint8_t> bytes);
TrajectoryBuffer load_trajectory(const std::filesystem::path& path);
void save_trajectory(const TrajectoryBuffer& b, const std::filesystem::path& path);

struct TeacherConfig {
  int n_teachers = 3;
  int epochs = 5;
  int snapshot_interval = 0;  // optimizer steps between snapshots; 0 = once per epoch
  double lr = 0.01;
  double momentum = 0.0;
  std::int64_t batch = 128;
  AugPolicy aug;
  std::uint64_t seed = 0;
  int threads = 1;
};

std::vector<TrajectoryBuffer> train_teachers(const TensorSet& train, const ModelArch& arch, const TeacherConfig& cfg);

// J recorded SGD steps theta <- theta - alpha * grad loss(theta, j), starting from
// `start`. Must run on an active higher_order tape; the result stays differentiable
// w.r.t. anything loss depends on and w.r.t. alpha.
using StudentLoss = std::function<Tensor(const ParamSet& params, int step)>;
ParamSet student_unroll(const ParamSet& start, int steps, const Tensor& alpha, const StudentLoss& loss);

// Student unroll on the synthetic batch with augmentation seeds derived from `seed`.
ParamSet student_unroll(const ModelArch& arch, const Tensor& images, std::span<const std::int32_t> labels,
                        const ParamSet& start, int steps, const Tensor& alpha, const AugPolicy& policy,
                        std::uint64_t seed);

// |student - target|^2 / |start - target|^2
Tensor trajectory_loss(const Tensor& student, const Tensor& start, const Tensor& target);

struct MttConfig {
  int ipc = 10;
  int iters = 500;
  int syn_steps = 10;    // J
  int expert_epochs = 2; // K, in snapshots
  int max_start = -1;    // -1: floor(0.25 * I)
  double syn_lr = 100.0;
  double alpha_lr = 0.01;  // on log(alpha)
  double momentum = 0.5;
  double alpha_init = 0.01;
  bool alpha_learnable = true;
  InitMode init = InitMode::real_samples;
  AugPolicy aug = AugPolicy::mtt_default();
  std::uint64_t seed = 0;

  void validate() const;
  int resolved_max_start(std::int64_t last_index) const;
};

struct MttResult {
  SyntheticDataset synthetic;  // alpha set to the learned step size
  std::vector<double> loss_curve;
  std::vector<double> alpha_curve;
  int skipped = 0;  // samples with teacher start == target
};

MttResult mtt_distill(const std::vector<TrajectoryBuffer>& buffers, const TensorSet& train, const ModelArch& arch,
                      const MttConfig& cfg);

// Worst relative error of d(trajectory loss)/d(synthetic pixels) against central
// differences on one fixed (buffer, start) sample, in f64.
double mtt_meta_gradient_check(const TrajectoryBuffer& buffer, const TensorSet& train, const MttConfig& cfg,
                               double h = 1e-5);

}  // namespace condensor
