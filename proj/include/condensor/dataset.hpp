#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "condensor/tensor.hpp"

namespace condensor {

// Labeled u8 image set, sample-major [N, C, H, W].
struct Dataset {
  std::int64_t n = 0;
  int channels = 1, height = 0, width = 0;
  int num_classes = 0;
  std::vector<std::uint8_t> pixels;
  std::vector<std::uint16_t> labels;
  std::string name;
  std::vector<std::string> class_names;

  std::int64_t sample_size() const { return static_cast<std::int64_t>(channels) * height * width; }
  // labels < num_classes, every class present, sizes consistent
  void validate() const;
  Dataset subset(std::span<const std::int64_t> indices) const;
};

// Float images with integer labels: the working representation after preprocessing.
struct TensorSet {
  Tensor images;  // [N, C, H, W]
  std::vector<std::int32_t> labels;
  int num_classes = 0;

  std::int64_t size() const { return images.defined() ? images.dim(0) : 0; }
  TensorSet subset(std::span<const std::int64_t> indices) const;
};

// Learnable compressed set: IPC images per class with fixed labels, plus the
// learned student step size when produced by trajectory matching.
struct SyntheticDataset {
  Tensor images;
  std::vector<std::int32_t> labels;
  int ipc = 0;
  int num_classes = 0;
  std::optional<double> alpha;
  std::string name;
  std::vector<std::string> class_names;

  TensorSet as_set() const { return {images, labels, num_classes}; }
  void validate() const;
};

// Class-balanced layout: class c occupies rows [c*ipc, (c+1)*ipc).
std::vector<std::int32_t> balanced_labels(int num_classes, int ipc);

// ---- MDDS v1 ---------------------------------------------------------------

inline constexpr std::uint32_t kMddsVersion = 1;
enum class MddsKind : std::uint32_t { u8 = 0, f32 = 1 };

std::vector<std::uint8_t> encode_mdds(const Dataset& d);
Dataset decode_mdds(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_mdds_f32(const SyntheticDataset& d);
SyntheticDataset decode_mdds_f32(std::span<const std::uint8_t> bytes);

MddsKind peek_mdds_kind(const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);
void save_dataset(const Dataset& d, const std::filesystem::path& path);
SyntheticDataset load_synthetic(const std::filesystem::path& path);
void save_synthetic(const SyntheticDataset& d, const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

// ---- transforms --------------------------------------------------------------

// Bilinear, aligned corners, rounded to nearest.
Dataset resize_bilinear(const Dataset& d, int out_h, int out_w);
// The 28x28 -> 32x32 step of the pipeline; other input sizes are rejected.
Dataset resize_to_32(const Dataset& d);

std::map<int, std::vector<std::int64_t>> per_class_indices(std::span<const std::uint16_t> labels);
std::map<int, std::vector<std::int64_t>> per_class_indices(std::span<const std::int32_t> labels);
inline std::map<int, std::vector<std::int64_t>> per_class_indices(const Dataset& d) { return per_class_indices(d.labels); }

// Samples ceil(fraction * N_i) images from each source; label = source index,
// class names = source names. Grayscale sources are replicated to 3 channels
// when mixed with colour sources.
Dataset build_integrated_dataset(const std::vector<Dataset>& sources, double fraction, std::uint64_t seed);

Tensor to_float(const Dataset& d, DType dtype);  // pixels / 255

struct ZcaTransform {
  std::int64_t dim = 0;
  double epsilon = 1e-6;
  std::vector<float> mean;    // [dim]
  std::vector<float> matrix;  // [dim, dim], symmetric
};

// (Sigma + eps I)^{-1/2} from the symmetric eigendecomposition of the feature covariance.
ZcaTransform zca_fit(const Tensor& images, double epsilon = 1e-6);
Tensor zca_apply(const ZcaTransform& t, const Tensor& images);

enum class Normalization { none, standardize, zca };
std::string_view normalization_name(Normalization n);
Normalization parse_normalization(std::string_view s);

struct PreprocessConfig {
  bool resize = true;  // 28x28 inputs become 32x32
  Normalization normalization = Normalization::zca;
  double zca_epsilon = 1e-6;
  DType dtype = DType::f32;
};

// Statistics come from the training split only and are reused for every other split.
class Preprocessor {
 public:
  static Preprocessor fit(const Dataset& train, const PreprocessConfig& cfg);
  TensorSet apply(const Dataset& d) const;
  const PreprocessConfig& config() const { return cfg_; }
  const std::optional<ZcaTransform>& zca() const { return zca_; }

 private:
  Dataset prepare(const Dataset& d) const;
  PreprocessConfig cfg_;
  std::optional<ZcaTransform> zca_;
  std::vector<double> channel_mean_, channel_std_;
};

}  // namespace condensor
