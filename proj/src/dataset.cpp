#include "condensor/dataset.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>

#include "condensor/ops.hpp"
#include "condensor/rng.hpp"

namespace condensor {

// ---- types -----------------------------------------------------------------------

void Dataset::validate() const {
  if (n < 0 || channels < 1 || height < 1 || width < 1)
    throw DataError("dataset '" + name + "': invalid dimensions");
  if (static_cast<std::int64_t>(pixels.size()) != n * sample_size())
    throw DataError("dataset '" + name + "': pixel buffer does not match N*C*H*W");
  if (static_cast<std::int64_t>(labels.size()) != n) throw DataError("dataset '" + name + "': label count != N");
  if (num_classes < 1) throw DataError("dataset '" + name + "': num_classes must be >= 1");
  std::vector<std::int64_t> count(static_cast<std::size_t>(num_classes), 0);
  for (auto y : labels) {
    if (y >= num_classes)
      throw DataError("dataset '" + name + "': label " + std::to_string(y) + " >= num_classes " +
                      std::to_string(num_classes));
    ++count[y];
  }
  for (int c = 0; c < num_classes; ++c)
    if (count[static_cast<std::size_t>(c)] == 0)
      throw DataError("dataset '" + name + "': class " + std::to_string(c) + " has no samples");
  if (!class_names.empty() && static_cast<int>(class_names.size()) != num_classes)
    throw DataError("dataset '" + name + "': class name count != num_classes");
}

Dataset Dataset::subset(std::span<const std::int64_t> indices) const {
  Dataset out = *this;
  out.n = static_cast<std::int64_t>(indices.size());
  out.pixels.clear();
  out.labels.clear();
  const auto s = sample_size();
  for (auto i : indices) {
    if (i < 0 || i >= n) throw DataError("subset: index out of range");
    out.pixels.insert(out.pixels.end(), pixels.begin() + i * s, pixels.begin() + (i + 1) * s);
    out.labels.push_back(labels[static_cast<std::size_t>(i)]);
  }
  return out;
}

TensorSet TensorSet::subset(std::span<const std::int64_t> indices) const {
  TensorSet out;
  {
    NoRecordGuard no_record;
    out.images = index_select(images, indices);
  }
  out.num_classes = num_classes;
  for (auto i : indices) out.labels.push_back(labels.at(static_cast<std::size_t>(i)));
  return out;
}

void SyntheticDataset::validate() const {
  if (!images.defined() || images.rank() != 4) throw DataError("synthetic set: images must be [N,C,H,W]");
  if (static_cast<std::int64_t>(labels.size()) != images.dim(0)) throw DataError("synthetic set: label count != N");
  for (auto y : labels)
    if (y < 0 || y >= num_classes) throw DataError("synthetic set: label out of range");
  if (alpha && !(*alpha > 0)) throw DataError("synthetic set: alpha must be positive");
}

std::vector<std::int32_t> balanced_labels(int num_classes, int ipc) {
  std::vector<std::int32_t> out;
  for (int c = 0; c < num_classes; ++c) out.insert(out.end(), static_cast<std::size_t>(ipc), c);
  return out;
}

// ---- MDDS encoding -------------------------------------------------------------------

namespace {

constexpr std::size_t kHeaderBytes = 32;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}
std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[at + i]) << (8 * i);
  return v;
}
std::uint16_t get_u16(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

struct Header {
  std::uint32_t n, c, h, w, classes, kind;
};

void put_header(std::vector<std::uint8_t>& out, const Header& h) {
  out.insert(out.end(), {'M', 'D', 'D', 'S'});
  put_u32(out, kMddsVersion);
  put_u32(out, h.n);
  put_u32(out, h.c);
  put_u32(out, h.h);
  put_u32(out, h.w);
  put_u32(out, h.classes);
  put_u32(out, h.kind);
}

Header get_header(std::span<const std::uint8_t> b) {
  if (b.size() < 4 || std::memcmp(b.data(), "MDDS", 4) != 0)
    throw FormatError(FormatError::Code::bad_magic, "MDDS: bad magic (expected \"MDDS\")");
  if (b.size() < kHeaderBytes) throw FormatError(FormatError::Code::truncated, "MDDS: truncated header");
  const auto version = get_u32(b, 4);
  if (version != kMddsVersion)
    throw FormatError(FormatError::Code::bad_version, "MDDS: unsupported version " + std::to_string(version));
  Header h{get_u32(b, 8), get_u32(b, 12), get_u32(b, 16), get_u32(b, 20), get_u32(b, 24), get_u32(b, 28)};
  if (h.kind > 1) throw FormatError(FormatError::Code::bad_header, "MDDS: unknown dtype flag " + std::to_string(h.kind));
  if (h.c == 0 || h.h == 0 || h.w == 0) throw FormatError(FormatError::Code::bad_header, "MDDS: zero image extent");
  return h;
}

void put_metadata(std::vector<std::uint8_t>& out, const std::string& name, const std::vector<std::string>& classes) {
  if (name.empty() && classes.empty()) return;
  std::string meta = name;
  for (const auto& c : classes) meta += "\n" + c;
  put_u32(out, static_cast<std::uint32_t>(meta.size()));
  out.insert(out.end(), meta.begin(), meta.end());
}

// Parses the optional trailing metadata block starting at `at`.
void get_metadata(std::span<const std::uint8_t> b, std::size_t at, std::uint32_t classes, std::string& name,
                  std::vector<std::string>& class_names) {
  if (at == b.size()) return;
  if (b.size() - at < 4) throw FormatError(FormatError::Code::payload_mismatch, "MDDS: payload length mismatch");
  const auto len = get_u32(b, at);
  if (b.size() - at - 4 != len) throw FormatError(FormatError::Code::payload_mismatch, "MDDS: payload length mismatch");
  std::string meta(reinterpret_cast<const char*>(b.data() + at + 4), len);
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (true) {
    const auto nl = meta.find('\n', start);
    lines.push_back(meta.substr(start, nl == std::string::npos ? std::string::npos : nl - start));
    if (nl == std::string::npos) break;
    start = nl + 1;
  }
  name = lines.front();
  class_names.assign(lines.begin() + 1, lines.end());
  if (!class_names.empty() && class_names.size() != classes)
    throw FormatError(FormatError::Code::metadata, "MDDS: metadata lists " + std::to_string(class_names.size()) +
                                                       " class names for " + std::to_string(classes) + " classes");
}

std::size_t payload_bytes(const Header& h, std::size_t pixel_size) {
  return static_cast<std::size_t>(h.n) * h.c * h.h * h.w * pixel_size + static_cast<std::size_t>(h.n) * 2;
}

}  // namespace

std::vector<std::uint8_t> encode_mdds(const Dataset& d) {
  std::vector<std::uint8_t> out;
  put_header(out, {static_cast<std::uint32_t>(d.n), static_cast<std::uint32_t>(d.channels),
                   static_cast<std::uint32_t>(d.height), static_cast<std::uint32_t>(d.width),
                   static_cast<std::uint32_t>(d.num_classes), static_cast<std::uint32_t>(MddsKind::u8)});
  out.insert(out.end(), d.pixels.begin(), d.pixels.end());
  for (auto y : d.labels) put_u16(out, y);
  put_metadata(out, d.name, d.class_names);
  return out;
}

Dataset decode_mdds(std::span<const std::uint8_t> b) {
  const auto h = get_header(b);
  if (h.kind != static_cast<std::uint32_t>(MddsKind::u8))
    throw FormatError(FormatError::Code::bad_header, "MDDS: file holds f32 pixels; load it as a synthetic set");
  const auto need = payload_bytes(h, 1);
  if (b.size() - kHeaderBytes < need) throw FormatError(FormatError::Code::payload_mismatch, "MDDS: payload length mismatch");
  Dataset d;
  d.n = h.n;
  d.channels = static_cast<int>(h.c);
  d.height = static_cast<int>(h.h);
  d.width = static_cast<int>(h.w);
  d.num_classes = static_cast<int>(h.classes);
  const std::size_t npix = static_cast<std::size_t>(d.n * d.sample_size());
  d.pixels.assign(b.begin() + kHeaderBytes, b.begin() + kHeaderBytes + static_cast<std::ptrdiff_t>(npix));
  std::size_t at = kHeaderBytes + npix;
  d.labels.resize(static_cast<std::size_t>(d.n));
  for (auto& y : d.labels) {
    y = get_u16(b, at);
    at += 2;
    if (y >= h.classes)
      throw FormatError(FormatError::Code::label_range, "MDDS: label " + std::to_string(y) + " out of range for " +
                                                            std::to_string(h.classes) + " classes");
  }
  get_metadata(b, at, h.classes, d.name, d.class_names);
  return d;
}

std::vector<std::uint8_t> encode_mdds_f32(const SyntheticDataset& d) {
  d.validate();
  std::vector<std::uint8_t> out;
  const auto& s = d.images.shape();
  put_header(out, {static_cast<std::uint32_t>(s[0]), static_cast<std::uint32_t>(s[1]), static_cast<std::uint32_t>(s[2]),
                   static_cast<std::uint32_t>(s[3]), static_cast<std::uint32_t>(d.num_classes),
                   static_cast<std::uint32_t>(MddsKind::f32)});
  for (double v : d.images.to_vector()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  for (auto y : d.labels) put_u16(out, static_cast<std::uint16_t>(y));
  put_metadata(out, d.name, d.class_names);
  return out;
}

SyntheticDataset decode_mdds_f32(std::span<const std::uint8_t> b) {
  const auto h = get_header(b);
  if (h.kind != static_cast<std::uint32_t>(MddsKind::f32))
    throw FormatError(FormatError::Code::bad_header, "MDDS: expected the f32 variant (dtype flag 1)");
  const auto need = payload_bytes(h, 4);
  if (b.size() - kHeaderBytes < need) throw FormatError(FormatError::Code::payload_mismatch, "MDDS: payload length mismatch");
  const std::size_t count = static_cast<std::size_t>(h.n) * h.c * h.h * h.w;
  std::vector<float> px(count);
  std::size_t at = kHeaderBytes;
  for (auto& v : px) {
    v = std::bit_cast<float>(get_u32(b, at));
    at += 4;
  }
  SyntheticDataset d;
  d.images = Tensor::from({h.n, h.c, h.h, h.w}, std::move(px));
  d.num_classes = static_cast<int>(h.classes);
  d.labels.resize(h.n);
  std::vector<int> per_class(h.classes, 0);
  for (auto& y : d.labels) {
    const auto v = get_u16(b, at);
    at += 2;
    if (v >= h.classes) throw FormatError(FormatError::Code::label_range, "MDDS: label " + std::to_string(v) + " out of range");
    y = v;
    ++per_class[v];
  }
  const bool balanced = h.classes > 0 && std::all_of(per_class.begin(), per_class.end(), [&](int c) { return c == per_class[0]; });
  d.ipc = balanced ? per_class[0] : 0;
  get_metadata(b, at, h.classes, d.name, d.class_names);
  return d;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatError::Code::io, "cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatError::Code::io, "cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

MddsKind peek_mdds_kind(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return static_cast<MddsKind>(get_header(bytes).kind);
}

Dataset load_dataset(const std::filesystem::path& path) {
  auto d = decode_mdds(read_file(path));
  if (d.name.empty()) d.name = path.stem().string();
  return d;
}
void save_dataset(const Dataset& d, const std::filesystem::path& path) { write_file(path, encode_mdds(d)); }
SyntheticDataset load_synthetic(const std::filesystem::path& path) { return decode_mdds_f32(read_file(path)); }
void save_synthetic(const SyntheticDataset& d, const std::filesystem::path& path) { write_file(path, encode_mdds_f32(d)); }

// ---- transforms ----------------------------------------------------------------------

Dataset resize_bilinear(const Dataset& d, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw DataError("resize: invalid output size");
  Dataset out = d;
  out.height = out_h;
  out.width = out_w;
  out.pixels.assign(static_cast<std::size_t>(d.n * d.channels * out_h * out_w), 0);
  // aligned corners: output pixel i samples input position i * (in - 1) / (out - 1)
  const double sy = out_h > 1 ? static_cast<double>(d.height - 1) / (out_h - 1) : 0.0;
  const double sx = out_w > 1 ? static_cast<double>(d.width - 1) / (out_w - 1) : 0.0;
  for (std::int64_t p = 0; p < d.n * d.channels; ++p) {
    const std::uint8_t* src = d.pixels.data() + p * d.height * d.width;
    std::uint8_t* dst = out.pixels.data() + p * out_h * out_w;
    for (int i = 0; i < out_h; ++i) {
      const double y = i * sy;
      const int y0 = std::min(static_cast<int>(y), d.height - 1);
      const int y1 = std::min(y0 + 1, d.height - 1);
      const double fy = y - y0;
      for (int j = 0; j < out_w; ++j) {
        const double x = j * sx;
        const int x0 = std::min(static_cast<int>(x), d.width - 1);
        const int x1 = std::min(x0 + 1, d.width - 1);
        const double fx = x - x0;
        const double v = (1 - fy) * ((1 - fx) * src[y0 * d.width + x0] + fx * src[y0 * d.width + x1]) +
                         fy * ((1 - fx) * src[y1 * d.width + x0] + fx * src[y1 * d.width + x1]);
        dst[i * out_w + j] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
  return out;
}

Dataset resize_to_32(const Dataset& d) {
  if (d.height != 28 || d.width != 28)
    throw DataError("resize: expected 28x28 input, got " + std::to_string(d.height) + "x" + std::to_string(d.width));
  return resize_bilinear(d, 32, 32);
}

namespace {
template <typename L>
std::map<int, std::vector<std::int64_t>> group(std::span<const L> labels) {
  std::map<int, std::vector<std::int64_t>> out;
  for (std::size_t i = 0; i < labels.size(); ++i) out[static_cast<int>(labels[i])].push_back(static_cast<std::int64_t>(i));
  return out;
}
}  // namespace

std::map<int, std::vector<std::int64_t>> per_class_indices(std::span<const std::uint16_t> labels) { return group(labels); }
std::map<int, std::vector<std::int64_t>> per_class_indices(std::span<const std::int32_t> labels) { return group(labels); }

Dataset build_integrated_dataset(const std::vector<Dataset>& sources, double fraction, std::uint64_t seed) {
  if (sources.size() < 2) throw DataError("integrated dataset: need at least two sources");
  if (!(fraction > 0.0 && fraction <= 1.0)) throw DataError("integrated dataset: fraction must be in (0, 1]");
  int channels = 1;
  for (const auto& s : sources) {
    channels = std::max(channels, s.channels);
    if (s.height != sources[0].height || s.width != sources[0].width)
      throw DataError("integrated dataset: source '" + s.name + "' has size " + std::to_string(s.height) + "x" +
                      std::to_string(s.width) + ", expected " + std::to_string(sources[0].height) + "x" +
                      std::to_string(sources[0].width));
  }
  for (const auto& s : sources)
    if (s.channels != 1 && s.channels != channels)
      throw DataError("integrated dataset: source '" + s.name + "' has " + std::to_string(s.channels) +
                      " channels; cannot combine with " + std::to_string(channels));

  Dataset out;
  out.channels = channels;
  out.height = sources[0].height;
  out.width = sources[0].width;
  out.num_classes = static_cast<int>(sources.size());
  out.name = "integrated";
  const std::int64_t plane = static_cast<std::int64_t>(out.height) * out.width;
  for (std::size_t k = 0; k < sources.size(); ++k) {
    const auto& s = sources[k];
    out.class_names.push_back(s.name.empty() ? "source" + std::to_string(k) : s.name);
    const auto take = static_cast<std::int64_t>(std::ceil(fraction * static_cast<double>(s.n) - 1e-9));
    Rng rng(derive_seed(seed, "integrate", k));
    auto picked = sample_without_replacement(s.n, take, rng);
    std::sort(picked.begin(), picked.end());
    for (auto i : picked) {
      const std::uint8_t* px = s.pixels.data() + i * s.sample_size();
      if (s.channels == channels) {
        out.pixels.insert(out.pixels.end(), px, px + s.sample_size());
      } else {
        for (int c = 0; c < channels; ++c) out.pixels.insert(out.pixels.end(), px, px + plane);
      }
      out.labels.push_back(static_cast<std::uint16_t>(k));
      ++out.n;
    }
  }
  return out;
}

Tensor to_float(const Dataset& d, DType dtype) {
  std::vector<double> v(d.pixels.size());
  std::transform(d.pixels.begin(), d.pixels.end(), v.begin(), [](std::uint8_t p) { return p / 255.0; });
  return Tensor::from_values({d.n, d.channels, d.height, d.width}, v, dtype);
}

// ---- ZCA -------------------------------------------------------------------------------

ZcaTransform zca_fit(const Tensor& images, double epsilon) {
  if (!(epsilon > 0)) throw DataError("zca: epsilon must be positive");
  if (images.rank() < 2 || images.dim(0) < 1) throw DataError("zca: need at least one sample");
  const std::int64_t n = images.dim(0);
  const std::int64_t d = images.numel() / n;
  const auto v = images.to_vector();
  for (double x : v)
    if (!std::isfinite(x)) throw DataError("zca: non-finite input value");
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> x(v.data(), n, d);
  const Eigen::VectorXd mu = x.colwise().mean().transpose();
  const Eigen::MatrixXd centered = x.rowwise() - mu.transpose();
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw DataError("zca: eigendecomposition failed");
  const Eigen::VectorXd scale = (eig.eigenvalues().array().max(0.0) + epsilon).rsqrt();
  Eigen::MatrixXd w = eig.eigenvectors() * scale.asDiagonal() * eig.eigenvectors().transpose();
  w = 0.5 * (w + w.transpose());
  ZcaTransform t;
  t.dim = d;
  t.epsilon = epsilon;
  t.mean.resize(static_cast<std::size_t>(d));
  t.matrix.resize(static_cast<std::size_t>(d * d));
  for (std::int64_t i = 0; i < d; ++i) {
    t.mean[i] = static_cast<float>(mu[i]);
    for (std::int64_t j = 0; j < d; ++j) t.matrix[i * d + j] = static_cast<float>(w(i, j));
  }
  return t;
}

Tensor zca_apply(const ZcaTransform& t, const Tensor& images) {
  if (images.rank() < 1 || images.numel() != images.dim(0) * t.dim)
    throw ShapeError("zca_apply: images " + shape_str(images.shape()) + " do not have " + std::to_string(t.dim) +
                     " features");
  const std::int64_t n = images.dim(0), d = t.dim;
  const auto v = images.to_vector();
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> x(v.data(), n, d);
  Eigen::MatrixXd w(d, d);
  Eigen::VectorXd mu(d);
  for (std::int64_t i = 0; i < d; ++i) {
    mu[i] = t.mean[i];
    for (std::int64_t j = 0; j < d; ++j) w(i, j) = t.matrix[i * d + j];
  }
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> y = (x.rowwise() - mu.transpose()) * w;
  return Tensor::from_values(images.shape(), std::span<const double>(y.data(), static_cast<std::size_t>(y.size())),
                             images.dtype());
}

std::string_view normalization_name(Normalization n) {
  switch (n) {
    case Normalization::none: return "none";
    case Normalization::standardize: return "standardize";
    case Normalization::zca: return "zca";
  }
  return "?";
}

Normalization parse_normalization(std::string_view s) {
  if (s == "none") return Normalization::none;
  if (s == "standardize") return Normalization::standardize;
  if (s == "zca") return Normalization::zca;
  throw Error("unknown normalization '" + std::string(s) + "' (expected none, standardize or zca)");
}

Dataset Preprocessor::prepare(const Dataset& d) const {
  if (cfg_.resize && d.height == 28 && d.width == 28) return resize_to_32(d);
  return d;
}

Preprocessor Preprocessor::fit(const Dataset& train, const PreprocessConfig& cfg) {
  Preprocessor p;
  p.cfg_ = cfg;
  const Dataset prepared = p.prepare(train);
  if (cfg.normalization == Normalization::zca) {
    p.zca_ = zca_fit(to_float(prepared, DType::f64), cfg.zca_epsilon);
  } else if (cfg.normalization == Normalization::standardize) {
    const auto plane = static_cast<std::int64_t>(prepared.height) * prepared.width;
    for (int c = 0; c < prepared.channels; ++c) {
      double s = 0, ss = 0;
      std::int64_t cnt = 0;
      for (std::int64_t i = 0; i < prepared.n; ++i) {
        const auto* px = prepared.pixels.data() + i * prepared.sample_size() + c * plane;
        for (std::int64_t k = 0; k < plane; ++k) {
          const double v = px[k] / 255.0;
          s += v;
          ss += v * v;
          ++cnt;
        }
      }
      const double m = s / static_cast<double>(cnt);
      p.channel_mean_.push_back(m);
      p.channel_std_.push_back(std::sqrt(std::max(ss / static_cast<double>(cnt) - m * m, 1e-12)));
    }
  }
  return p;
}

TensorSet Preprocessor::apply(const Dataset& d) const {
  const Dataset prepared = prepare(d);
  TensorSet out;
  out.num_classes = prepared.num_classes;
  out.labels.assign(prepared.labels.begin(), prepared.labels.end());
  Tensor x = to_float(prepared, DType::f64);
  if (zca_) {
    x = zca_apply(*zca_, x);
  } else if (!channel_mean_.empty()) {
    if (static_cast<int>(channel_mean_.size()) != prepared.channels) throw DataError("preprocess: channel count changed");
    auto v = x.to_vector();
    const auto plane = static_cast<std::int64_t>(prepared.height) * prepared.width;
    for (std::int64_t i = 0; i < prepared.n; ++i)
      for (int c = 0; c < prepared.channels; ++c)
        for (std::int64_t k = 0; k < plane; ++k) {
          auto& p = v[static_cast<std::size_t>((i * prepared.channels + c) * plane + k)];
          p = (p - channel_mean_[c]) / channel_std_[c];
        }
    x = Tensor::from_values(x.shape(), v, DType::f64);
  }
  out.images = x.astype(cfg_.dtype);
  return out;
}

}  // namespace condensor
