#include <cmath>
#include <filesystem>

#include "../support/helpers.hpp"
#include "condensor/dataset.hpp"
#include "doctest.h"

using namespace condensor;

namespace {
Dataset small(int n = 6, int classes = 3, int c = 1, int hw = 4) {
  Dataset d;
  d.n = n;
  d.channels = c;
  d.height = d.width = hw;
  d.num_classes = classes;
  for (std::int64_t i = 0; i < n * d.sample_size(); ++i) d.pixels.push_back(static_cast<std::uint8_t>((i * 37) % 256));
  for (int i = 0; i < n; ++i) d.labels.push_back(static_cast<std::uint16_t>(i % classes));
  return d;
}
}  // namespace

TEST_CASE("MDDS round trip") {
  auto d = small();
  auto back = decode_mdds(encode_mdds(d));
  CHECK(back.pixels == d.pixels);
  CHECK(back.labels == d.labels);
  CHECK(back.num_classes == 3);
  CHECK(encode_mdds(d).size() == 32 + d.pixels.size() + 2 * 6);

  d.name = "toy";
  d.class_names = {"a", "b", "c"};
  auto bytes = encode_mdds(d);
  back = decode_mdds(bytes);
  CHECK(back.name == "toy");
  CHECK(back.class_names == d.class_names);
  CHECK(encode_mdds(back) == bytes);
}

TEST_CASE("MDDS rejects malformed input") {
  auto bytes = encode_mdds(small());
  auto code = [](std::vector<std::uint8_t> b) {
    try {
      decode_mdds(b);
    } catch (const FormatError& e) {
      return e.code();
    }
    return FormatError::Code::io;
  };
  auto b = bytes;
  b[0] = 'X';
  CHECK(code(b) == FormatError::Code::bad_magic);
  b = bytes;
  b[4] = 2;
  CHECK(code(b) == FormatError::Code::bad_version);
  CHECK(code({bytes.begin(), bytes.begin() + 20}) == FormatError::Code::truncated);
  b = bytes;
  b.pop_back();
  CHECK(code(b) == FormatError::Code::payload_mismatch);
  b = bytes;
  b.push_back(0);
  CHECK(code(b) == FormatError::Code::payload_mismatch);
  b = bytes;
  b[b.size() - 2] = 9;  // last label
  CHECK(code(b) == FormatError::Code::label_range);
  CHECK_THROWS_WITH_AS(decode_mdds(std::vector<std::uint8_t>(bytes.begin(), bytes.end() - 1)),
                       doctest::Contains("payload length mismatch"), FormatError);
}

TEST_CASE("MDDS f32 synthetic round trip") {
  SyntheticDataset s;
  s.images = Tensor::from({4, 1, 2, 2}, std::vector<float>{0.5f, -1.25f, 3.f, 0.f, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12});
  s.labels = balanced_labels(2, 2);
  s.num_classes = 2;
  s.ipc = 2;
  auto back = decode_mdds_f32(encode_mdds_f32(s));
  CHECK(back.images.to_vector() == s.images.to_vector());
  CHECK(back.labels == s.labels);
  CHECK(back.ipc == 2);
  CHECK_THROWS_AS(decode_mdds(encode_mdds_f32(s)), FormatError);

  auto dir = std::filesystem::temp_directory_path() / "condensor_mdds_test";
  save_synthetic(s, dir / "s.mdds");
  CHECK(peek_mdds_kind(dir / "s.mdds") == MddsKind::f32);
  save_dataset(small(), dir / "d.mdds");
  CHECK(load_dataset(dir / "d.mdds").name == "d");
  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS(load_dataset(dir / "missing.mdds"), FormatError);
}

TEST_CASE("validate catches inconsistent datasets") {
  auto d = small();
  CHECK_NOTHROW(d.validate());
  d.labels[0] = 3;
  CHECK_THROWS_AS(d.validate(), DataError);
  d = small(6, 4);
  d.labels = {0, 1, 2, 0, 1, 2};
  CHECK_THROWS_WITH_AS(d.validate(), doctest::Contains("class 3 has no samples"), DataError);
}

TEST_CASE("bilinear resize with aligned corners") {
  Dataset d;
  d.n = 1;
  d.height = d.width = 2;
  d.num_classes = 1;
  d.pixels = {0, 90, 180, 255};
  d.labels = {0};
  auto r = resize_bilinear(d, 3, 3);
  // corners preserved, centre is the mean of the four corners
  CHECK(r.pixels == std::vector<std::uint8_t>{0, 45, 90, 90, 131, 173, 180, 218, 255});
  CHECK_THROWS_AS(resize_to_32(d), DataError);
  auto big = small(1, 1, 1, 28);
  CHECK(resize_to_32(big).height == 32);
}

TEST_CASE("per-class indices") {
  std::vector<std::int32_t> y{2, 0, 2, 1, 0};
  auto m = per_class_indices(std::span<const std::int32_t>(y));
  CHECK(m[0] == std::vector<std::int64_t>{1, 4});
  CHECK(m[2] == std::vector<std::int64_t>{0, 2});
}

TEST_CASE("integrated dataset") {
  auto a = small(10, 2, 1, 4);
  a.name = "gray";
  auto b = small(7, 3, 3, 4);
  b.name = "rgb";
  auto mix = build_integrated_dataset({a, b}, 0.5, 3);
  CHECK(mix.channels == 3);
  CHECK(mix.n == 5 + 4);
  CHECK(mix.num_classes == 2);
  CHECK(mix.class_names == std::vector<std::string>{"gray", "rgb"});
  CHECK_NOTHROW(mix.validate());
  // grayscale rows are replicated across channels
  for (int k = 0; k < 16; ++k) {
    CHECK(mix.pixels[k] == mix.pixels[16 + k]);
    CHECK(mix.pixels[k] == mix.pixels[32 + k]);
  }
  CHECK(build_integrated_dataset({a, b}, 0.5, 3).pixels == mix.pixels);
  CHECK_THROWS_AS(build_integrated_dataset({a}, 0.5, 3), DataError);
  CHECK_THROWS_AS(build_integrated_dataset({a, small(4, 2, 1, 8)}, 0.5, 3), DataError);
}

TEST_CASE("ZCA whitens the training covariance") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g;
  const int n = 400, d = 4;
  std::vector<double> v(n * d);
  for (int i = 0; i < n; ++i) {
    double z0 = g(rng), z1 = g(rng), z2 = g(rng), z3 = g(rng);
    v[i * d + 0] = 2 * z0 + 1;
    v[i * d + 1] = z0 + 0.5 * z1;
    v[i * d + 2] = 0.3 * z2 - 2;
    v[i * d + 3] = z3 + z1;
  }
  auto x = Tensor::from_values({n, 1, 2, 2}, v, DType::f64);
  auto t = zca_fit(x, 1e-8);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) CHECK(t.matrix[i * d + j] == doctest::Approx(t.matrix[j * d + i]));
  auto y = zca_apply(t, x).to_vector();
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b) {
      double ma = 0, mb = 0, c = 0;
      for (int i = 0; i < n; ++i) ma += y[i * d + a] / n, mb += y[i * d + b] / n;
      for (int i = 0; i < n; ++i) c += (y[i * d + a] - ma) * (y[i * d + b] - mb) / n;
      CHECK(c == doctest::Approx(a == b ? 1.0 : 0.0).epsilon(1e-4).scale(1.0));
    }
  CHECK_THROWS_AS(zca_apply(t, Tensor::zeros({2, 5}, DType::f64)), ShapeError);
}

TEST_CASE("preprocessor reuses training statistics") {
  auto train = small(12, 3, 1, 28);
  auto test_split = small(6, 3, 1, 28);
  PreprocessConfig cfg;
  cfg.normalization = Normalization::standardize;
  auto p = Preprocessor::fit(train, cfg);
  auto ts = p.apply(train);
  CHECK(ts.images.shape() == Shape{12, 1, 32, 32});
  CHECK(ts.images.dtype() == DType::f32);
  auto v = ts.images.to_vector();
  double m = 0;
  for (double x : v) m += x / static_cast<double>(v.size());
  CHECK(m == doctest::Approx(0.0).scale(1.0).epsilon(1e-5));
  CHECK(p.apply(test_split).labels.size() == 6);
  CHECK(parse_normalization("zca") == Normalization::zca);
  CHECK_THROWS_AS(parse_normalization("pca"), Error);
}
