#include "condensor/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "condensor/rng.hpp"

namespace condensor {

namespace {

std::uint8_t grey(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

std::vector<double> blurred_template(int channels, int size, int radius, Rng& rng) {
  std::normal_distribution<double> g;
  const int plane = size * size;
  std::vector<double> raw(static_cast<std::size_t>(channels * plane));
  for (auto& v : raw) v = g(rng);
  std::vector<double> out(raw.size(), 0.0);
  for (int c = 0; c < channels; ++c)
    for (int i = 0; i < size; ++i)
      for (int j = 0; j < size; ++j) {
        double acc = 0;
        for (int di = -radius; di <= radius; ++di)
          for (int dj = -radius; dj <= radius; ++dj) {
            const int y = (i + di + size) % size, x = (j + dj + size) % size;
            acc += raw[static_cast<std::size_t>(c * plane + y * size + x)];
          }
        out[static_cast<std::size_t>(c * plane + i * size + j)] = acc;
      }
  double m = 0, s = 0;
  for (double v : out) m += v / static_cast<double>(out.size());
  for (double v : out) s += (v - m) * (v - m) / static_cast<double>(out.size());
  for (auto& v : out) v = (v - m) / std::sqrt(s);
  return out;
}

Dataset draw(const std::vector<std::vector<double>>& templates, const TextureSpec& spec, std::int64_t n, Rng& rng,
             const std::string& name) {
  Dataset d;
  d.n = n;
  d.channels = spec.channels;
  d.height = d.width = spec.size;
  d.num_classes = spec.num_classes;
  d.name = name;
  std::normal_distribution<double> g;
  for (std::int64_t i = 0; i < n; ++i) {
    const int c = static_cast<int>(i % spec.num_classes);
    d.labels.push_back(static_cast<std::uint16_t>(c));
    for (double t : templates[static_cast<std::size_t>(c)]) d.pixels.push_back(grey(128.0 + spec.signal * t + spec.noise * g(rng)));
  }
  return d;
}

}  // namespace

std::pair<Dataset, Dataset> make_texture_dataset(const TextureSpec& spec) {
  if (spec.num_classes < 2 || spec.size < 1 || spec.channels < 1 || spec.train < spec.num_classes ||
      spec.test < 1 || spec.smooth < 0)
    throw DataError("texture dataset: invalid spec");
  Rng trng(derive_seed(spec.seed, "texture.templates"));
  std::vector<std::vector<double>> templates;
  for (int c = 0; c < spec.num_classes; ++c) templates.push_back(blurred_template(spec.channels, spec.size, spec.smooth, trng));
  Rng rng_train(derive_seed(spec.seed, "texture.train")), rng_test(derive_seed(spec.seed, "texture.test"));
  auto train = draw(templates, spec, spec.train, rng_train, "texture");
  auto test = draw(templates, spec, spec.test, rng_test, "texture");
  for (int c = 0; c < spec.num_classes; ++c) {
    train.class_names.push_back("class" + std::to_string(c));
    test.class_names.push_back("class" + std::to_string(c));
  }
  return {std::move(train), std::move(test)};
}

std::pair<Dataset, Dataset> make_two_gaussians(int side, std::int64_t train, std::int64_t test, double mu, double noise,
                                               std::uint64_t seed) {
  if (side < 1 || train < 2 || test < 1) throw DataError("two-gaussian dataset: invalid spec");
  Rng rng(derive_seed(seed, "gauss2"));
  std::normal_distribution<double> g;
  auto make = [&](std::int64_t n) {
    Dataset d;
    d.n = n;
    d.height = d.width = side;
    d.num_classes = 2;
    d.name = "gauss2";
    for (std::int64_t i = 0; i < n; ++i) {
      const int c = static_cast<int>(i % 2);
      d.labels.push_back(static_cast<std::uint16_t>(c));
      // pixel k encodes coordinate k % 2 of the point; the class mean is (+mu, +mu) or (-mu, -mu)
      const double px = (c == 0 ? mu : -mu) + noise * g(rng), py = (c == 0 ? mu : -mu) + noise * g(rng);
      for (int k = 0; k < side * side; ++k) d.pixels.push_back(grey(128.0 + (k % 2 == 0 ? px : py)));
    }
    return d;
  };
  auto tr = make(train);
  auto te = make(test);
  return {std::move(tr), std::move(te)};
}

}  // namespace condensor
