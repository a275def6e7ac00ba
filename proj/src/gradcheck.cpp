#include "condensor/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace condensor {

Tensor finite_difference_grad(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h) {
  if (!(h > 0)) throw Error("finite_difference_grad: step must be positive");
  NoRecordGuard no_record;
  auto base = x.to_vector();
  std::vector<double> grad(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) {
    auto probe = base;
    probe[i] = base[i] + h;
    const double up = f(Tensor::from_values(x.shape(), probe, x.dtype())).item();
    probe[i] = base[i] - h;
    const double down = f(Tensor::from_values(x.shape(), probe, x.dtype())).item();
    grad[i] = (up - down) / (2.0 * h);
  }
  return Tensor::from_values(x.shape(), grad, x.dtype());
}

double max_relative_error(const Tensor& analytic, const Tensor& numeric, double floor_frac) {
  const auto a = analytic.to_vector();
  const auto b = numeric.to_vector();
  if (a.size() != b.size()) throw ShapeError("max_relative_error: size mismatch");
  double scale = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) scale = std::max({scale, std::abs(a[i]), std::abs(b[i])});
  if (scale == 0.0) return 0.0;
  const double floor = floor_frac * scale;
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

}  // namespace condensor
