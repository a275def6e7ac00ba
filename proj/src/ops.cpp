#include "condensor/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace condensor {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
Tensor make(Shape shape, std::vector<T> v) {
  return Tensor(std::move(shape), Tensor::Buffer(std::move(v)));
}

void check_dtype(std::string_view op, const Tensor& a, const Tensor& b) {
  if (a.dtype() != b.dtype())
    throw DTypeError(std::string(op) + ": dtype mix " + std::string(dtype_name(a.dtype())) + " vs " +
                     std::string(dtype_name(b.dtype())));
}

void check_same_shape(std::string_view op, const Tensor& a, const Tensor& b) {
  check_dtype(op, a, b);
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

void check_defined(std::string_view op, const Tensor& t) {
  if (!t.defined()) throw ShapeError(std::string(op) + ": undefined input");
}

template <typename F>
Tensor map1(const Tensor& x, F f) {
  return dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto in = x.data<T>();
    std::vector<T> out(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
    return make<T>(x.shape(), std::move(out));
  });
}

template <typename F>
Tensor map2(const Tensor& a, const Tensor& b, F f) {
  return dispatch(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto x = a.data<T>();
    auto y = b.data<T>();
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i], y[i]);
    return make<T>(a.shape(), std::move(out));
  });
}

Tensor ones_shape_of_rank(const Tensor& g, std::size_t rank) {
  return reshape(g, Shape(rank, 1));
}

// Strides of `small` (left-padded to big's rank) with 0 on broadcast axes.
std::vector<std::int64_t> broadcast_strides(const Shape& small, const Shape& big) {
  const std::size_t r = big.size();
  std::vector<std::int64_t> strides(r, 0);
  std::int64_t s = 1;
  for (std::size_t k = 0; k < small.size(); ++k) {
    const std::size_t i_small = small.size() - 1 - k;
    const std::size_t i_big = r - 1 - k;
    if (small[i_small] != 1) strides[i_big] = s;
    s *= small[i_small];
  }
  return strides;
}

// fn(big_offset, small_offset) for every element of `big`.
template <typename Fn>
void for_each_broadcast(const Shape& small, const Shape& big, Fn fn) {
  const std::int64_t total = numel(big);
  if (total == 0) return;
  const std::size_t r = big.size();
  if (r == 0) {
    fn(0, 0);
    return;
  }
  const auto strides = broadcast_strides(small, big);
  const std::int64_t inner = big[r - 1];
  const std::int64_t inner_stride = strides[r - 1];
  std::vector<std::int64_t> counter(r, 0);
  std::int64_t small_off = 0;
  for (std::int64_t outer = 0; outer < total; outer += inner) {
    for (std::int64_t j = 0; j < inner; ++j) fn(outer + j, small_off + j * inner_stride);
    // advance counters over axes [0, r-1)
    for (std::size_t ax = r - 1; ax-- > 0;) {
      ++counter[ax];
      small_off += strides[ax];
      if (counter[ax] < big[ax]) break;
      small_off -= strides[ax] * counter[ax];
      counter[ax] = 0;
    }
  }
}

void check_broadcastable(std::string_view op, const Shape& small, const Shape& big) {
  bool ok = small.size() <= big.size();
  for (std::size_t k = 0; ok && k < small.size(); ++k) {
    const auto s = small[small.size() - 1 - k];
    const auto b = big[big.size() - 1 - k];
    ok = (s == b || s == 1);
  }
  if (!ok) throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(small) + " to " + shape_str(big));
}

// ---- same-shape binary primitives ------------------------------------------

Tensor add_same(const Tensor& a, const Tensor& b) {
  check_same_shape("add", a, b);
  auto out = map2(a, b, [](auto x, auto y) { return x + y; });
  return detail::finish("add", {a, b}, out, [](const Tensor& g, const Tensor&, const std::vector<bool>&) {
    return std::vector<Tensor>{g, g};
  });
}

Tensor sub_same(const Tensor& a, const Tensor& b) {
  check_same_shape("sub", a, b);
  auto out = map2(a, b, [](auto x, auto y) { return x - y; });
  return detail::finish("sub", {a, b}, out, [](const Tensor& g, const Tensor&, const std::vector<bool>& need) {
    return std::vector<Tensor>{g, need[1] ? neg(g) : Tensor()};
  });
}

Tensor mul_same(const Tensor& a, const Tensor& b) {
  check_same_shape("mul", a, b);
  auto out = map2(a, b, [](auto x, auto y) { return x * y; });
  return detail::finish("mul", {a, b}, out, [a, b](const Tensor& g, const Tensor&, const std::vector<bool>& need) {
    return std::vector<Tensor>{need[0] ? mul(g, b) : Tensor(), need[1] ? mul(g, a) : Tensor()};
  });
}

Tensor div_same(const Tensor& a, const Tensor& b) {
  check_same_shape("div", a, b);
  auto out = map2(a, b, [](auto x, auto y) { return x / y; });
  return detail::finish("div", {a, b}, out, [b](const Tensor& g, const Tensor& y, const std::vector<bool>& need) {
    return std::vector<Tensor>{need[0] ? div(g, b) : Tensor(), need[1] ? neg(div(mul(g, y), b)) : Tensor()};
  });
}

template <typename Same>
Tensor broadcast_binary(std::string_view op, const Tensor& a, const Tensor& b, Same same) {
  check_defined(op, a);
  check_defined(op, b);
  check_dtype(op, a, b);
  if (a.shape() == b.shape()) return same(a, b);
  const Shape s = broadcast_shape(a.shape(), b.shape());
  return same(a.shape() == s ? a : expand(a, s), b.shape() == s ? b : expand(b, s));
}

// ---- convolution kernels ----------------------------------------------------

template <typename T>
void im2col(const T* x, std::int64_t C, std::int64_t H, std::int64_t W, std::int64_t k, T* cols) {
  const std::int64_t p = k / 2, hw = H * W;
  for (std::int64_t c = 0; c < C; ++c)
    for (std::int64_t a = 0; a < k; ++a)
      for (std::int64_t b = 0; b < k; ++b) {
        T* row = cols + ((c * k + a) * k + b) * hw;
        const T* plane = x + c * hw;
        for (std::int64_t i = 0; i < H; ++i) {
          const std::int64_t si = i + a - p;
          T* dst = row + i * W;
          if (si < 0 || si >= H) {
            std::fill(dst, dst + W, T(0));
            continue;
          }
          for (std::int64_t j = 0; j < W; ++j) {
            const std::int64_t sj = j + b - p;
            dst[j] = (sj >= 0 && sj < W) ? plane[si * W + sj] : T(0);
          }
        }
      }
}

template <typename T>
void col2im(const T* cols, std::int64_t C, std::int64_t H, std::int64_t W, std::int64_t k, T* x) {
  const std::int64_t p = k / 2, hw = H * W;
  for (std::int64_t c = 0; c < C; ++c)
    for (std::int64_t a = 0; a < k; ++a)
      for (std::int64_t b = 0; b < k; ++b) {
        const T* row = cols + ((c * k + a) * k + b) * hw;
        T* plane = x + c * hw;
        for (std::int64_t i = 0; i < H; ++i) {
          const std::int64_t si = i + a - p;
          if (si < 0 || si >= H) continue;
          for (std::int64_t j = 0; j < W; ++j) {
            const std::int64_t sj = j + b - p;
            if (sj >= 0 && sj < W) plane[si * W + sj] += row[i * W + j];
          }
        }
      }
}

void check_conv_weight(std::string_view op, const Tensor& w) {
  if (w.rank() != 4 || w.dim(2) != w.dim(3) || w.dim(2) % 2 == 0)
    throw ShapeError(std::string(op) + ": weight must be [O,C,k,k] with odd k, got " + shape_str(w.shape()));
}

Tensor conv2d_raw(const Tensor& x, const Tensor& w) {
  const auto N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const auto O = w.dim(0), k = w.dim(2);
  return dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const auto xs = x.data<T>();
    const auto ws = w.data<T>();
    const std::int64_t hw = H * W, ckk = C * k * k;
    std::vector<T> out(static_cast<std::size_t>(N * O * hw));
    std::vector<T> cols(static_cast<std::size_t>(ckk * hw));
    Eigen::Map<const RowMat<T>> wm(ws.data(), O, ckk);
    Eigen::Map<const RowMat<T>> cm(cols.data(), ckk, hw);
    for (std::int64_t n = 0; n < N; ++n) {
      im2col(xs.data() + n * C * hw, C, H, W, k, cols.data());
      Eigen::Map<RowMat<T>> ym(out.data() + n * O * hw, O, hw);
      ym.noalias() = wm * cm;
    }
    return make<T>({N, O, H, W}, std::move(out));
  });
}

Tensor conv2d_input_grad_raw(const Tensor& g, const Tensor& w) {
  const auto N = g.dim(0), H = g.dim(2), W = g.dim(3);
  const auto O = w.dim(0), C = w.dim(1), k = w.dim(2);
  return dispatch(g.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const auto gs = g.data<T>();
    const auto ws = w.data<T>();
    const std::int64_t hw = H * W, ckk = C * k * k;
    std::vector<T> out(static_cast<std::size_t>(N * C * hw), T(0));
    std::vector<T> cols(static_cast<std::size_t>(ckk * hw));
    Eigen::Map<const RowMat<T>> wm(ws.data(), O, ckk);
    Eigen::Map<RowMat<T>> cm(cols.data(), ckk, hw);
    for (std::int64_t n = 0; n < N; ++n) {
      Eigen::Map<const RowMat<T>> gm(gs.data() + n * O * hw, O, hw);
      cm.noalias() = wm.transpose() * gm;
      col2im(cols.data(), C, H, W, k, out.data() + n * C * hw);
    }
    return make<T>({N, C, H, W}, std::move(out));
  });
}

Tensor conv2d_weight_grad_raw(const Tensor& x, const Tensor& g, std::int64_t k) {
  const auto N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const auto O = g.dim(1);
  return dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const auto xs = x.data<T>();
    const auto gs = g.data<T>();
    const std::int64_t hw = H * W, ckk = C * k * k;
    std::vector<T> out(static_cast<std::size_t>(O * ckk), T(0));
    std::vector<T> cols(static_cast<std::size_t>(ckk * hw));
    Eigen::Map<RowMat<T>> om(out.data(), O, ckk);
    Eigen::Map<const RowMat<T>> cm(cols.data(), ckk, hw);
    for (std::int64_t n = 0; n < N; ++n) {
      im2col(xs.data() + n * C * hw, C, H, W, k, cols.data());
      Eigen::Map<const RowMat<T>> gm(gs.data() + n * O * hw, O, hw);
      om.noalias() += gm * cm.transpose();
    }
    return make<T>({O, C, k, k}, std::move(out));
  });
}

void check_nchw(std::string_view op, const Tensor& t) {
  if (t.rank() != 4) throw ShapeError(std::string(op) + ": expected [N,C,H,W], got " + shape_str(t.shape()));
}

}  // namespace

// ---------------------------------------------------------------------------

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r);
  for (std::size_t k = 0; k < r; ++k) {
    const std::int64_t da = k < a.size() ? a[a.size() - 1 - k] : 1;
    const std::int64_t db = k < b.size() ? b[b.size() - 1 - k] : 1;
    if (da != db && da != 1 && db != 1)
      throw ShapeError("broadcast: incompatible shapes " + shape_str(a) + " and " + shape_str(b));
    out[r - 1 - k] = std::max(da, db);
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) { return broadcast_binary("add", a, b, add_same); }
Tensor sub(const Tensor& a, const Tensor& b) { return broadcast_binary("sub", a, b, sub_same); }
Tensor mul(const Tensor& a, const Tensor& b) { return broadcast_binary("mul", a, b, mul_same); }
Tensor div(const Tensor& a, const Tensor& b) { return broadcast_binary("div", a, b, div_same); }

Tensor scale(const Tensor& x, double c) {
  check_defined("scalar_mul", x);
  auto out = dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T cc = static_cast<T>(c);
    return map1(x, [cc](T v) { return v * cc; });
  });
  return detail::finish("scalar_mul", {x}, out, [c](const Tensor& g, const Tensor&, const std::vector<bool>&) {
    return std::vector<Tensor>{scale(g, c)};
  });
}

Tensor add_scalar(const Tensor& x, double c) {
  check_defined("add_scalar", x);
  auto out = dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T cc = static_cast<T>(c);
    return map1(x, [cc](T v) { return v + cc; });
  });
  return detail::finish("add_scalar", {x}, out, [](const Tensor& g, const Tensor&, const std::vector<bool>&) {
    return std::vector<Tensor>{g};
  });
}

Tensor neg(const Tensor& x) { return scale(x, -1.0); }

Tensor relu(const Tensor& x) {
  check_defined("relu", x);
  auto out = map1(x, [](auto v) { return v > 0 ? v : decltype(v)(0); });
  return detail::finish("relu", {x}, out, [x](const Tensor& g, const Tensor&, const std::vector<bool>&) {
    // the mask is piecewise constant, so it enters as a constant
    auto mask = map1(x.detach(), [](auto v) { return v > 0 ? decltype(v)(1) : decltype(v)(0); });
    return std::vector<Tensor>{mul(g, mask)};
  });
}

Tensor square(const Tensor& x) {
  check_defined("square", x);
  auto out = map1(x, [](auto v) { return v * v; });
  return detail::finish("square", {x}, out, [x](const Tensor& g, const Tensor&, const std::vector<bool>&) {
    return std::vector<Tensor>{mul(g, scale(x, 2.0))};
  });
}

Tensor sqrt(const Tensor& x) {
  check_defined("sqrt", x);
  auto out = map1(x, [](auto v) { return std::sqrt(v); });
  return detail::finish("sqrt", {x}, out, [](const Tensor& g, const Tensor& y, const std::vector<bool>&) {
    return std::vector<Tensor>{div(g, scale(y, 2.0))};
  });
}

Tensor exp(const Tensor& x) {
  check_defined("exp", x);
  auto out = map1(x, [](auto v) { return std::exp(v); });
  return detail::finish("exp", {x}, out, [](const Tensor& g, const Tensor& y, const std::vector<bool>&) {
    return std::vector<Tensor>{mul(g, y)};
  });
}

Tensor log(const Tensor& x) {
  check_defined("log", x);
  auto out = map1(x, [](auto v) { return std::log(v); });
  return detail::finish("log", {x}, out, [x](const Tensor& g, const Tensor&, const std::vector<bool>&) {
    return std::vector<Tensor>{div(g, x)};
  });
}

// ---- shape ops ---------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape) {
  check_defined("reshape", x);
  if (numel(shape) != x.numel())
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  Tensor out = x.share_as(shape);
  const Shape original = x.shape();
  return detail::finish("reshape", {x}, out, [original](const Tensor& g, const Tensor&, const std::vector<bool>&) {
    return std::vector<Tensor>{reshape(g, original)};
  });
}

Tensor flatten(const Tensor& x) {
  if (x.rank() < 1) throw ShapeError("flatten: rank-0 input");
  return reshape(x, {x.dim(0), x.numel() / std::max<std::int64_t>(x.dim(0), 1)});
}

Tensor expand(const Tensor& x, const Shape& shape) {
  check_defined("expand", x);
  check_broadcastable("expand", x.shape(), shape);
  auto out = dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const auto in = x.data<T>();
    std::vector<T> o(static_cast<std::size_t>(numel(shape)));
    for_each_broadcast(x.shape(), shape, [&](std::int64_t bi, std::int64_t si) { o[bi] = in[si]; });
    return make<T>(shape, std::move(o));
  });
  const Shape original = x.shape();
  return detail::finish("expand", {x}, out, [original](const Tensor& g, const Tensor&, const std::vector<bool>&) {
    return std::vector<Tensor>{sum_to(g, original)};
  });
}

Tensor sum_to(const Tensor& x, const Shape& shape) {
  check_defined("sum_to", x);
  check_broadcastable("sum_to", shape, x.shape());
  auto out = dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const auto in = x.data<T>();
    std::vector<T> o(static_cast<std::size_t>(numel(shape)), T(0));
    for_each_broadcast(shape, x.shape(), [&](std::int64_t bi, std::int64_t si) { o[si] += in[bi]; });
    return make<T>(shape, std::move(o));
  });
  const Shape original = x.shape();
  return detail::finish("sum_to", {x}, out, [original](const Tensor& g, const Tensor&, const std::vector<bool>&) {
    return std::vector<Tensor>{expand(g, original)};
  });
}

Tensor transpose(const Tensor& x) {
  check_defined("transpose", x);
  if (x.rank() != 2) throw ShapeError("transpose: expected 2-D, got " + shape_str(x.shape()));
  const auto r = x.dim(0), c = x.dim(1);
  auto out = dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const auto in = x.data<T>();
    std::vector<T> o(in.size());
    for (std::int64_t i = 0; i < r; ++i)
      for (std::int64_t j = 0; j < c; ++j) o[j * r + i] = in[i * c + j];
    return make<T>({c, r}, std::move(o));
  });
  return detail::finish("transpose", {x}, out, [](const Tensor& g, const Tensor&, const std::vector<bool>&) {
    return std::vector<Tensor>{transpose(g)};
  });
}

Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  Shape tail(parts[0].shape().begin() + (parts[0].rank() ? 1 : 0), parts[0].shape().end());
  std::int64_t rows = 0;
  std::vector<std::int64_t> lengths;
  for (const auto& p : parts) {
    check_defined("concat", p);
    check_dtype("concat", parts[0], p);
    if (p.rank() < 1 || Shape(p.shape().begin() + 1, p.shape().end()) != tail)
      throw ShapeError("concat: part shape " + shape_str(p.shape()) + " incompatible with " +
                       shape_str(parts[0].shape()));
    rows += p.dim(0);
    lengths.push_back(p.dim(0));
  }
  Shape shape{rows};
  shape.insert(shape.end(), tail.begin(), tail.end());
  auto out = dispatch(parts[0].dtype(), [&](auto tag) {
    using T = decltype(tag);
    std::vector<T> o;
    o.reserve(static_cast<std::size_t>(numel(shape)));
    for (const auto& p : parts) {
      auto d = p.data<T>();
      o.insert(o.end(), d.begin(), d.end());
    }
    return make<T>(shape, std::move(o));
  });
  return detail::finish("concat", parts, out, [lengths](const Tensor& g, const Tensor&, const std::vector<bool>& need) {
    std::vector<Tensor> grads(lengths.size());
    std::int64_t offset = 0;
    for (std::size_t i = 0; i < lengths.size(); ++i) {
      if (need[i]) grads[i] = narrow(g, offset, lengths[i]);
      offset += lengths[i];
    }
    return grads;
  });
}

Tensor narrow(const Tensor& x, std::int64_t start, std::int64_t length) {
  check_defined("narrow", x);
  if (x.rank() < 1 || start < 0 || length < 0 || start + length > x.dim(0))
    throw ShapeError("narrow: rows [" + std::to_string(start) + ", " + std::to_string(start + length) +
                     ") out of range for " + shape_str(x.shape()));
  Shape shape = x.shape();
  shape[0] = length;
  const std::int64_t row = x.dim(0) ? x.numel() / x.dim(0) : 0;
  auto out = dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto d = x.data<T>();
    return make<T>(shape, std::vector<T>(d.begin() + start * row, d.begin() + (start + length) * row));
  });
  const std::int64_t total = x.dim(0);
  return detail::finish("narrow", {x}, out, [start, total](const Tensor& g, const Tensor&, const std::vector<bool>&) {
    return std::vector<Tensor>{pad_rows(g, start, total)};
  });
}

Tensor pad_rows(const Tensor& x, std::int64_t start, std::int64_t total) {
  check_defined("pad_rows", x);
  if (x.rank() < 1 || start < 0 || start + x.dim(0) > total)
    throw ShapeError("pad_rows: cannot place " + shape_str(x.shape()) + " at row " + std::to_string(start));
  Shape shape = x.shape();
  shape[0] = total;
  const std::int64_t row = x.dim(0) ? x.numel() / x.dim(0) : numel(Shape(shape.begin() + 1, shape.end()));
  auto out = dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto d = x.data<T>();
    std::vector<T> o(static_cast<std::size_t>(numel(shape)), T(0));
    std::copy(d.begin(), d.end(), o.begin() + start * row);
    return make<T>(shape, std::move(o));
  });
  const std::int64_t len = x.dim(0);
  return detail::finish("pad_rows", {x}, out, [start, len](const Tensor& g, const Tensor&, const std::vector<bool>&) {
    return std::vector<Tensor>{narrow(g, start, len)};
  });
}

Tensor index_select(const Tensor& x, std::span<const std::int64_t> rows) {
  check_defined("index_select", x);
  if (x.rank() < 1) throw ShapeError("index_select: rank-0 input");
  for (auto r : rows)
    if (r < 0 || r >= x.dim(0))
      throw ShapeError("index_select: row " + std::to_string(r) + " out of range for " + shape_str(x.shape()));
  Shape shape = x.shape();
  shape[0] = static_cast<std::int64_t>(rows.size());
  const std::int64_t row = x.dim(0) ? x.numel() / x.dim(0) : 0;
  auto out = dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto d = x.data<T>();
    std::vector<T> o;
    o.reserve(static_cast<std::size_t>(numel(shape)));
    for (auto r : rows) o.insert(o.end(), d.begin() + r * row, d.begin() + (r + 1) * row);
    return make<T>(shape, std::move(o));
  });
  std::vector<std::int64_t> idx(rows.begin(), rows.end());
  const std::int64_t total = x.dim(0);
  return detail::finish("index_select", {x}, out,
                        [idx = std::move(idx), total](const Tensor& g, const Tensor&, const std::vector<bool>&) {
                          return std::vector<Tensor>{index_add(g, idx, total)};
                        });
}

Tensor index_add(const Tensor& src, std::span<const std::int64_t> rows, std::int64_t total_rows) {
  check_defined("index_add", src);
  if (src.rank() < 1 || static_cast<std::int64_t>(rows.size()) != src.dim(0))
    throw ShapeError("index_add: " + std::to_string(rows.size()) + " indices for " + shape_str(src.shape()));
  Shape shape = src.shape();
  shape[0] = total_rows;
  const std::int64_t row = numel(Shape(shape.begin() + 1, shape.end()));
  for (auto r : rows)
    if (r < 0 || r >= total_rows) throw ShapeError("index_add: row " + std::to_string(r) + " out of range");
  auto out = dispatch(src.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto d = src.data<T>();
    std::vector<T> o(static_cast<std::size_t>(numel(shape)), T(0));
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::int64_t j = 0; j < row; ++j) o[rows[i] * row + j] += d[static_cast<std::int64_t>(i) * row + j];
    return make<T>(shape, std::move(o));
  });
  std::vector<std::int64_t> idx(rows.begin(), rows.end());
  return detail::finish("index_add", {src}, out, [idx = std::move(idx)](const Tensor& g, const Tensor&, const std::vector<bool>&) {
    return std::vector<Tensor>{index_select(g, idx)};
  });
}

// ---- reductions ----------------------------------------------------------------

Tensor sum(const Tensor& x) {
  check_defined("sum", x);
  auto out = dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto d = x.data<T>();
    // accumulate in double for a stable scalar
    double acc = 0.0;
    for (auto v : d) acc += v;
    return make<T>({}, std::vector<T>{static_cast<T>(acc)});
  });
  const Shape original = x.shape();
  return detail::finish("sum", {x}, out, [original](const Tensor& g, const Tensor&, const std::vector<bool>&) {
    return std::vector<Tensor>{expand(ones_shape_of_rank(g, original.size()), original)};
  });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

// ---- linear algebra ------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_defined("matmul", a);
  check_defined("matmul", b);
  check_dtype("matmul", a, b);
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw ShapeError("matmul: shape mismatch " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
  auto out = dispatch(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    std::vector<T> o(static_cast<std::size_t>(m * n));
    Eigen::Map<const RowMat<T>> am(a.data<T>().data(), m, k);
    Eigen::Map<const RowMat<T>> bm(b.data<T>().data(), k, n);
    Eigen::Map<RowMat<T>> om(o.data(), m, n);
    om.noalias() = am * bm;
    return make<T>({m, n}, std::move(o));
  });
  return detail::finish("matmul", {a, b}, out, [a, b](const Tensor& g, const Tensor&, const std::vector<bool>& need) {
    return std::vector<Tensor>{need[0] ? matmul(g, transpose(b)) : Tensor(), need[1] ? matmul(transpose(a), g) : Tensor()};
  });
}

Tensor conv2d(const Tensor& x, const Tensor& w) {
  check_defined("conv2d", x);
  check_defined("conv2d", w);
  check_dtype("conv2d", x, w);
  check_nchw("conv2d", x);
  check_conv_weight("conv2d", w);
  if (x.dim(1) != w.dim(1))
    throw ShapeError("conv2d: input " + shape_str(x.shape()) + " has " + std::to_string(x.dim(1)) +
                     " channels, weight " + shape_str(w.shape()) + " expects " + std::to_string(w.dim(1)));
  auto out = conv2d_raw(x, w);
  const std::int64_t k = w.dim(2);
  return detail::finish("conv2d", {x, w}, out, [x, w, k](const Tensor& g, const Tensor&, const std::vector<bool>& need) {
    return std::vector<Tensor>{need[0] ? conv2d_input_grad(g, w) : Tensor(),
                               need[1] ? conv2d_weight_grad(x, g, k) : Tensor()};
  });
}

Tensor conv2d_input_grad(const Tensor& g, const Tensor& w) {
  check_defined("conv2d_input_grad", g);
  check_dtype("conv2d_input_grad", g, w);
  check_nchw("conv2d_input_grad", g);
  check_conv_weight("conv2d_input_grad", w);
  if (g.dim(1) != w.dim(0))
    throw ShapeError("conv2d_input_grad: grad " + shape_str(g.shape()) + " vs weight " + shape_str(w.shape()));
  auto out = conv2d_input_grad_raw(g, w);
  const std::int64_t k = w.dim(2);
  return detail::finish("conv2d_input_grad", {g, w}, out,
                        [g, w, k](const Tensor& z, const Tensor&, const std::vector<bool>& need) {
                          return std::vector<Tensor>{need[0] ? conv2d(z, w) : Tensor(),
                                                     need[1] ? conv2d_weight_grad(z, g, k) : Tensor()};
                        });
}

Tensor conv2d_weight_grad(const Tensor& x, const Tensor& g, std::int64_t kernel) {
  check_defined("conv2d_weight_grad", x);
  check_dtype("conv2d_weight_grad", x, g);
  check_nchw("conv2d_weight_grad", x);
  check_nchw("conv2d_weight_grad", g);
  if (x.dim(0) != g.dim(0) || x.dim(2) != g.dim(2) || x.dim(3) != g.dim(3) || kernel % 2 == 0)
    throw ShapeError("conv2d_weight_grad: input " + shape_str(x.shape()) + " vs grad " + shape_str(g.shape()));
  auto out = conv2d_weight_grad_raw(x, g, kernel);
  return detail::finish("conv2d_weight_grad", {x, g}, out,
                        [x, g](const Tensor& wbar, const Tensor&, const std::vector<bool>& need) {
                          return std::vector<Tensor>{need[0] ? conv2d_input_grad(g, wbar) : Tensor(),
                                                     need[1] ? conv2d(x, wbar) : Tensor()};
                        });
}

Tensor avg_pool2(const Tensor& x) {
  check_defined("avg_pool", x);
  check_nchw("avg_pool", x);
  const auto N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (H % 2 || W % 2) throw ShapeError("avg_pool: spatial size must be even, got " + shape_str(x.shape()));
  const auto h = H / 2, w = W / 2;
  auto out = dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto d = x.data<T>();
    std::vector<T> o(static_cast<std::size_t>(N * C * h * w));
    for (std::int64_t p = 0; p < N * C; ++p) {
      const T* src = d.data() + p * H * W;
      T* dst = o.data() + p * h * w;
      for (std::int64_t i = 0; i < h; ++i)
        for (std::int64_t j = 0; j < w; ++j)
          dst[i * w + j] = T(0.25) * (src[2 * i * W + 2 * j] + src[2 * i * W + 2 * j + 1] +
                                      src[(2 * i + 1) * W + 2 * j] + src[(2 * i + 1) * W + 2 * j + 1]);
    }
    return make<T>({N, C, h, w}, std::move(o));
  });
  return detail::finish("avg_pool", {x}, out, [](const Tensor& g, const Tensor&, const std::vector<bool>&) {
    return std::vector<Tensor>{avg_unpool2(g)};
  });
}

Tensor avg_unpool2(const Tensor& g) {
  check_defined("avg_unpool", g);
  check_nchw("avg_unpool", g);
  const auto N = g.dim(0), C = g.dim(1), h = g.dim(2), w = g.dim(3);
  const auto H = 2 * h, W = 2 * w;
  auto out = dispatch(g.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto d = g.data<T>();
    std::vector<T> o(static_cast<std::size_t>(N * C * H * W));
    for (std::int64_t p = 0; p < N * C; ++p) {
      const T* src = d.data() + p * h * w;
      T* dst = o.data() + p * H * W;
      for (std::int64_t i = 0; i < H; ++i)
        for (std::int64_t j = 0; j < W; ++j) dst[i * W + j] = T(0.25) * src[(i / 2) * w + j / 2];
    }
    return make<T>({N, C, H, W}, std::move(o));
  });
  return detail::finish("avg_unpool", {g}, out, [](const Tensor& z, const Tensor&, const std::vector<bool>&) {
    return std::vector<Tensor>{avg_pool2(z)};
  });
}

Tensor instance_norm(const Tensor& x, double eps) {
  check_defined("instance_norm", x);
  check_nchw("instance_norm", x);
  const auto N = x.dim(0), C = x.dim(1);
  const double inv_hw = 1.0 / static_cast<double>(x.dim(2) * x.dim(3));
  const Shape stat{N, C, 1, 1};
  // composite: every step is a recorded primitive, so any derivative order works
  Tensor mu = scale(sum_to(x, stat), inv_hw);
  Tensor centered = sub(x, mu);
  Tensor var = scale(sum_to(square(centered), stat), inv_hw);
  Tensor denom = sqrt(add_scalar(var, eps));
  return div(centered, denom);
}

Tensor softmax(const Tensor& logits) {
  check_defined("softmax", logits);
  if (logits.rank() != 2) throw ShapeError("softmax: expected [N,K], got " + shape_str(logits.shape()));
  const auto N = logits.dim(0), K = logits.dim(1);
  auto out = dispatch(logits.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto d = logits.data<T>();
    std::vector<T> o(d.size());
    for (std::int64_t n = 0; n < N; ++n) {
      const T* row = d.data() + n * K;
      const T mx = *std::max_element(row, row + K);
      T z = 0;
      for (std::int64_t k = 0; k < K; ++k) z += (o[n * K + k] = std::exp(row[k] - mx));
      for (std::int64_t k = 0; k < K; ++k) o[n * K + k] /= z;
    }
    return make<T>(logits.shape(), std::move(o));
  });
  return detail::finish("softmax", {logits}, out, [N, K](const Tensor& g, const Tensor& s, const std::vector<bool>&) {
    Tensor gs = mul(g, s);
    Tensor row = expand(sum_to(gs, {N, 1}), {N, K});
    return std::vector<Tensor>{sub(gs, mul(s, row))};
  });
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const std::int32_t> labels) {
  check_defined("softmax_cross_entropy", logits);
  if (logits.rank() != 2 || logits.dim(0) != static_cast<std::int64_t>(labels.size()) || logits.dim(0) == 0)
    throw ShapeError("softmax_cross_entropy: logits " + shape_str(logits.shape()) + " vs " +
                     std::to_string(labels.size()) + " labels");
  const auto N = logits.dim(0), K = logits.dim(1);
  for (auto y : labels)
    if (y < 0 || y >= K)
      throw ShapeError("softmax_cross_entropy: label " + std::to_string(y) + " outside [0, " + std::to_string(K) + ")");
  auto out = dispatch(logits.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto d = logits.data<T>();
    double total = 0.0;
    for (std::int64_t n = 0; n < N; ++n) {
      const T* row = d.data() + n * K;
      const double mx = *std::max_element(row, row + K);
      double z = 0.0;
      for (std::int64_t k = 0; k < K; ++k) z += std::exp(static_cast<double>(row[k]) - mx);
      total += mx + std::log(z) - static_cast<double>(row[labels[n]]);
    }
    return make<T>({}, std::vector<T>{static_cast<T>(total / static_cast<double>(N))});
  });
  std::vector<double> onehot(static_cast<std::size_t>(N * K), 0.0);
  for (std::int64_t n = 0; n < N; ++n) onehot[n * K + labels[n]] = 1.0;
  const Tensor target = Tensor::from_values({N, K}, onehot, logits.dtype());
  return detail::finish("softmax_cross_entropy", {logits}, out,
                        [logits, target, N, K](const Tensor& g, const Tensor&, const std::vector<bool>&) {
                          Tensor coeff = expand(reshape(scale(g, 1.0 / static_cast<double>(N)), {1, 1}), {N, K});
                          return std::vector<Tensor>{mul(sub(softmax(logits), target), coeff)};
                        });
}

// ---- resampling ------------------------------------------------------------------

namespace {
void check_plan(std::string_view op, const Tensor& t, const ResamplePlan& p, bool forward) {
  check_nchw(op, t);
  const auto h = forward ? p.in_h : p.out_h;
  const auto w = forward ? p.in_w : p.out_w;
  if (t.dim(0) != p.batch || t.dim(2) != h || t.dim(3) != w)
    throw ShapeError(std::string(op) + ": tensor " + shape_str(t.shape()) + " does not match plan");
}
}  // namespace

Tensor resample(const Tensor& x, std::shared_ptr<const ResamplePlan> plan) {
  check_defined("resample", x);
  check_plan("resample", x, *plan, true);
  const auto N = x.dim(0), C = x.dim(1);
  const auto in_hw = plan->in_h * plan->in_w, out_hw = plan->out_h * plan->out_w;
  auto out = dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto d = x.data<T>();
    std::vector<T> o(static_cast<std::size_t>(N * C * out_hw), T(0));
    for (std::int64_t n = 0; n < N; ++n)
      for (std::int64_t c = 0; c < C; ++c) {
        const T* src = d.data() + (n * C + c) * in_hw;
        T* dst = o.data() + (n * C + c) * out_hw;
        for (std::int64_t p = 0; p < out_hw; ++p) {
          const std::size_t base = static_cast<std::size_t>((n * out_hw + p) * 4);
          T acc = 0;
          for (int t = 0; t < 4; ++t) {
            const auto idx = plan->index[base + t];
            if (idx >= 0) acc += static_cast<T>(plan->weight[base + t]) * src[idx];
          }
          dst[p] = acc;
        }
      }
    return make<T>({N, C, plan->out_h, plan->out_w}, std::move(o));
  });
  return detail::finish("resample", {x}, out, [plan](const Tensor& g, const Tensor&, const std::vector<bool>&) {
    return std::vector<Tensor>{resample_transpose(g, plan)};
  });
}

Tensor resample_transpose(const Tensor& g, std::shared_ptr<const ResamplePlan> plan) {
  check_defined("resample_transpose", g);
  check_plan("resample_transpose", g, *plan, false);
  const auto N = g.dim(0), C = g.dim(1);
  const auto in_hw = plan->in_h * plan->in_w, out_hw = plan->out_h * plan->out_w;
  auto out = dispatch(g.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto d = g.data<T>();
    std::vector<T> o(static_cast<std::size_t>(N * C * in_hw), T(0));
    for (std::int64_t n = 0; n < N; ++n)
      for (std::int64_t c = 0; c < C; ++c) {
        const T* src = d.data() + (n * C + c) * out_hw;
        T* dst = o.data() + (n * C + c) * in_hw;
        for (std::int64_t p = 0; p < out_hw; ++p) {
          const std::size_t base = static_cast<std::size_t>((n * out_hw + p) * 4);
          for (int t = 0; t < 4; ++t) {
            const auto idx = plan->index[base + t];
            if (idx >= 0) dst[idx] += static_cast<T>(plan->weight[base + t]) * src[p];
          }
        }
      }
    return make<T>({N, C, plan->in_h, plan->in_w}, std::move(o));
  });
  return detail::finish("resample_transpose", {g}, out, [plan](const Tensor& z, const Tensor&, const std::vector<bool>&) {
    return std::vector<Tensor>{resample(z, plan)};
  });
}

// ---- uniform dispatch ---------------------------------------------------------------

std::string_view primitive_name(Primitive p) {
  switch (p) {
    case Primitive::add: return "add";
    case Primitive::sub: return "sub";
    case Primitive::mul: return "mul";
    case Primitive::scalar_mul: return "scalar_mul";
    case Primitive::div: return "div";
    case Primitive::matmul: return "matmul";
    case Primitive::conv2d: return "conv2d";
    case Primitive::relu: return "relu";
    case Primitive::avg_pool: return "avg_pool";
    case Primitive::instance_norm: return "instance_norm";
    case Primitive::flatten: return "flatten";
    case Primitive::sum: return "sum";
    case Primitive::mean: return "mean";
    case Primitive::softmax_cross_entropy: return "softmax_cross_entropy";
    case Primitive::square: return "square";
    case Primitive::sqrt: return "sqrt";
    case Primitive::concat: return "concat";
    case Primitive::index_select: return "index_select";
    case Primitive::exp: return "exp";
    case Primitive::log: return "log";
    case Primitive::transpose: return "transpose";
    case Primitive::expand: return "expand";
    case Primitive::sum_to: return "sum_to";
    case Primitive::softmax: return "softmax";
    case Primitive::reshape: return "reshape";
  }
  return "?";
}

std::vector<Primitive> all_primitives() {
  std::vector<Primitive> v;
  for (int i = 0; i <= static_cast<int>(Primitive::reshape); ++i) v.push_back(static_cast<Primitive>(i));
  return v;
}

Tensor apply_primitive(Primitive op, const std::vector<Tensor>& in, const PrimitiveAttrs& attrs) {
  auto arity = [&](std::size_t n) {
    if (in.size() != n)
      throw ShapeError(std::string(primitive_name(op)) + ": expected " + std::to_string(n) + " inputs, got " +
                       std::to_string(in.size()));
  };
  switch (op) {
    case Primitive::add: arity(2); return add(in[0], in[1]);
    case Primitive::sub: arity(2); return sub(in[0], in[1]);
    case Primitive::mul: arity(2); return mul(in[0], in[1]);
    case Primitive::div: arity(2); return div(in[0], in[1]);
    case Primitive::scalar_mul: arity(1); return scale(in[0], attrs.scalar);
    case Primitive::matmul: arity(2); return matmul(in[0], in[1]);
    case Primitive::conv2d: arity(2); return conv2d(in[0], in[1]);
    case Primitive::relu: arity(1); return relu(in[0]);
    case Primitive::avg_pool: arity(1); return avg_pool2(in[0]);
    case Primitive::instance_norm: arity(1); return instance_norm(in[0]);
    case Primitive::flatten: arity(1); return flatten(in[0]);
    case Primitive::sum: arity(1); return sum(in[0]);
    case Primitive::mean: arity(1); return mean(in[0]);
    case Primitive::softmax_cross_entropy: arity(1); return softmax_cross_entropy(in[0], attrs.labels);
    case Primitive::square: arity(1); return square(in[0]);
    case Primitive::sqrt: arity(1); return sqrt(in[0]);
    case Primitive::concat: return concat(in);
    case Primitive::index_select: arity(1); return index_select(in[0], attrs.indices);
    case Primitive::exp: arity(1); return exp(in[0]);
    case Primitive::log: arity(1); return log(in[0]);
    case Primitive::transpose: arity(1); return transpose(in[0]);
    case Primitive::expand: arity(1); return expand(in[0], attrs.shape);
    case Primitive::sum_to: arity(1); return sum_to(in[0], attrs.shape);
    case Primitive::softmax: arity(1); return softmax(in[0]);
    case Primitive::reshape: arity(1); return reshape(in[0], attrs.shape);
  }
  throw ShapeError("apply_primitive: unknown primitive");
}

}  // namespace condensor
