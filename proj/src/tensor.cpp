#include "condensor/tensor.hpp"

#include <algorithm>
#include <optional>
#include <sstream>

#include "condensor/ops.hpp"

namespace condensor {

std::string_view dtype_name(DType d) { return d == DType::f32 ? "f32" : "f64"; }

DType parse_dtype(std::string_view s) {
  if (s == "f32") return DType::f32;
  if (s == "f64") return DType::f64;
  throw DTypeError("unknown dtype '" + std::string(s) + "' (expected f32 or f64)");
}

std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, Buffer buffer) : shape_(std::move(shape)) {
  for (auto d : shape_)
    if (d < 0) throw ShapeError("negative extent in shape " + shape_str(shape_));
  const auto n = std::visit([](const auto& v) { return static_cast<std::int64_t>(v.size()); }, buffer);
  if (n != condensor::numel(shape_))
    throw ShapeError("buffer length " + std::to_string(n) + " does not match shape " + shape_str(shape_));
  buffer_ = std::make_shared<const Buffer>(std::move(buffer));
}

Tensor Tensor::zeros(const Shape& shape, DType dtype) { return full(shape, 0.0, dtype); }

Tensor Tensor::full(const Shape& shape, double value, DType dtype) {
  const auto n = static_cast<std::size_t>(condensor::numel(shape));
  if (dtype == DType::f32) return Tensor(shape, std::vector<float>(n, static_cast<float>(value)));
  return Tensor(shape, std::vector<double>(n, value));
}

Tensor Tensor::from(const Shape& shape, std::vector<float> values) { return Tensor(shape, std::move(values)); }
Tensor Tensor::from(const Shape& shape, std::vector<double> values) { return Tensor(shape, std::move(values)); }

Tensor Tensor::from_values(const Shape& shape, std::span<const double> values, DType dtype) {
  if (dtype == DType::f64) return Tensor(shape, std::vector<double>(values.begin(), values.end()));
  std::vector<float> v(values.size());
  std::transform(values.begin(), values.end(), v.begin(), [](double x) { return static_cast<float>(x); });
  return Tensor(shape, std::move(v));
}

std::int64_t Tensor::numel() const noexcept { return condensor::numel(shape_); }

DType Tensor::dtype() const noexcept {
  if (!buffer_) return DType::f32;
  return std::holds_alternative<std::vector<float>>(*buffer_) ? DType::f32 : DType::f64;
}

std::vector<double> Tensor::to_vector() const {
  if (!buffer_) return {};
  return std::visit([](const auto& v) { return std::vector<double>(v.begin(), v.end()); }, *buffer_);
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape_));
  return at(0);
}

double Tensor::at(std::int64_t i) const {
  return std::visit([i](const auto& v) { return static_cast<double>(v.at(static_cast<std::size_t>(i))); }, *buffer_);
}

Tensor Tensor::detach() const {
  Tensor t = *this;
  t.node_ = {};
  return t;
}

Tensor Tensor::share_as(Shape shape) const {
  if (condensor::numel(shape) != numel())
    throw ShapeError("cannot view " + shape_str(shape_) + " as " + shape_str(shape));
  Tensor t;
  t.buffer_ = buffer_;
  t.shape_ = std::move(shape);
  return t;
}

Tensor Tensor::astype(DType dtype) const {
  if (dtype == this->dtype()) return detach();
  auto v = to_vector();
  return from_values(shape_, v, dtype);
}

// ---------------------------------------------------------------------------

namespace {
thread_local Tape* t_active = nullptr;
thread_local bool t_enabled = true;
}  // namespace

Tape* active_tape() noexcept { return t_active; }
bool recording() noexcept { return t_active != nullptr && t_enabled; }

TapeScope::TapeScope(Tape& tape) : previous_(t_active), previous_enabled_(t_enabled) {
  t_active = &tape;
  t_enabled = true;
}
TapeScope::~TapeScope() {
  t_active = previous_;
  t_enabled = previous_enabled_;
}

NoRecordGuard::NoRecordGuard() : previous_(t_enabled) { t_enabled = false; }
NoRecordGuard::~NoRecordGuard() { t_enabled = previous_; }

namespace detail {

Tensor finish(std::string_view op, const std::vector<Tensor>& inputs, Tensor out, VjpFn vjp) {
  if (!recording()) return out;
  Tape* tape = active_tape();
  const bool any = std::any_of(inputs.begin(), inputs.end(), [tape](const Tensor& t) { return tape->owns(t); });
  if (!any) return out;
  return tape->record(op, inputs, std::move(out), std::move(vjp));
}

}  // namespace detail

Tensor Tape::watch(const Tensor& t) {
  if (!t.defined()) throw GraphError("watch: undefined tensor");
  Node n;
  n.op = "leaf";
  n.out_buffer = t.buffer_;
  n.out_shape = t.shape_;
  nodes_.push_back(std::move(n));
  Tensor out = t;
  out.node_ = {this, nodes_.size() - 1};
  return out;
}

Tensor Tape::record(std::string_view op, const std::vector<Tensor>& inputs, Tensor out, VjpFn vjp) {
  Node n;
  n.op = std::string(op);
  n.inputs.reserve(inputs.size());
  for (const auto& in : inputs) n.inputs.push_back(owns(in) ? static_cast<std::int64_t>(in.node_.id) : -1);
  n.vjp = std::move(vjp);
  n.out_buffer = out.buffer_;
  n.out_shape = out.shape_;
  nodes_.push_back(std::move(n));
  out.node_ = {this, nodes_.size() - 1};
  return out;
}

std::vector<Tensor> Tape::backward(const Tensor& loss, const std::vector<Tensor>& wrt) {
  return backward(loss, wrt, mode_ == TapeMode::higher_order);
}

std::vector<Tensor> Tape::backward(const Tensor& loss, const std::vector<Tensor>& wrt, bool create_graph) {
  if (!loss.defined() || loss.numel() != 1)
    throw GraphError("backward: loss must be a scalar, got shape " + shape_str(loss.shape()));
  for (const auto& w : wrt)
    if (!owns(w)) throw GraphError("backward: gradient requested for a tensor that is not on this tape");
  if (create_graph && mode_ != TapeMode::higher_order)
    throw GraphError("backward: create_graph requires a higher_order tape");

  std::vector<Tensor> result;
  result.reserve(wrt.size());
  if (!owns(loss)) {
    for (const auto& w : wrt) result.push_back(Tensor::zeros(w.shape(), w.dtype()));
    return result;
  }

  const std::size_t root = loss.node().id;
  std::vector<char> is_target(root + 1, 0);
  for (const auto& w : wrt)
    if (w.node().id <= root) is_target[w.node().id] = 1;
  // reach[i]: node i depends on some requested leaf
  std::vector<char> reach(root + 1, 0);
  for (std::size_t i = 0; i <= root; ++i) {
    if (is_target[i]) {
      reach[i] = 1;
      continue;
    }
    for (auto in : nodes_[i].inputs)
      if (in >= 0 && reach[static_cast<std::size_t>(in)]) {
        reach[i] = 1;
        break;
      }
  }

  TapeScope scope(*this);
  std::optional<NoRecordGuard> no_record;
  if (!create_graph) no_record.emplace();

  std::vector<Tensor> grads(root + 1);
  grads[root] = Tensor::full(loss.shape(), 1.0, loss.dtype());
  for (std::size_t id = root + 1; id-- > 0;) {
    if (!grads[id].defined() || !reach[id]) continue;
    const Node& node = nodes_[id];
    if (!node.vjp) continue;
    std::vector<bool> needed(node.inputs.size());
    bool any = false;
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      needed[k] = node.inputs[k] >= 0 && reach[static_cast<std::size_t>(node.inputs[k])];
      any = any || needed[k];
    }
    if (any) {
      Tensor out;
      out.shape_ = node.out_shape;
      out.buffer_ = node.out_buffer;
      out.node_ = {this, id};
      // vjp may append nodes; deque::push_back keeps `node` valid
      const auto& inputs = node.inputs;
      auto in_grads = node.vjp(grads[id], out, needed);
      for (std::size_t k = 0; k < inputs.size(); ++k) {
        if (!needed[k] || k >= in_grads.size() || !in_grads[k].defined()) continue;
        auto& slot = grads[static_cast<std::size_t>(inputs[k])];
        slot = slot.defined() ? add(slot, in_grads[k]) : in_grads[k];
      }
    }
    if (!is_target[id]) grads[id] = Tensor();
  }

  for (const auto& w : wrt) {
    const auto& g = w.node().id <= root ? grads[w.node().id] : Tensor();
    result.push_back(g.defined() ? g : Tensor::zeros(w.shape(), w.dtype()));
  }
  return result;
}

}  // namespace condensor
