#pragma once

// Dense row-major tensors with a recording tape for reverse-mode autodiff.
//
// A Tensor is a cheap value handle over an immutable buffer. When an op runs
// while a Tape is active on the current thread and at least one input carries
// a node of that tape, the output gets a node too. Backward passes are built
// from the same recorded ops, so in higher-order mode the returned gradients
// are themselves differentiable.

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "condensor/error.hpp"

namespace condensor {

enum class DType : std::uint8_t { f32, f64 };

std::string_view dtype_name(DType d);
DType parse_dtype(std::string_view s);

using Shape = std::vector<std::int64_t>;

std::int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tape;

struct NodeRef {
  Tape* tape = nullptr;
  std::size_t id = 0;
  explicit operator bool() const noexcept { return tape != nullptr; }
};

class Tensor {
 public:
  using Buffer = std::variant<std::vector<float>, std::vector<double>>;

  Tensor() = default;
  Tensor(Shape shape, Buffer buffer);

  static Tensor zeros(const Shape& shape, DType dtype);
  static Tensor full(const Shape& shape, double value, DType dtype);
  static Tensor scalar(double value, DType dtype) { return full({}, value, dtype); }
  static Tensor from(const Shape& shape, std::vector<float> values);
  static Tensor from(const Shape& shape, std::vector<double> values);
  // Converts the values to `dtype`.
  static Tensor from_values(const Shape& shape, std::span<const double> values, DType dtype);

  bool defined() const noexcept { return buffer_ != nullptr; }
  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::int64_t dim(std::size_t i) const { return shape_.at(i); }
  std::int64_t numel() const noexcept;
  DType dtype() const noexcept;

  template <typename T>
  std::span<const T> data() const {
    const auto* v = std::get_if<std::vector<T>>(buffer_.get());
    if (v == nullptr) throw DTypeError("tensor dtype does not match requested element type");
    return {v->data(), v->size()};
  }
  const Buffer& buffer() const { return *buffer_; }
  std::shared_ptr<const Buffer> shared_buffer() const { return buffer_; }

  std::vector<double> to_vector() const;
  double item() const;
  double at(std::int64_t flat_index) const;

  NodeRef node() const noexcept { return node_; }
  bool has_node() const noexcept { return static_cast<bool>(node_); }
  // Same values, no node: a constant for any tape.
  Tensor detach() const;
  Tensor astype(DType dtype) const;
  // Shares the buffer under a new shape; the result carries no node.
  Tensor share_as(Shape shape) const;

 private:
  friend class Tape;
  std::shared_ptr<const Buffer> buffer_;
  Shape shape_;
  NodeRef node_;
};

// Calls f(float{}) or f(double{}) according to dtype.
template <typename F>
decltype(auto) dispatch(DType dtype, F&& f) {
  if (dtype == DType::f32) return f(float{});
  return f(double{});
}

enum class TapeMode { first_order, higher_order };

// Receives the output gradient and the op's output (with its node), returns one
// gradient per input; entries for inputs with needed[i] == false may be undefined.
using VjpFn = std::function<std::vector<Tensor>(const Tensor& grad, const Tensor& out, const std::vector<bool>& needed)>;

class Tape {
 public:
  explicit Tape(TapeMode mode = TapeMode::first_order) : mode_(mode) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  TapeMode mode() const noexcept { return mode_; }
  std::size_t size() const noexcept { return nodes_.size(); }
  const std::string& op_name(std::size_t id) const { return nodes_.at(id).op; }

  // Registers t as a differentiable leaf.
  Tensor watch(const Tensor& t);
  bool owns(const Tensor& t) const noexcept { return t.node().tape == this && t.node().id < nodes_.size(); }

  // d loss / d w for each w. With create_graph (the default in higher_order mode)
  // the backward computation is recorded, so the results can be differentiated again.
  std::vector<Tensor> backward(const Tensor& loss, const std::vector<Tensor>& wrt);
  std::vector<Tensor> backward(const Tensor& loss, const std::vector<Tensor>& wrt, bool create_graph);

  // Used by ops; returns `out` carrying a new node.
  Tensor record(std::string_view op, const std::vector<Tensor>& inputs, Tensor out, VjpFn vjp);

 private:
  struct Node {
    std::string op;
    std::vector<std::int64_t> inputs;  // -1 for constants
    VjpFn vjp;
    std::shared_ptr<const Tensor::Buffer> out_buffer;
    Shape out_shape;
  };
  TapeMode mode_;
  std::deque<Node> nodes_;
};

// Tape that records on the current thread, or nullptr.
Tape* active_tape() noexcept;
bool recording() noexcept;

// Makes `tape` the active tape of this thread for the scope's lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
  bool previous_enabled_;
};

class NoRecordGuard {
 public:
  NoRecordGuard();
  ~NoRecordGuard();
  NoRecordGuard(const NoRecordGuard&) = delete;
  NoRecordGuard& operator=(const NoRecordGuard&) = delete;

 private:
  bool previous_;
};

namespace detail {
// Attaches a node to `out` when recording and any input lives on the active tape.
Tensor finish(std::string_view op, const std::vector<Tensor>& inputs, Tensor out, VjpFn vjp);
}  // namespace detail

}  // namespace condensor
