#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "condensor/tensor.hpp"

namespace condensor {

// Named parameter tensors kept sorted by name; that order is the flatten order.
class ParamSet {
 public:
  struct Entry {
    std::string name;
    Tensor value;
  };

  void set(const std::string& name, Tensor value);
  const Tensor& at(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::size_t size() const noexcept { return entries_.size(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  const Entry& operator[](std::size_t i) const { return entries_.at(i); }

  std::vector<Tensor> tensors() const;
  std::vector<std::string> names() const;
  // Same names and shapes, new values (in flatten order).
  ParamSet with_tensors(const std::vector<Tensor>& values) const;

  std::int64_t flat_size() const;
  // Differentiable concatenation of all parameters.
  Tensor flatten() const;
  // Inverse of flatten using this set's layout; differentiable in `flat`.
  ParamSet unflatten(const Tensor& flat) const;

  std::vector<double> flat_values() const;
  DType dtype() const;

 private:
  std::vector<Entry> entries_;
};

}  // namespace condensor
