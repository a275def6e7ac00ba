#include "condensor/params.hpp"

#include <algorithm>

#include "condensor/ops.hpp"

namespace condensor {

void ParamSet::set(const std::string& name, Tensor value) {
  auto it = std::lower_bound(entries_.begin(), entries_.end(), name,
                             [](const Entry& e, const std::string& n) { return e.name < n; });
  if (it != entries_.end() && it->name == name) {
    it->value = std::move(value);
    return;
  }
  entries_.insert(it, Entry{name, std::move(value)});
}

const Tensor& ParamSet::at(std::string_view name) const {
  for (const auto& e : entries_)
    if (e.name == name) return e.value;
  throw Error("ParamSet: no parameter named '" + std::string(name) + "'");
}

bool ParamSet::contains(std::string_view name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.name == name; });
}

std::vector<Tensor> ParamSet::tensors() const {
  std::vector<Tensor> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.value);
  return out;
}

std::vector<std::string> ParamSet::names() const {
  std::vector<std::string> out;
  for (const auto& e : entries_) out.push_back(e.name);
  return out;
}

ParamSet ParamSet::with_tensors(const std::vector<Tensor>& values) const {
  if (values.size() != entries_.size()) throw ShapeError("ParamSet::with_tensors: count mismatch");
  ParamSet out;
  out.entries_ = entries_;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i].shape() != entries_[i].value.shape())
      throw ShapeError("ParamSet::with_tensors: shape mismatch for " + entries_[i].name);
    out.entries_[i].value = values[i];
  }
  return out;
}

std::int64_t ParamSet::flat_size() const {
  std::int64_t n = 0;
  for (const auto& e : entries_) n += e.value.numel();
  return n;
}

Tensor ParamSet::flatten() const {
  std::vector<Tensor> parts;
  parts.reserve(entries_.size());
  for (const auto& e : entries_) parts.push_back(reshape(e.value, {e.value.numel()}));
  return concat(parts);
}

ParamSet ParamSet::unflatten(const Tensor& flat) const {
  if (flat.rank() != 1 || flat.numel() != flat_size())
    throw ShapeError("ParamSet::unflatten: expected [" + std::to_string(flat_size()) + "], got " +
                     shape_str(flat.shape()));
  ParamSet out;
  out.entries_ = entries_;
  std::int64_t offset = 0;
  for (auto& e : out.entries_) {
    const auto n = e.value.numel();
    e.value = reshape(narrow(flat, offset, n), e.value.shape());
    offset += n;
  }
  return out;
}

std::vector<double> ParamSet::flat_values() const {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(flat_size()));
  for (const auto& e : entries_) {
    auto v = e.value.to_vector();
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

DType ParamSet::dtype() const { return entries_.empty() ? DType::f32 : entries_.front().value.dtype(); }

}  // namespace condensor
