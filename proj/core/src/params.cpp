#include "ssvo/params.hpp"

#include <fmt/format.h>

#include "ssvo/errors.hpp"

namespace ssvo {

Tensor& ParamStore::add(std::string name, Tensor tensor, bool trainable) {
  if (contains(name)) throw ConfigError(fmt::format("duplicate parameter name '{}'", name));
  entries_.push_back({std::move(name), std::move(tensor), trainable});
  return entries_.back().tensor;
}

std::size_t ParamStore::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name == name) return i;
  }
  return entries_.size();
}

bool ParamStore::contains(const std::string& name) const { return index_of(name) != entries_.size(); }

Tensor& ParamStore::at(const std::string& name) {
  const std::size_t i = index_of(name);
  if (i == entries_.size()) throw ConfigError(fmt::format("unknown parameter '{}'", name));
  return entries_[i].tensor;
}

const Tensor& ParamStore::at(const std::string& name) const { return const_cast<ParamStore*>(this)->at(name); }

std::vector<Tensor> ParamStore::trainable() const {
  std::vector<Tensor> out;
  for (const auto& e : entries_) {
    if (e.trainable) out.push_back(e.tensor);
  }
  return out;
}

std::size_t ParamStore::trainable_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) {
    if (e.trainable) n += e.tensor.size();
  }
  return n;
}

ParamStore ParamStore::clone() const {
  ParamStore out;
  for (const auto& e : entries_) {
    out.add(e.name, Tensor::from(e.tensor.shape(), {e.tensor.data().begin(), e.tensor.data().end()}, e.trainable),
            e.trainable);
  }
  return out;
}

}  // namespace ssvo
