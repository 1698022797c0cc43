#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "ssvo/tensor.hpp"

namespace ssvo {

/// Ordered collection of named tensors. Trainable entries are graph leaves
/// with requires_grad set; buffers (batch-norm running statistics) are not.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor tensor;
    bool trainable;
  };

  Tensor& add(std::string name, Tensor tensor, bool trainable);
  bool contains(const std::string& name) const;
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }
  std::vector<Tensor> trainable() const;
  std::size_t trainable_count() const;  // number of trainable scalars

  /// Deep copy: new leaves with the same values.
  ParamStore clone() const;

 private:
  std::size_t index_of(const std::string& name) const;
  std::vector<Entry> entries_;
};

}  // namespace ssvo
