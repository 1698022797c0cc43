#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ssvo/tensor.hpp"

namespace ssvo {

struct AdamState {
  static constexpr double kDefaultLearningRate = 1e-4;
  /// Rate quoted by the original training recipe; selectable, not default.
  static constexpr double kLiteralLearningRate = 0.1;

  double learning_rate = kDefaultLearningRate;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step_count = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
};

/// One bias-corrected Adam update, in place. Moment buffers are created on the
/// first call and must keep matching the parameter sizes afterwards.
void adam_step(std::span<Tensor> params, std::span<const std::vector<double>> grads, AdamState& state);

}  // namespace ssvo
