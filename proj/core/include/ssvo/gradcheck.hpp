#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ssvo/tensor.hpp"

namespace ssvo {

/// A coordinate of one leaf to probe.
struct Probe {
  std::size_t leaf = 0;
  std::size_t index = 0;
};

/// Compares the analytic gradient of scalar f() with central differences at
/// the probed coordinates. Returns |g_a - g_n| / max(|g_a|, |g_n|) over the
/// probe vector (2-norms), or the absolute difference when both norms are
/// below 1e-10. f is re-evaluated with leaves perturbed in place.
double gradient_error(const std::function<Tensor()>& f, std::span<Tensor> leaves, std::span<const Probe> probes,
                      double step = 1e-5);

/// Every coordinate of every leaf.
std::vector<Probe> all_probes(std::span<const Tensor> leaves);

struct GradCheckCase {
  std::string name;
  double tolerance = 0;
  double max_error = 0;  // worst over seeds
  std::size_t seeds = 0;
  bool passed() const { return max_error < tolerance; }
};

/// The full suite: every differentiable op at tolerance 1e-4 and the
/// end-to-end objective on a 16x52 model at 1e-3, each over `seeds` seeds.
std::vector<GradCheckCase> run_gradient_suite(std::size_t seeds = 20, std::uint64_t base_seed = 0);

}  // namespace ssvo
