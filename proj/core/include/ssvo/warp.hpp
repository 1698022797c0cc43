#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "ssvo/geometry.hpp"
#include "ssvo/tensor.hpp"

namespace ssvo {

struct SampleResult {
  Tensor values;                    // [N,C,H,W]
  std::vector<std::uint8_t> valid;  // [N,H,W]
};

/// Bilinear gather of source [N,C,Hs,Ws] at coords [N,H,W,2] (u, v). Points
/// outside [0,Ws-1] x [0,Hs-1] are invalid: value 0 and no gradient.
/// Differentiable w.r.t. source and coords.
SampleResult bilinear_sample(const Tensor& source, const Tensor& coords);

/// The four bilinear weights (top-left, top-right, bottom-left, bottom-right)
/// used for a continuous location.
std::array<double, 4> bilinear_weights(double u, double v);

struct WarpResult {
  Tensor synthesized;               // [N,C,H,W], 0 at invalid pixels
  std::vector<std::uint8_t> valid;  // [N,H,W]
  Tensor coords;                    // [N,H,W,2]

  std::size_t valid_count() const;
  bool any_valid() const { return valid_count() > 0; }
};

/// Synthesizes the target view from a source image through target depth
/// [N,1,H,W] and target-to-source pose vectors [N,6].
WarpResult inverse_warp(const Tensor& source, const Tensor& depth, const Tensor& pose, const CameraIntrinsics& k);

/// Same, with the transform already expanded to [N,12].
WarpResult inverse_warp_matrix(const Tensor& source, const Tensor& depth, const Tensor& transform,
                               const CameraIntrinsics& k);

}  // namespace ssvo
