#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ssvo/tensor.hpp"

namespace ssvo {

// Elementwise arithmetic. Binary ops require identical shapes; the models
// never need general broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
Tensor abs(const Tensor& a);
Tensor reciprocal(const Tensor& a);
Tensor log(const Tensor& a);

/// Sum of every element, as a scalar.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Sum of a list of scalars, accumulated in list order.
Tensor sum_scalars(std::span<const Tensor> terms);

enum class Activation { relu, sigmoid };
/// relu subgradient at exactly 0 is 0.
Tensor activation(const Tensor& a, Activation kind);
inline Tensor relu(const Tensor& a) { return activation(a, Activation::relu); }
inline Tensor sigmoid(const Tensor& a) { return activation(a, Activation::sigmoid); }

Tensor reshape(const Tensor& a, Shape shape);

// ---- [N,C,H,W] feature maps ----

/// Cross-correlation with symmetric zero padding (k-1)/2, so the output is
/// ceil(H/stride) x ceil(W/stride) for odd k. weight is [F,C,k,k]; bias is
/// [F] or undefined.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t stride = 1);

/// Exact adjoint of conv2d(., weight, stride) restricted to an input of size
/// (stride*H) x (stride*W). input is [N,F,H,W], weight [F,C,k,k], output
/// [N,C,stride*H,stride*W]; bias is [C] or undefined.
Tensor conv2d_transpose(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t stride = 2);

struct BatchNormParams {
  static constexpr double kEpsilon = 1e-5;
  static constexpr double kMomentum = 0.1;
};

/// Per-channel normalization over N,H,W. In training mode batch statistics
/// are used and running_mean/running_var (length C) are blended with
/// momentum 0.1; in inference mode the running statistics are used.
Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta, std::span<double> running_mean,
                  std::span<double> running_var, bool training);

/// Softmax over consecutive channel pairs (0,1), (2,3), ... at every pixel.
Tensor softmax_pairs(const Tensor& input);

Tensor concat_channels(std::span<const Tensor> parts);
Tensor slice_channels(const Tensor& input, std::size_t first, std::size_t count);
/// Keeps the top-left height x width window.
Tensor crop(const Tensor& input, std::size_t height, std::size_t width);
/// Nearest-neighbour x2 upsampling, cropped to height x width.
Tensor upsample_nearest(const Tensor& input, std::size_t height, std::size_t width);
/// 2x2 box average producing ceil(H/2) x ceil(W/2); partial blocks at the
/// border average only the pixels they cover.
Tensor downsample_average(const Tensor& input);
/// [N,C,H,W] -> [N,C].
Tensor global_average_pool(const Tensor& input);

}  // namespace ssvo
