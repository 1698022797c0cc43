#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ssvo/params.hpp"
#include "ssvo/tensor.hpp"

namespace ssvo {

enum class Mode { train, inference };

/// Encoder-decoder disparity network. Seven stride-2 encoder stages with
/// kernels 7,7,5,5,3,3,3; a deconvolution decoder with skip connections
/// emits a disparity map at each of the four finest scales.
struct DispNetConfig {
  std::size_t base_channels = 8;
  std::size_t height = 32;
  std::size_t width = 104;
  std::size_t scales = 4;
  double alpha = 10.0;  // disparity = 1 / (alpha * sigmoid(x) + beta)
  double beta = 0.1;

  bool operator==(const DispNetConfig&) const = default;
};

/// Pose and reliability network: five shared encoder convolutions, a pose
/// branch reduced to 6*(N-1) values, and a five-deconvolution mask decoder.
struct PoseExpNetConfig {
  std::size_t base_channels = 8;
  std::size_t height = 32;
  std::size_t width = 104;
  std::size_t sequence_length = 3;
  std::size_t scales = 4;
  double translation_scale = 0.01;
  double rotation_scale = 0.01;

  bool operator==(const PoseExpNetConfig&) const = default;
};

struct ModelConfig {
  DispNetConfig disp;
  PoseExpNetConfig pose;

  void validate() const;
  std::size_t sources() const { return pose.sequence_length - 1; }
  /// key=value lines, embedded in checkpoints.
  std::string to_text() const;
  static ModelConfig from_text(const std::string& text);
  bool operator==(const ModelConfig&) const = default;
};

/// Inputs must be divisible by this; coarser levels round up.
inline constexpr std::size_t kInputMultiple = 4;

/// Deterministic per seed. Convolution weights ~ U(-a, a) with
/// a = sqrt(3 / fan_in) (std 1/sqrt(fan_in)); the pose prediction layer is
/// zero so the initial motion estimate is the identity.
ParamStore init_parameters(const ModelConfig& config, std::uint64_t seed);

/// Trainable scalar count as a closed-form function of the configuration.
std::size_t parameter_count(const ModelConfig& config);

struct DispOutput {
  std::vector<Tensor> disparities;  // per scale, [B,1,ceil(H/2^l),ceil(W/2^l)], finest first
};

/// image is [B,3,H,W] in [0,1].
/// Training mode updates the batch-norm running statistics held in params.
DispOutput disp_net_forward(ParamStore& params, const ModelConfig& config, const Tensor& image, Mode mode);

struct PoseExpOutput {
  std::vector<Tensor> poses;                // per source, [B,6] target-to-source (tx,ty,tz,rx,ry,rz)
  Tensor raw_pose;                          // [B,6*(N-1)] before splitting
  std::vector<Tensor> mask_logits;          // per scale, [B,2*(N-1),h,w]
  std::vector<std::vector<Tensor>> masks;   // [scale][source] -> [B,1,h,w] reliability in [0,1]
};

/// sources are ordered (t-1, t+1); each is [B,3,H,W].
PoseExpOutput pose_exp_net_forward(ParamStore& params, const ModelConfig& config, const Tensor& target,
                                   std::span<const Tensor> sources, Mode mode);

/// Spatial size of scale `level` for an input dimension.
std::size_t scaled_size(std::size_t full, std::size_t level);

}  // namespace ssvo
