#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "ssvo/tensor.hpp"
#include "ssvo/warp.hpp"

namespace ssvo {

/// Raised when a photometric term has no valid pixel; the caller skips the sample.
class NoValidPixels : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mean over valid pixels and channels of mask * |target - synthesized|.
/// mask is [N,1,H,W] in [0,1] or undefined (treated as all ones).
Tensor photometric_term(const Tensor& target, const WarpResult& warped, const Tensor& mask = {});

/// Sum over sources of photometric_term. masks is empty (unmasked) or holds
/// one mask per source.
Tensor photometric_loss(const Tensor& target, std::span<const WarpResult> warped, std::span<const Tensor> masks = {});

/// Mean |d2/dx2| + mean |d2/dy2| + mean |d2/dxdy| of a [N,1,H,W] disparity
/// map (H, W >= 3), each mean taken over the positions where its stencil fits.
Tensor smoothness_loss(const Tensor& disparity);

/// Channel 2s+1 of each logit pair is "reliable"; the reliability mask is
/// softmax_pairs(logits) at those channels.
inline constexpr std::size_t kReliableChannel = 1;

/// Sum over pairs of the mean per-pixel cross-entropy between softmax(pair)
/// and the label "reliable". logits is [N,2S,H,W].
Tensor mask_regularization(const Tensor& logits);

/// [N,2S,H,W] logits -> S tensors [N,1,H,W] holding the reliable probability.
std::vector<Tensor> reliability_masks(const Tensor& logits);

struct ScaleTerms {
  Tensor vs;      // photometric, summed over sources
  Tensor smooth;  // smoothness of the disparity at this scale
  Tensor reg;     // mask regularization, summed over sources
};

struct LossBreakdown {
  struct Scale {
    double vs = 0, smooth = 0, reg = 0;
  };
  Tensor total;
  std::vector<Scale> per_scale;
  std::vector<double> lambda_s;  // one weight per scale
  double lambda_e = 0;

  /// Sum over scales of vs + lambda_s * smooth + lambda_e * reg.
  double recompose() const;
};

/// 0.5 / 2^l for l in [0, scales).
std::vector<double> default_smoothness_weights(std::size_t scales, double base = 0.5);
inline constexpr double kDefaultMaskWeight = 0.2;

/// Weighted multi-scale objective. Throws NumericalError naming the
/// component and scale if any term is not finite.
LossBreakdown total_loss(std::span<const ScaleTerms> scales, std::span<const double> lambda_s, double lambda_e);

}  // namespace ssvo
