#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ssvo/tensor.hpp"

namespace ssvo {

/// Interleaved 8-bit image as stored in PNG files.
struct Image8 {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 0;  // 1 or 3
  std::vector<std::uint8_t> pixels;
};

Image8 read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image8& image);

/// [1,3,H,W] in [0,1]; grayscale inputs are replicated to three channels.
/// An 8-bit 255 maps to exactly 1.0.
Tensor image_to_tensor(const Image8& image);
/// [1,C,H,W] (C = 1 or 3) in [0,1] -> 8-bit, rounding to nearest.
Image8 tensor_to_image(const Tensor& image);

/// Area-averaging resize of a [N,C,H,W] tensor; every output pixel is the
/// coverage-weighted mean of the input pixels under its footprint.
Tensor resize_area(const Tensor& image, std::size_t height, std::size_t width);

/// Stacks [1,C,H,W] tensors into [N,C,H,W] (values only, no graph).
Tensor stack_batch(std::span<const Tensor> images);

}  // namespace ssvo
