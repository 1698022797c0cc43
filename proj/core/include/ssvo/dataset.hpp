#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ssvo/geometry.hpp"
#include "ssvo/synth.hpp"
#include "ssvo/tensor.hpp"
#include "ssvo/trajectory.hpp"

namespace ssvo {

/// Frame indices of one window: previous, target, next.
using FrameTriplet = std::array<std::size_t, 3>;

/// A frame sequence at the working resolution with its sliding-window
/// triplets. Ground-truth fields are empty for plain footage.
struct Dataset {
  CameraIntrinsics intrinsics;
  std::size_t height = 0, width = 0;
  std::vector<std::string> frame_names;
  std::vector<Tensor> frames;  // [1,3,H,W] in [0,1]
  std::vector<FrameTriplet> triplets;

  std::vector<Tensor> depths;                        // [1,1,H,W]
  std::vector<std::vector<std::uint8_t>> corrupted;  // [H*W] per frame
  Trajectory ground_truth;
};

/// Reads frame_*.png (or, if none exist, every *.png) in filename order plus
/// intrinsics.txt, resizing to height x width by area averaging. Optional
/// depth_*.dpt, corrupt_*.png and groundtruth.txt are picked up when present.
Dataset load_dataset(const std::filesystem::path& dir, std::size_t height, std::size_t width);

/// Writes a generated sequence in the layout load_dataset reads. Frames are
/// quantized to 8 bits. `description` lands in scene.txt.
void write_dataset(const std::filesystem::path& dir, const SyntheticSequence& sequence,
                   const std::string& description);

/// The in-memory equivalent of write_dataset followed by load_dataset at the
/// native size, including 8-bit quantization of the frames.
Dataset dataset_from_sequence(const SyntheticSequence& sequence);

/// Dims header (i32 width, i32 height) then row-major float32, all big-endian.
void write_depth_dpt(const std::filesystem::path& path, const Tensor& depth);
Tensor read_depth_dpt(const std::filesystem::path& path);

/// Sliding windows of three consecutive frames.
std::vector<FrameTriplet> sliding_triplets(std::size_t frames);

}  // namespace ssvo
