#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Core>

#include "ssvo/tensor.hpp"

namespace ssvo {

/// Pinhole intrinsics in pixels. Pixel coordinates are (u, v) = (column, row)
/// with the origin at the centre of the top-left pixel.
struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;

  void validate() const;
  Eigen::Matrix3d matrix() const;
  Eigen::Matrix3d inverse() const;
  /// Intrinsics for an image downsampled `level` times by 2x2 averaging.
  CameraIntrinsics at_level(int level) const;
};

CameraIntrinsics read_intrinsics(const std::filesystem::path& path);
void write_intrinsics(const std::filesystem::path& path, const CameraIntrinsics& k);

/// Translation (scene units) followed by X-Y-Z intrinsic Euler angles (radians).
struct PoseVec6 {
  double tx = 0, ty = 0, tz = 0;
  double rx = 0, ry = 0, rz = 0;
};

/// Rigid transform x -> R x + t.
struct SE3Transform {
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();

  static SE3Transform identity() { return {}; }
  Eigen::Matrix4d matrix() const;
  Eigen::Vector3d apply(const Eigen::Vector3d& x) const { return R * x + t; }
};

/// R = Rx(rx) * Ry(ry) * Rz(rz).
Eigen::Matrix3d euler_xyz_to_rotation(double rx, double ry, double rz);
SE3Transform pose_vec_to_transform(const PoseVec6& v);
/// a * b: apply b first, then a.
SE3Transform transform_compose(const SE3Transform& a, const SE3Transform& b);
SE3Transform transform_invert(const SE3Transform& a);

inline constexpr double kMinProjectedDepth = 1e-8;

struct Projection {
  Eigen::Vector2d pixel;  // continuous, possibly outside the image
  double depth = 0.0;     // z in the source camera
  bool valid = false;     // depth > kMinProjectedDepth
};

/// p_s ~ K T D(p_t) K^-1 p_t for a single pixel.
Projection project(const Eigen::Vector2d& target_pixel, double depth, const SE3Transform& target_to_source,
                   const CameraIntrinsics& k);

/// Differentiable [N,6] pose vectors -> [N,12] rows (R row-major, then t).
Tensor pose_vec_to_matrix(const Tensor& pose);

struct ProjectedGrid {
  Tensor coords;                    // [N,H,W,2] as (u, v)
  std::vector<std::uint8_t> valid;  // [N,H,W]
  std::vector<double> source_depth; // [N,H,W]
};

/// Coordinates written for pixels that land behind the source camera; they
/// are out of bounds for any image and carry no gradient.
inline constexpr double kInvalidCoordinate = -1.0;

/// Dense projection of every target pixel. depth is [N,1,H,W] (strictly
/// positive), transform is [N,12] from pose_vec_to_matrix. Differentiable
/// w.r.t. both.
ProjectedGrid batch_project(const Tensor& depth, const Tensor& transform, const CameraIntrinsics& k);

/// The (u, v) grid of an H x W image as [1,H,W,2].
Tensor pixel_grid(std::size_t height, std::size_t width);

}  // namespace ssvo
