#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Geometry>

#include "ssvo/geometry.hpp"

namespace ssvo {

/// Camera-to-world pose at a timestamp, kept in TUM's native form so files
/// read and written back are unchanged.
struct StampedPose {
  double timestamp = 0;
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();  // (qx, qy, qz, qw)

  SE3Transform transform() const;
  /// Quaternion sign chosen with qw >= 0.
  static StampedPose from_transform(double timestamp, const SE3Transform& pose);
};

using Trajectory = std::vector<StampedPose>;

/// Throws ConfigError unless timestamps strictly increase.
void validate_trajectory(const Trajectory& trajectory);

/// One "timestamp tx ty tz qx qy qz qw" line per pose. Numbers use the
/// shortest text that parses back to the same double.
std::string format_tum(const Trajectory& trajectory);
Trajectory parse_tum(const std::string& text);
Trajectory read_tum(const std::filesystem::path& path);
void write_tum(const std::filesystem::path& path, const Trajectory& trajectory);

/// Chains per-step camera motions: P_0 = I, P_{k+1} = P_k * M_k, where M_k is
/// camera k+1's pose in camera k's frame (the inverse of the point transform
/// from frame k into frame k+1). Timestamps are t0 + k * dt.
Trajectory integrate_poses(std::span<const SE3Transform> motions, double t0 = 0.0, double dt = 1.0);

/// M_k = P_k^-1 P_{k+1}; integrate_poses inverts this.
std::vector<SE3Transform> relative_motions(const Trajectory& trajectory);

/// Sum of consecutive position distances.
double path_length(const Trajectory& trajectory);

/// Geodesic angle of a rotation, degrees.
double rotation_angle_deg(const Eigen::Matrix3d& r);

}  // namespace ssvo
