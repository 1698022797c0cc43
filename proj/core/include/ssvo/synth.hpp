#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "ssvo/geometry.hpp"
#include "ssvo/tensor.hpp"

namespace ssvo {

struct CosineBump {
  double amplitude = 0;  // scene units
  double kx = 0, ky = 0;  // spatial frequency, rad per scene unit
  double phase = 0;
};

struct CorruptionSpec {
  std::size_t specular_blobs = 0;  // saturated additive discs per frame
  std::size_t occluders = 0;       // opaque dark discs per frame
  double blob_radius = 3.0;        // pixels, at 104 px width
  double blob_strength = 0.8;
  double occluder_radius = 4.0;
  double occluder_intensity = 0.05;
};

/// A textured height field z = d0 + sum of cosine bumps, in world
/// coordinates with +z pointing away from a camera at the origin.
struct SceneSpec {
  double base_depth = 1.0;
  std::vector<CosineBump> bumps;
  double texture_scale = 0.08;  // size of the coarsest noise cell, scene units
  std::size_t texture_octaves = 3;
  bool headlamp = true;
  double light_distance = 1.0;  // headlamp gain is (light_distance / r)^2
  CorruptionSpec corruption;
  std::uint64_t seed = 0;

  double height(double x, double y) const;
  /// dz/dx, dz/dy.
  Eigen::Vector2d slope(double x, double y) const;
  Eigen::Vector3d albedo(double x, double y) const;
};

/// Scene family: bumps and texture statistics differ between families.
enum class SceneFamily { a, b };

/// Random scene: up to eight bumps with total amplitude at most 0.3 * d0.
SceneSpec random_scene(std::uint64_t seed, SceneFamily family = SceneFamily::a, double base_depth = 1.0);

/// A scene with no bumps.
SceneSpec flat_scene(std::uint64_t seed, double base_depth = 1.0);

struct RenderedView {
  Tensor image;  // [1,3,H,W] in [0,1], Lambertian
  Tensor depth;  // [1,1,H,W] z-depth in the camera frame
};

/// Ray-casts every pixel of a camera with camera-to-world pose `pose`.
/// Throws ConfigError if a ray misses the surface or leaves [0.5 d0, 2 d0].
RenderedView render_view(const SceneSpec& scene, const SE3Transform& pose, const CameraIntrinsics& k,
                         std::size_t height, std::size_t width);

/// Distance along the ray through pixel (u, v) from the camera centre.
double ray_distance(const SceneSpec& scene, const SE3Transform& pose, const CameraIntrinsics& k, double u,
                    double v);

struct TrajectorySpec {
  std::size_t frames = 40;
  double step_translation = 0.015;  // fraction of d0 per step, at most 0.02
  double max_step_rotation_deg = 2.0;
  std::uint64_t seed = 0;
};

/// Smooth random walk of camera-to-world poses starting at the identity.
/// Every step moves at most 2% of d0 and rotates at most 2 degrees.
std::vector<SE3Transform> random_trajectory(const TrajectorySpec& spec, double base_depth = 1.0);

/// Intrinsics used for generated data: focal length ~0.48 * width.
CameraIntrinsics default_intrinsics(std::size_t height, std::size_t width);

struct SyntheticFrame {
  Tensor image;                          // [1,3,H,W] after corruption
  Tensor depth;                          // [1,1,H,W]
  std::vector<std::uint8_t> corrupted;   // [H,W], pixels differing from the clean render
};

struct GroundTruthSample {
  std::array<std::size_t, 3> frames{};   // prev, target, next
  Tensor depth;                          // target depth [1,1,H,W]
  SE3Transform target_to_prev;
  SE3Transform target_to_next;
  /// Target pixels whose photometric comparison against each source involves
  /// a corrupted pixel in either view.
  std::array<std::vector<std::uint8_t>, 2> source_corruption;
  std::vector<std::uint8_t> corruption_mask;  // union over sources
};

struct SyntheticSequence {
  CameraIntrinsics intrinsics;
  std::size_t height = 0, width = 0;
  std::vector<SE3Transform> poses;  // camera-to-world
  std::vector<SyntheticFrame> frames;
  std::vector<GroundTruthSample> samples;
  std::size_t dropped_windows = 0;
};

/// Renders the trajectory and forms one sample per sliding window of three
/// frames. Windows where a source sees less than 5% of the target are dropped.
SyntheticSequence generate_dataset(const SceneSpec& scene, std::span<const SE3Transform> trajectory,
                                   const CameraIntrinsics& k, std::size_t height, std::size_t width);

/// Mean absolute residual between the target and each GT-warped source over
/// pixels valid in the warp and not corrupted, per source.
std::array<double, 2> ground_truth_residual(const SyntheticSequence& sequence, const GroundTruthSample& sample);

}  // namespace ssvo
