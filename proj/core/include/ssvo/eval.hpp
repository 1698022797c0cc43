#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "ssvo/dataset.hpp"
#include "ssvo/models.hpp"
#include "ssvo/trajectory.hpp"

namespace ssvo {

/// x -> scale * R x + t
struct Similarity {
  double scale = 1.0;
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();

  Eigen::Vector3d apply(const Eigen::Vector3d& x) const { return scale * (R * x) + t; }
};

enum class Alignment { similarity, rigid };

struct AteResult {
  double rmse = 0;
  Similarity alignment;  // maps estimated positions onto ground truth
  Trajectory aligned;    // the estimate after alignment
};

/// Least-squares closed-form alignment of estimated onto ground-truth
/// positions, then the RMSE of the residuals. Trajectories must have equal
/// length, matching timestamps and at least 3 poses.
AteResult ate(const Trajectory& estimated, const Trajectory& ground_truth, Alignment alignment = Alignment::similarity);

struct ErrorBucket {
  double length = 0;         // target path length
  double trans_err = 0;      // mean translation error, same units as length
  double rot_err_deg = 0;    // mean geodesic rotation error
  std::size_t count = 0;     // 0: the bucket is absent
  bool present() const { return count > 0; }
};

struct ErrorCurve {
  std::vector<ErrorBucket> buckets;
};

/// For each start pose and target length L, the span ends at the first pose
/// where the accumulated ground-truth path length reaches L. The estimated
/// relative motion over the span (translation scaled by the global
/// similarity scale) is compared with the true one; errors are averaged per
/// bucket.
ErrorCurve error_vs_length(const Trajectory& estimated, const Trajectory& ground_truth,
                           std::span<const double> lengths);

/// CSV with header bucket_cm,trans_err,rot_err_deg,count (means per bucket;
/// trajectory units taken as metres). Absent buckets have empty error fields.
std::string format_error_curve(const ErrorCurve& curve);

struct DepthMetrics {
  double abs_rel = 0;
  double rmse = 0;
  double delta_125 = 0;  // fraction with max(p/g, g/p) < 1.25
  double scale = 1;      // median(gt) / median(pred)
  std::size_t pixels = 0;
  bool degenerate_ground_truth = false;  // every valid GT value equal
};

/// Predicted depth is 1/disparity scaled so its median matches the
/// ground-truth median. Pixels with non-positive or non-finite GT, or a zero
/// entry in `valid` (if given), are ignored.
DepthMetrics depth_metrics(std::span<const double> predicted_disparity, std::span<const double> ground_truth_depth,
                           std::span<const std::uint8_t> valid = {});

/// Per-image metrics averaged over images.
DepthMetrics mean_depth_metrics(std::span<const DepthMetrics> per_image);

/// Finest-scale disparity [1,1,H,W] for one image [1,3,H,W], inference mode.
Tensor predict_disparity(ParamStore& params, const ModelConfig& model, const Tensor& image);

struct TripletMotion {
  SE3Transform target_to_prev;
  SE3Transform target_to_next;
};

/// Pose-network estimates for every triplet of a dataset, inference mode.
std::vector<TripletMotion> predict_motions(ParamStore& params, const ModelConfig& model, const Dataset& dataset,
                                           std::size_t batch_size = 8);

/// Per-step camera motions M_k (see integrate_poses) for a sequence of
/// `frames` frames covered by consecutive triplets. Where two triplets
/// observe the same step their estimates are averaged.
std::vector<SE3Transform> chain_triplet_motions(std::span<const TripletMotion> triplets);

/// Geodesic angles between matching rotations, degrees.
std::vector<double> rotation_errors_deg(std::span<const SE3Transform> estimated,
                                        std::span<const SE3Transform> ground_truth);

struct DisparityExport {
  Tensor disparity;  // [1,1,H,W]
  double min = 0;
  double max = 0;
};

/// Writes <prefix>.png (min-max normalized to 0..255; a constant map is all
/// 0), <prefix>.txt (min and max) and <prefix>.disp (u32 height, u32 width,
/// then f64 values, little-endian).
void write_disparity(const std::filesystem::path& prefix, const DisparityExport& disparity);
DisparityExport export_disparity(ParamStore& params, const ModelConfig& model, const Tensor& image,
                                 const std::filesystem::path& prefix);
Tensor read_raw_disparity(const std::filesystem::path& path);

}  // namespace ssvo
