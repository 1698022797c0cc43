#include "ssvo/eval.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>

#include <Eigen/Geometry>
#include <fmt/format.h>

#include "ssvo/errors.hpp"
#include "ssvo/image.hpp"

namespace ssvo {

namespace fs = std::filesystem;

namespace {

Eigen::Matrix3Xd positions(const Trajectory& t) {
  Eigen::Matrix3Xd m(3, static_cast<Eigen::Index>(t.size()));
  for (std::size_t i = 0; i < t.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = t[i].translation;
  return m;
}

void check_matched(const Trajectory& est, const Trajectory& gt) {
  if (est.size() != gt.size()) {
    throw ConfigError(fmt::format("trajectories differ in length ({} vs {})", est.size(), gt.size()));
  }
  for (std::size_t i = 0; i < est.size(); ++i) {
    if (std::abs(est[i].timestamp - gt[i].timestamp) > 1e-6) {
      throw ConfigError(fmt::format("timestamps differ at pose {}", i));
    }
  }
}

double median(std::vector<double> v) {
  const std::size_t n = v.size();
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n / 2), v.end());
  const double hi = v[n / 2];
  if (n % 2) return hi;
  return 0.5 * (hi + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n / 2)));
}

}  // namespace

AteResult ate(const Trajectory& estimated, const Trajectory& ground_truth, Alignment alignment) {
  check_matched(estimated, ground_truth);
  if (estimated.size() < 3) throw ConfigError("ATE needs at least 3 poses");
  const Eigen::Matrix3Xd src = positions(estimated), dst = positions(ground_truth);
  AteResult r;
  const Eigen::Vector3d src_mean = src.rowwise().mean();
  if (alignment == Alignment::similarity && (src.colwise() - src_mean).squaredNorm() == 0.0) {
    // A stationary estimate: the best similarity collapses it onto the
    // ground-truth centroid.
    r.alignment.scale = 0.0;
    r.alignment.t = dst.rowwise().mean();
  } else {
    const Eigen::Matrix4d T = Eigen::umeyama(src, dst, alignment == Alignment::similarity);
    const Eigen::Matrix3d sR = T.topLeftCorner<3, 3>();
    r.alignment.scale = alignment == Alignment::similarity ? std::cbrt(sR.determinant()) : 1.0;
    r.alignment.R = sR / r.alignment.scale;
    r.alignment.t = T.topRightCorner<3, 1>();
  }
  double sq = 0;
  for (std::size_t i = 0; i < estimated.size(); ++i) {
    StampedPose p = estimated[i];
    p.translation = r.alignment.apply(estimated[i].translation);
    p.rotation = Eigen::Quaterniond(r.alignment.R * estimated[i].transform().R);
    if (p.rotation.w() < 0) p.rotation.coeffs() *= -1.0;
    sq += (p.translation - ground_truth[i].translation).squaredNorm();
    r.aligned.push_back(p);
  }
  r.rmse = std::sqrt(sq / static_cast<double>(estimated.size()));
  return r;
}

ErrorCurve error_vs_length(const Trajectory& estimated, const Trajectory& ground_truth,
                           std::span<const double> lengths) {
  check_matched(estimated, ground_truth);
  const std::size_t n = ground_truth.size();
  if (n < 3) throw ConfigError("error_vs_length needs at least 3 poses");
  std::vector<double> cumulative(n, 0.0);
  for (std::size_t i = 1; i < n; ++i) {
    cumulative[i] = cumulative[i - 1] + (ground_truth[i].translation - ground_truth[i - 1].translation).norm();
  }
  for (double L : lengths) {
    if (!(L > 0)) throw ConfigError("bucket lengths must be positive");
    if (L > cumulative.back()) {
      throw ConfigError(fmt::format("bucket length {} exceeds the ground-truth path length {}", L, cumulative.back()));
    }
  }
  const double scale = ate(estimated, ground_truth, Alignment::similarity).alignment.scale;
  std::vector<SE3Transform> est(n), gt(n);
  for (std::size_t i = 0; i < n; ++i) {
    est[i] = estimated[i].transform();
    est[i].t *= scale;
    gt[i] = ground_truth[i].transform();
  }
  ErrorCurve curve;
  for (double L : lengths) {
    ErrorBucket b;
    b.length = L;
    for (std::size_t i = 0; i < n; ++i) {
      const auto end = std::lower_bound(cumulative.begin() + static_cast<std::ptrdiff_t>(i), cumulative.end(),
                                        cumulative[i] + L);
      if (end == cumulative.end()) break;
      const auto j = static_cast<std::size_t>(end - cumulative.begin());
      const SE3Transform g = transform_compose(transform_invert(gt[i]), gt[j]);
      const SE3Transform e = transform_compose(transform_invert(est[i]), est[j]);
      const SE3Transform err = transform_compose(transform_invert(g), e);
      b.trans_err += err.t.norm();
      b.rot_err_deg += rotation_angle_deg(err.R);
      ++b.count;
    }
    if (b.count) {
      b.trans_err /= static_cast<double>(b.count);
      b.rot_err_deg /= static_cast<double>(b.count);
    }
    curve.buckets.push_back(b);
  }
  return curve;
}

std::string format_error_curve(const ErrorCurve& curve) {
  std::string out = "bucket_cm,trans_err,rot_err_deg,count\n";
  for (const auto& b : curve.buckets) {
    if (b.present()) {
      out += fmt::format("{},{:.9g},{:.9g},{}\n", b.length * 100.0, b.trans_err, b.rot_err_deg, b.count);
    } else {
      out += fmt::format("{},,,0\n", b.length * 100.0);
    }
  }
  return out;
}

DepthMetrics depth_metrics(std::span<const double> predicted_disparity, std::span<const double> ground_truth_depth,
                           std::span<const std::uint8_t> valid) {
  if (predicted_disparity.size() != ground_truth_depth.size() || (!valid.empty() && valid.size() != ground_truth_depth.size())) {
    throw ShapeError("depth_metrics: input sizes differ");
  }
  std::vector<double> pred, gt;
  for (std::size_t i = 0; i < ground_truth_depth.size(); ++i) {
    const double g = ground_truth_depth[i], d = predicted_disparity[i];
    if (!(g > 0) || !std::isfinite(g) || (!valid.empty() && !valid[i])) continue;
    if (!(d > 0) || !std::isfinite(d)) throw NumericalError("depth_metrics: disparity must be positive and finite");
    pred.push_back(1.0 / d);
    gt.push_back(g);
  }
  if (gt.empty()) throw ConfigError("depth_metrics: no valid ground-truth pixel");
  DepthMetrics m;
  m.pixels = gt.size();
  m.degenerate_ground_truth = std::all_of(gt.begin(), gt.end(), [&](double g) { return g == gt[0]; });
  m.scale = median(gt) / median(pred);
  double sq = 0;
  std::size_t inside = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const double p = pred[i] * m.scale, g = gt[i];
    m.abs_rel += std::abs(p - g) / g;
    sq += (p - g) * (p - g);
    if (std::max(p / g, g / p) < 1.25) ++inside;
  }
  const auto n = static_cast<double>(gt.size());
  m.abs_rel /= n;
  m.rmse = std::sqrt(sq / n);
  m.delta_125 = static_cast<double>(inside) / n;
  return m;
}

DepthMetrics mean_depth_metrics(std::span<const DepthMetrics> per_image) {
  if (per_image.empty()) throw ConfigError("mean_depth_metrics: no images");
  DepthMetrics m;
  m.scale = 0;
  for (const auto& x : per_image) {
    m.abs_rel += x.abs_rel;
    m.rmse += x.rmse;
    m.delta_125 += x.delta_125;
    m.scale += x.scale;
    m.pixels += x.pixels;
    m.degenerate_ground_truth = m.degenerate_ground_truth || x.degenerate_ground_truth;
  }
  const auto n = static_cast<double>(per_image.size());
  m.abs_rel /= n;
  m.rmse /= n;
  m.delta_125 /= n;
  m.scale /= n;
  return m;
}

Tensor predict_disparity(ParamStore& params, const ModelConfig& model, const Tensor& image) {
  return disp_net_forward(params, model, image, Mode::inference).disparities.at(0).detach();
}

std::vector<TripletMotion> predict_motions(ParamStore& params, const ModelConfig& model, const Dataset& dataset,
                                           std::size_t batch_size) {
  std::vector<TripletMotion> out;
  const std::size_t n = dataset.triplets.size();
  for (std::size_t first = 0; first < n; first += batch_size) {
    std::array<std::vector<Tensor>, 3> parts;
    const std::size_t last = std::min(n, first + batch_size);
    for (std::size_t i = first; i < last; ++i) {
      for (std::size_t j = 0; j < 3; ++j) parts[j].push_back(dataset.frames[dataset.triplets[i][j]]);
    }
    const std::array<Tensor, 2> sources{stack_batch(parts[0]), stack_batch(parts[2])};
    const PoseExpOutput pose = pose_exp_net_forward(params, model, stack_batch(parts[1]), sources, Mode::inference);
    for (std::size_t b = 0; b < last - first; ++b) {
      TripletMotion m;
      for (std::size_t s = 0; s < 2; ++s) {
        const auto v = pose.poses[s].data().subspan(6 * b, 6);
        (s == 0 ? m.target_to_prev : m.target_to_next) = pose_vec_to_transform({v[0], v[1], v[2], v[3], v[4], v[5]});
      }
      out.push_back(m);
    }
  }
  return out;
}

std::vector<SE3Transform> chain_triplet_motions(std::span<const TripletMotion> triplets) {
  // Triplet t (centred on frame t+1) sees step t through its previous source
  // and step t+1 through its next source.
  const std::size_t steps = triplets.size() + 1;
  std::vector<SE3Transform> out(steps);
  for (std::size_t k = 0; k < steps; ++k) {
    std::vector<SE3Transform> estimates;
    if (k < triplets.size()) estimates.push_back(triplets[k].target_to_prev);
    if (k >= 1) estimates.push_back(transform_invert(triplets[k - 1].target_to_next));
    if (estimates.size() == 1) {
      out[k] = estimates[0];
      continue;
    }
    const Eigen::Quaterniond a(estimates[0].R), b(estimates[1].R);
    out[k].R = a.slerp(0.5, b).toRotationMatrix();
    out[k].t = 0.5 * (estimates[0].t + estimates[1].t);
  }
  return out;
}

std::vector<double> rotation_errors_deg(std::span<const SE3Transform> estimated,
                                        std::span<const SE3Transform> ground_truth) {
  if (estimated.size() != ground_truth.size()) throw ConfigError("rotation_errors_deg: lengths differ");
  std::vector<double> out;
  for (std::size_t i = 0; i < estimated.size(); ++i) {
    out.push_back(rotation_angle_deg(estimated[i].R.transpose() * ground_truth[i].R));
  }
  return out;
}

void write_disparity(const fs::path& prefix, const DisparityExport& d) {
  const std::size_t h = d.disparity.dim(2), w = d.disparity.dim(3);
  Image8 img{w, h, 1, std::vector<std::uint8_t>(h * w, 0)};
  const double range = d.max - d.min;
  if (range > 0) {
    for (std::size_t i = 0; i < h * w; ++i) {
      img.pixels[i] = static_cast<std::uint8_t>(std::lround(255.0 * (d.disparity.data()[i] - d.min) / range));
    }
  }
  write_png(fs::path(prefix.string() + ".png"), img);

  std::ofstream side(prefix.string() + ".txt");
  side << fmt::format("min={:.17g}\nmax={:.17g}\n", d.min, d.max);
  if (!side) throw IoError(fmt::format("failed writing '{}.txt'", prefix.string()));

  std::ofstream raw(prefix.string() + ".disp", std::ios::binary);
  auto put32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) raw.put(static_cast<char>((v >> (8 * i)) & 0xff));
  };
  put32(static_cast<std::uint32_t>(h));
  put32(static_cast<std::uint32_t>(w));
  for (double v : d.disparity.data()) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) raw.put(static_cast<char>((bits >> (8 * i)) & 0xff));
  }
  if (!raw) throw IoError(fmt::format("failed writing '{}.disp'", prefix.string()));
}

Tensor read_raw_disparity(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open '{}'", path.string()));
  auto get = [&](int bytes) {
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) {
      const int c = in.get();
      if (c == EOF) throw IoError(fmt::format("truncated disparity file '{}'", path.string()));
      v |= static_cast<std::uint64_t>(c) << (8 * i);
    }
    return v;
  };
  const std::size_t h = get(4), w = get(4);
  if (h == 0 || w == 0 || h > 1 << 16 || w > 1 << 16) throw IoError(fmt::format("bad header in '{}'", path.string()));
  std::vector<double> values(h * w);
  for (auto& v : values) v = std::bit_cast<double>(get(8));
  return Tensor::from({1, 1, h, w}, std::move(values));
}

DisparityExport export_disparity(ParamStore& params, const ModelConfig& model, const Tensor& image,
                                 const fs::path& prefix) {
  if (image.rank() != 4 || image.dim(0) != 1 || image.dim(2) != model.disp.height || image.dim(3) != model.disp.width) {
    throw ConfigError(fmt::format("image {} does not match the model input {}x{}", to_string(image.shape()),
                                  model.disp.height, model.disp.width));
  }
  DisparityExport d;
  d.disparity = predict_disparity(params, model, image);
  const auto [lo, hi] = std::minmax_element(d.disparity.data().begin(), d.disparity.data().end());
  d.min = *lo;
  d.max = *hi;
  write_disparity(prefix, d);
  return d;
}

}  // namespace ssvo
