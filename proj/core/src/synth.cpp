#include "ssvo/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Geometry>
#include <fmt/format.h>

#include "ssvo/errors.hpp"
#include "ssvo/warp.hpp"

namespace ssvo {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double lattice(std::uint64_t seed, std::int64_t ix, std::int64_t iy, std::uint64_t layer) {
  std::uint64_t h = splitmix(seed ^ splitmix(layer));
  h = splitmix(h ^ static_cast<std::uint64_t>(ix));
  h = splitmix(h ^ static_cast<std::uint64_t>(iy));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double fade(double t) { return t * t * t * (t * (t * 6 - 15) + 10); }

double value_noise(std::uint64_t seed, double x, double y, std::uint64_t layer) {
  const double fx = std::floor(x), fy = std::floor(y);
  const auto ix = static_cast<std::int64_t>(fx), iy = static_cast<std::int64_t>(fy);
  const double tx = fade(x - fx), ty = fade(y - fy);
  const double a = lattice(seed, ix, iy, layer), b = lattice(seed, ix + 1, iy, layer);
  const double c = lattice(seed, ix, iy + 1, layer), d = lattice(seed, ix + 1, iy + 1, layer);
  return (a * (1 - tx) + b * tx) * (1 - ty) + (c * (1 - tx) + d * tx) * ty;
}

double fractal(const SceneSpec& s, double x, double y, std::uint64_t layer) {
  double total = 0, norm = 0, amp = 1, freq = 1.0 / s.texture_scale;
  for (std::size_t o = 0; o < s.texture_octaves; ++o) {
    total += amp * value_noise(s.seed, x * freq, y * freq, layer * 16 + o);
    norm += amp;
    amp *= 0.5;
    freq *= 2.0;
  }
  return total / norm;
}

}  // namespace

double SceneSpec::height(double x, double y) const {
  double z = base_depth;
  for (const auto& b : bumps) z += b.amplitude * std::cos(b.kx * x + b.ky * y + b.phase);
  return z;
}

Eigen::Vector2d SceneSpec::slope(double x, double y) const {
  Eigen::Vector2d g = Eigen::Vector2d::Zero();
  for (const auto& b : bumps) {
    const double s = -b.amplitude * std::sin(b.kx * x + b.ky * y + b.phase);
    g += Eigen::Vector2d(s * b.kx, s * b.ky);
  }
  return g;
}

Eigen::Vector3d SceneSpec::albedo(double x, double y) const {
  const double shared = fractal(*this, x, y, 0);
  Eigen::Vector3d out;
  for (int c = 0; c < 3; ++c) {
    const double own = fractal(*this, x, y, 1 + static_cast<std::uint64_t>(c));
    // Contrast stretch around 0.5; fractal noise concentrates near the middle.
    const double v = 0.5 + 2.2 * (0.75 * shared + 0.25 * own - 0.5);
    out[c] = 0.1 + 0.5 * std::clamp(v, 0.0, 1.0);
  }
  return out;
}

SceneSpec random_scene(std::uint64_t seed, SceneFamily family, double base_depth) {
  std::mt19937_64 rng(splitmix(seed ^ 0x5ce7eULL));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SceneSpec s;
  s.base_depth = base_depth;
  s.seed = seed;
  const bool a = family == SceneFamily::a;
  const std::size_t count = a ? 6 : 8;
  const double total_amplitude = (a ? 0.18 : 0.22) * base_depth;
  const double min_wavelength = (a ? 1.2 : 0.9) * base_depth, max_wavelength = (a ? 3.0 : 1.8) * base_depth;
  s.texture_scale = a ? 0.2 : 0.12;
  s.texture_octaves = 3;
  std::vector<double> weights(count);
  double wsum = 0;
  for (auto& w : weights) wsum += (w = 0.3 + unit(rng));
  for (std::size_t i = 0; i < count; ++i) {
    const double wavelength = min_wavelength + (max_wavelength - min_wavelength) * unit(rng);
    const double angle = 2 * std::numbers::pi * unit(rng);
    const double k = 2 * std::numbers::pi / wavelength;
    s.bumps.push_back({total_amplitude * weights[i] / wsum, k * std::cos(angle), k * std::sin(angle),
                       2 * std::numbers::pi * unit(rng)});
  }
  return s;
}

SceneSpec flat_scene(std::uint64_t seed, double base_depth) {
  SceneSpec s;
  s.base_depth = base_depth;
  s.seed = seed;
  return s;
}

namespace {

struct Hit {
  Eigen::Vector3d point;
  double z_depth;
  double distance;
};

// Ray through a pixel; the direction has unit z-component in the camera
// frame, so the ray parameter is the camera z-depth.
Hit cast(const SceneSpec& scene, const SE3Transform& pose, const CameraIntrinsics& k, double u, double v) {
  const Eigen::Vector3d local((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
  const Eigen::Vector3d dir = pose.R * local;
  const Eigen::Vector3d& origin = pose.t;
  auto g = [&](double s) {
    const Eigen::Vector3d p = origin + s * dir;
    return p.z() - scene.height(p.x(), p.y());
  };
  const double d0 = scene.base_depth;
  if (g(0.0) >= 0) throw ConfigError("render: camera is not above the surface");
  const double step = 0.02 * d0, limit = 3.0 * d0;
  double lo = 0.0, hi = step;
  while (g(hi) < 0) {
    lo = hi;
    hi += step;
    if (hi > limit) throw ConfigError(fmt::format("render: ray through ({}, {}) misses the surface", u, v));
  }
  for (int i = 0; i < 200 && hi - lo > 1e-13 * d0; ++i) {
    const double mid = 0.5 * (lo + hi);
    (g(mid) < 0 ? lo : hi) = mid;
  }
  const double s = 0.5 * (lo + hi);
  return {origin + s * dir, s, s * local.norm()};
}

void check_range(const SceneSpec& scene, const Hit& h) {
  const double d0 = scene.base_depth;
  if (!(h.z_depth >= 0.5 * d0 && h.distance <= 2.0 * d0)) {
    throw ConfigError(fmt::format("render: ray depth {:.4f} (distance {:.4f}) outside [0.5, 2] x d0", h.z_depth,
                                  h.distance));
  }
}

}  // namespace

double ray_distance(const SceneSpec& scene, const SE3Transform& pose, const CameraIntrinsics& k, double u,
                    double v) {
  return cast(scene, pose, k, u, v).distance;
}

RenderedView render_view(const SceneSpec& scene, const SE3Transform& pose, const CameraIntrinsics& k,
                         std::size_t height, std::size_t width) {
  k.validate();
  const std::size_t hw = height * width;
  std::vector<double> image(3 * hw), depth(hw);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const Hit h = cast(scene, pose, k, static_cast<double>(x), static_cast<double>(y));
      check_range(scene, h);
      const std::size_t i = y * width + x;
      depth[i] = h.z_depth;
      Eigen::Vector3d color = scene.albedo(h.point.x(), h.point.y());
      if (scene.headlamp) {
        const Eigen::Vector2d g = scene.slope(h.point.x(), h.point.y());
        const Eigen::Vector3d normal = Eigen::Vector3d(-g.x(), -g.y(), 1.0).normalized();
        const Eigen::Vector3d to_camera = (pose.t - h.point).normalized();
        const double cosine = std::abs(normal.dot(to_camera));
        const double falloff = scene.light_distance / h.distance;
        color *= cosine * falloff * falloff;
      }
      for (int c = 0; c < 3; ++c) image[c * hw + i] = std::clamp(color[c], 0.0, 1.0);
    }
  }
  return {Tensor::from({1, 3, height, width}, std::move(image)), Tensor::from({1, 1, height, width}, std::move(depth))};
}

std::vector<SE3Transform> random_trajectory(const TrajectorySpec& spec, double base_depth) {
  if (spec.step_translation <= 0 || spec.step_translation > 0.02) {
    throw ConfigError("trajectory: step translation must be in (0, 0.02] x d0");
  }
  if (spec.max_step_rotation_deg < 0 || spec.max_step_rotation_deg > 2.0) {
    throw ConfigError("trajectory: step rotation must be in [0, 2] degrees");
  }
  std::mt19937_64 rng(splitmix(spec.seed ^ 0x7a1ULL));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double max_rot = spec.max_step_rotation_deg * std::numbers::pi / 180.0;
  const double step = spec.step_translation * base_depth;

  std::vector<SE3Transform> poses{SE3Transform::identity()};
  double heading = 2 * std::numbers::pi * unit(rng);
  Eigen::Vector3d omega = Eigen::Vector3d::Zero();
  while (poses.size() < spec.frames) {
    const SE3Transform& p = poses.back();
    heading += 0.3 * gauss(rng);
    // Mean reversion keeps the camera near its starting height and attitude.
    const double vz = std::clamp(0.25 * gauss(rng) - 4.0 * p.t.z() / base_depth, -0.5, 0.5);
    Eigen::Vector3d world_v(std::cos(heading), std::sin(heading), vz);
    world_v *= step / world_v.norm();

    const Eigen::AngleAxisd attitude(p.R);
    const Eigen::Vector3d phi = attitude.angle() * attitude.axis();
    for (int a = 0; a < 3; ++a) omega[a] = 0.6 * omega[a] + 0.5 * max_rot * gauss(rng);
    omega -= 0.15 * phi;
    if (omega.norm() > max_rot) omega *= max_rot / omega.norm();

    SE3Transform motion;
    motion.R = omega.norm() > 0 ? Eigen::AngleAxisd(omega.norm(), omega.normalized()).toRotationMatrix()
                                : Eigen::Matrix3d::Identity();
    motion.t = p.R.transpose() * world_v;
    poses.push_back(transform_compose(p, motion));
  }
  return poses;
}

CameraIntrinsics default_intrinsics(std::size_t height, std::size_t width) {
  const double f = 50.0 * static_cast<double>(width) / 104.0;
  return {f, f, (static_cast<double>(width) - 1) / 2, (static_cast<double>(height) - 1) / 2};
}

namespace {

void apply_corruption(const SceneSpec& scene, std::size_t frame_index, SyntheticFrame& frame) {
  const auto& c = scene.corruption;
  const std::size_t h = frame.image.dim(2), w = frame.image.dim(3), hw = h * w;
  frame.corrupted.assign(hw, 0);
  if (c.specular_blobs == 0 && c.occluders == 0) return;
  std::mt19937_64 rng(splitmix(scene.seed ^ splitmix(0xb10bULL + frame_index)));
  std::uniform_real_distribution<double> ux(0.0, static_cast<double>(w) - 1), uy(0.0, static_cast<double>(h) - 1);
  const double px_scale = static_cast<double>(w) / 104.0;
  auto data = frame.image.mutable_data();
  const std::vector<double> clean(data.begin(), data.end());
  auto disc = [&](double radius, auto&& shade) {
    const double cu = ux(rng), cv = uy(rng), r = radius * px_scale;
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const double du = static_cast<double>(x) - cu, dv = static_cast<double>(y) - cv;
        if (du * du + dv * dv > r * r) continue;
        for (std::size_t ch = 0; ch < 3; ++ch) shade(data[ch * hw + y * w + x]);
      }
    }
  };
  for (std::size_t i = 0; i < c.specular_blobs; ++i) {
    disc(c.blob_radius, [&](double& v) { v = std::min(1.0, v + c.blob_strength); });
  }
  for (std::size_t i = 0; i < c.occluders; ++i) {
    disc(c.occluder_radius, [&](double& v) { v = c.occluder_intensity; });
  }
  for (std::size_t i = 0; i < hw; ++i) {
    for (std::size_t ch = 0; ch < 3; ++ch) {
      if (data[ch * hw + i] != clean[ch * hw + i]) frame.corrupted[i] = 1;
    }
  }
}

}  // namespace

SyntheticSequence generate_dataset(const SceneSpec& scene, std::span<const SE3Transform> trajectory,
                                   const CameraIntrinsics& k, std::size_t height, std::size_t width) {
  if (trajectory.size() < 3) throw ConfigError("generate_dataset: trajectory needs at least 3 poses");
  SyntheticSequence seq;
  seq.intrinsics = k;
  seq.height = height;
  seq.width = width;
  seq.poses.assign(trajectory.begin(), trajectory.end());
  for (std::size_t i = 0; i < trajectory.size(); ++i) {
    RenderedView view = render_view(scene, trajectory[i], k, height, width);
    SyntheticFrame frame{view.image, view.depth, {}};
    apply_corruption(scene, i, frame);
    seq.frames.push_back(std::move(frame));
  }
  const std::size_t hw = height * width;
  for (std::size_t t = 1; t + 1 < trajectory.size(); ++t) {
    GroundTruthSample s;
    s.frames = {t - 1, t, t + 1};
    s.depth = seq.frames[t].depth;
    s.target_to_prev = transform_compose(transform_invert(trajectory[t - 1]), trajectory[t]);
    s.target_to_next = transform_compose(transform_invert(trajectory[t + 1]), trajectory[t]);
    s.corruption_mask.assign(hw, 0);
    bool overlapping = true;
    for (std::size_t src = 0; src < 2; ++src) {
      const SE3Transform& T = src == 0 ? s.target_to_prev : s.target_to_next;
      const auto& source_frame = seq.frames[src == 0 ? t - 1 : t + 1];
      auto& mask = s.source_corruption[src];
      mask.assign(hw, 0);
      std::size_t inside = 0;
      for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
          const std::size_t i = y * width + x;
          bool bad = seq.frames[t].corrupted[i] != 0;
          const Projection p = project({static_cast<double>(x), static_cast<double>(y)}, s.depth.data()[i], T, k);
          if (p.valid && p.pixel.x() >= 0 && p.pixel.y() >= 0 && p.pixel.x() <= static_cast<double>(width) - 1 &&
              p.pixel.y() <= static_cast<double>(height) - 1) {
            ++inside;
            const auto x0 = static_cast<std::size_t>(p.pixel.x()), y0 = static_cast<std::size_t>(p.pixel.y());
            const std::size_t x1 = std::min(x0 + 1, width - 1), y1 = std::min(y0 + 1, height - 1);
            for (std::size_t yy : {y0, y1}) {
              for (std::size_t xx : {x0, x1}) bad = bad || source_frame.corrupted[yy * width + xx] != 0;
            }
          }
          mask[i] = bad ? 1 : 0;
          s.corruption_mask[i] = static_cast<std::uint8_t>(s.corruption_mask[i] | mask[i]);
        }
      }
      if (inside * 20 < hw) overlapping = false;
    }
    if (!overlapping) {
      ++seq.dropped_windows;
      continue;
    }
    seq.samples.push_back(std::move(s));
  }
  return seq;
}

std::array<double, 2> ground_truth_residual(const SyntheticSequence& seq, const GroundTruthSample& sample) {
  std::array<double, 2> out{};
  const Tensor& target = seq.frames[sample.frames[1]].image;
  const std::size_t hw = seq.height * seq.width;
  for (std::size_t src = 0; src < 2; ++src) {
    const SE3Transform& T = src == 0 ? sample.target_to_prev : sample.target_to_next;
    std::vector<double> m(12);
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) m[static_cast<std::size_t>(r * 3 + c)] = T.R(r, c);
      m[static_cast<std::size_t>(9 + r)] = T.t[r];
    }
    const WarpResult w = inverse_warp_matrix(seq.frames[sample.frames[src == 0 ? 0 : 2]].image, sample.depth,
                                             Tensor::from({1, 12}, m), seq.intrinsics);
    double total = 0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < hw; ++i) {
      if (!w.valid[i] || sample.source_corruption[src][i]) continue;
      for (std::size_t c = 0; c < 3; ++c) total += std::abs(target.data()[c * hw + i] - w.synthesized.data()[c * hw + i]);
      count += 3;
    }
    out[src] = count ? total / static_cast<double>(count) : 0.0;
  }
  return out;
}

}  // namespace ssvo
