#include "ssvo/geometry.hpp"

#include <cmath>
#include <fstream>

#include <fmt/format.h>

#include "ssvo/errors.hpp"

namespace ssvo {

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0) || !std::isfinite(fx) || !std::isfinite(fy) || !std::isfinite(cx) ||
      !std::isfinite(cy)) {
    throw ConfigError(fmt::format("invalid intrinsics fx={} fy={} cx={} cy={}", fx, fy, cx, cy));
  }
}

Eigen::Matrix3d CameraIntrinsics::matrix() const {
  Eigen::Matrix3d k;
  k << fx, 0, cx, 0, fy, cy, 0, 0, 1;
  return k;
}

Eigen::Matrix3d CameraIntrinsics::inverse() const {
  Eigen::Matrix3d k;
  k << 1 / fx, 0, -cx / fx, 0, 1 / fy, -cy / fy, 0, 0, 1;
  return k;
}

CameraIntrinsics CameraIntrinsics::at_level(int level) const {
  CameraIntrinsics k = *this;
  for (int i = 0; i < level; ++i) {
    // Output pixel j covers input pixels 2j and 2j+1, centred at 2j + 0.5.
    k.fx /= 2;
    k.fy /= 2;
    k.cx = (k.cx - 0.5) / 2;
    k.cy = (k.cy - 0.5) / 2;
  }
  return k;
}

CameraIntrinsics read_intrinsics(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open intrinsics file '{}'", path.string()));
  CameraIntrinsics k;
  if (!(in >> k.fx >> k.fy >> k.cx >> k.cy)) {
    throw ConfigError(fmt::format("'{}' must contain one line 'fx fy cx cy'", path.string()));
  }
  k.validate();
  return k;
}

void write_intrinsics(const std::filesystem::path& path, const CameraIntrinsics& k) {
  std::ofstream out(path);
  if (!out) throw IoError(fmt::format("cannot write '{}'", path.string()));
  out << fmt::format("{:.17g} {:.17g} {:.17g} {:.17g}\n", k.fx, k.fy, k.cx, k.cy);
}

Eigen::Matrix4d SE3Transform::matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = R;
  m.topRightCorner<3, 1>() = t;
  return m;
}

namespace {

Eigen::Matrix3d rot_x(double a) {
  Eigen::Matrix3d m;
  m << 1, 0, 0, 0, std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a);
  return m;
}
Eigen::Matrix3d rot_y(double a) {
  Eigen::Matrix3d m;
  m << std::cos(a), 0, std::sin(a), 0, 1, 0, -std::sin(a), 0, std::cos(a);
  return m;
}
Eigen::Matrix3d rot_z(double a) {
  Eigen::Matrix3d m;
  m << std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a), 0, 0, 0, 1;
  return m;
}
Eigen::Matrix3d drot_x(double a) {
  Eigen::Matrix3d m;
  m << 0, 0, 0, 0, -std::sin(a), -std::cos(a), 0, std::cos(a), -std::sin(a);
  return m;
}
Eigen::Matrix3d drot_y(double a) {
  Eigen::Matrix3d m;
  m << -std::sin(a), 0, std::cos(a), 0, 0, 0, -std::cos(a), 0, -std::sin(a);
  return m;
}
Eigen::Matrix3d drot_z(double a) {
  Eigen::Matrix3d m;
  m << -std::sin(a), -std::cos(a), 0, std::cos(a), -std::sin(a), 0, 0, 0, 0;
  return m;
}

}  // namespace

Eigen::Matrix3d euler_xyz_to_rotation(double rx, double ry, double rz) { return rot_x(rx) * rot_y(ry) * rot_z(rz); }

SE3Transform pose_vec_to_transform(const PoseVec6& v) {
  for (double x : {v.tx, v.ty, v.tz, v.rx, v.ry, v.rz}) {
    if (!std::isfinite(x)) throw NumericalError("pose_vec_to_transform: non-finite pose parameter");
  }
  return {euler_xyz_to_rotation(v.rx, v.ry, v.rz), Eigen::Vector3d(v.tx, v.ty, v.tz)};
}

SE3Transform transform_compose(const SE3Transform& a, const SE3Transform& b) { return {a.R * b.R, a.R * b.t + a.t}; }

SE3Transform transform_invert(const SE3Transform& a) {
  const Eigen::Matrix3d rt = a.R.transpose();
  return {rt, -(rt * a.t)};
}

Projection project(const Eigen::Vector2d& target_pixel, double depth, const SE3Transform& target_to_source,
                   const CameraIntrinsics& k) {
  if (!(depth > 0.0)) throw ConfigError(fmt::format("project: depth must be positive, got {}", depth));
  const Eigen::Vector3d ray((target_pixel.x() - k.cx) / k.fx, (target_pixel.y() - k.cy) / k.fy, 1.0);
  const Eigen::Vector3d q = depth * ray;
  const Eigen::Vector3d p = target_to_source.apply(q);
  Projection out;
  out.depth = p.z();
  out.valid = p.z() > kMinProjectedDepth;
  if (out.valid) {
    // Written as a displacement from the target pixel so that the identity
    // transform reproduces it bit for bit.
    out.pixel = {target_pixel.x() + k.fx * (p.x() / p.z() - q.x() / q.z()),
                 target_pixel.y() + k.fy * (p.y() / p.z() - q.y() / q.z())};
  } else {
    out.pixel = {kInvalidCoordinate, kInvalidCoordinate};
  }
  return out;
}

Tensor pose_vec_to_matrix(const Tensor& pose) {
  if (pose.rank() != 2 || pose.dim(1) != 6) {
    throw ShapeError(fmt::format("pose_vec_to_matrix: expected [N,6], got {}", to_string(pose.shape())));
  }
  const std::size_t n = pose.dim(0);
  std::vector<double> out(n * 12);
  for (std::size_t b = 0; b < n; ++b) {
    const double* p = pose.data().data() + b * 6;
    const Eigen::Matrix3d r = euler_xyz_to_rotation(p[3], p[4], p[5]);
    double* o = out.data() + b * 12;
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) o[i * 3 + j] = r(i, j);
    }
    o[9] = p[0];
    o[10] = p[1];
    o[11] = p[2];
  }
  return Tensor::make({n, 12}, std::move(out), {pose}, [n](detail::Node& self) {
    auto& in = *self.inputs[0];
    auto& g = in.grad_buffer();
    for (std::size_t b = 0; b < n; ++b) {
      const double* p = in.value.data() + b * 6;
      const double* dy = self.grad.data() + b * 12;
      const Eigen::Matrix3d rx = rot_x(p[3]), ry = rot_y(p[4]), rz = rot_z(p[5]);
      const Eigen::Matrix3d d[3] = {drot_x(p[3]) * ry * rz, rx * drot_y(p[4]) * rz, rx * ry * drot_z(p[5])};
      double* gp = g.data() + b * 6;
      gp[0] += dy[9];
      gp[1] += dy[10];
      gp[2] += dy[11];
      for (int a = 0; a < 3; ++a) {
        double s = 0.0;
        for (int i = 0; i < 3; ++i) {
          for (int j = 0; j < 3; ++j) s += dy[i * 3 + j] * d[a](i, j);
        }
        gp[3 + a] += s;
      }
    }
  });
}

ProjectedGrid batch_project(const Tensor& depth, const Tensor& transform, const CameraIntrinsics& k) {
  k.validate();
  if (depth.rank() != 4 || depth.dim(1) != 1) {
    throw ShapeError(fmt::format("batch_project: depth must be [N,1,H,W], got {}", to_string(depth.shape())));
  }
  const std::size_t n = depth.dim(0), h = depth.dim(2), w = depth.dim(3), hw = h * w;
  if (transform.rank() != 2 || transform.dim(0) != n || transform.dim(1) != 12) {
    throw ShapeError(fmt::format("batch_project: transform must be [{},12], got {}", n, to_string(transform.shape())));
  }
  ProjectedGrid grid;
  grid.valid.assign(n * hw, 0);
  grid.source_depth.assign(n * hw, 0.0);
  std::vector<double> coords(n * hw * 2);
  auto d = depth.data();
  for (std::size_t b = 0; b < n; ++b) {
    const double* m = transform.data().data() + b * 12;
    for (std::size_t v = 0; v < h; ++v) {
      const double ry = (static_cast<double>(v) - k.cy) / k.fy;
      for (std::size_t u = 0; u < w; ++u) {
        const std::size_t i = b * hw + v * w + u;
        if (!(d[i] > 0.0)) throw ConfigError(fmt::format("batch_project: non-positive depth {} at pixel {}", d[i], i));
        const double rx = (static_cast<double>(u) - k.cx) / k.fx;
        const double x0 = d[i] * rx, x1 = d[i] * ry, x2 = d[i];
        const double y0 = m[0] * x0 + m[1] * x1 + m[2] * x2 + m[9];
        const double y1 = m[3] * x0 + m[4] * x1 + m[5] * x2 + m[10];
        const double y2 = m[6] * x0 + m[7] * x1 + m[8] * x2 + m[11];
        grid.source_depth[i] = y2;
        if (y2 > kMinProjectedDepth) {
          grid.valid[i] = 1;
          // Displacement form, exact for the identity transform (see project()).
          coords[2 * i] = static_cast<double>(u) + k.fx * (y0 / y2 - x0 / x2);
          coords[2 * i + 1] = static_cast<double>(v) + k.fy * (y1 / y2 - x1 / x2);
        } else {
          coords[2 * i] = kInvalidCoordinate;
          coords[2 * i + 1] = kInvalidCoordinate;
        }
      }
    }
  }
  grid.coords = Tensor::make({n, h, w, 2}, std::move(coords), {depth, transform},
                             [n, h, w, k, valid = grid.valid](detail::Node& self) {
                               auto& dn = *self.inputs[0];
                               auto& tn = *self.inputs[1];
                               const std::size_t hw = h * w;
                               for (std::size_t b = 0; b < n; ++b) {
                                 const double* m = tn.value.data() + b * 12;
                                 for (std::size_t v = 0; v < h; ++v) {
                                   const double ry = (static_cast<double>(v) - k.cy) / k.fy;
                                   for (std::size_t u = 0; u < w; ++u) {
                                     const std::size_t i = b * hw + v * w + u;
                                     if (!valid[i]) continue;
                                     const double gu = self.grad[2 * i], gv = self.grad[2 * i + 1];
                                     if (gu == 0.0 && gv == 0.0) continue;
                                     const double rx = (static_cast<double>(u) - k.cx) / k.fx;
                                     const double di = dn.value[i];
                                     const double x[3] = {di * rx, di * ry, di};
                                     double y[3];
                                     for (int r = 0; r < 3; ++r) y[r] = m[3 * r] * x[0] + m[3 * r + 1] * x[1] + m[3 * r + 2] * x[2] + m[9 + r];
                                     const double iz = 1.0 / y[2];
                                     // Gradient of the loss w.r.t. the camera-frame point y.
                                     const double gy[3] = {gu * k.fx * iz, gv * k.fy * iz,
                                                           -(gu * k.fx * y[0] + gv * k.fy * y[1]) * iz * iz};
                                     if (dn.requires_grad) {
                                       const double ray[3] = {rx, ry, 1.0};
                                       double s = 0.0;
                                       for (int r = 0; r < 3; ++r) {
                                         s += gy[r] * (m[3 * r] * ray[0] + m[3 * r + 1] * ray[1] + m[3 * r + 2] * ray[2]);
                                       }
                                       dn.grad_buffer()[i] += s;
                                     }
                                     if (tn.requires_grad) {
                                       double* gm = tn.grad_buffer().data() + b * 12;
                                       for (int r = 0; r < 3; ++r) {
                                         for (int c = 0; c < 3; ++c) gm[3 * r + c] += gy[r] * x[c];
                                         gm[9 + r] += gy[r];
                                       }
                                     }
                                   }
                                 }
                               }
                             });
  return grid;
}

Tensor pixel_grid(std::size_t height, std::size_t width) {
  std::vector<double> g(height * width * 2);
  for (std::size_t v = 0; v < height; ++v) {
    for (std::size_t u = 0; u < width; ++u) {
      g[2 * (v * width + u)] = static_cast<double>(u);
      g[2 * (v * width + u) + 1] = static_cast<double>(v);
    }
  }
  return Tensor::from({1, height, width, 2}, std::move(g));
}

}  // namespace ssvo
