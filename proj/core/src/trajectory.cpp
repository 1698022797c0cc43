#include "ssvo/trajectory.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <fmt/format.h>

#include "ssvo/errors.hpp"

namespace ssvo {

SE3Transform StampedPose::transform() const {
  SE3Transform p;
  p.R = rotation.normalized().toRotationMatrix();
  p.t = translation;
  return p;
}

StampedPose StampedPose::from_transform(double timestamp, const SE3Transform& pose) {
  StampedPose s;
  s.timestamp = timestamp;
  s.translation = pose.t;
  s.rotation = Eigen::Quaterniond(pose.R).normalized();
  if (s.rotation.w() < 0) s.rotation.coeffs() *= -1.0;
  return s;
}

void validate_trajectory(const Trajectory& trajectory) {
  for (std::size_t i = 1; i < trajectory.size(); ++i) {
    if (!(trajectory[i].timestamp > trajectory[i - 1].timestamp)) {
      throw ConfigError(fmt::format("trajectory timestamps not increasing at line {}", i + 1));
    }
  }
}

std::string format_tum(const Trajectory& trajectory) {
  std::string out;
  for (const auto& p : trajectory) {
    const auto& q = p.rotation;
    out += fmt::format("{} {} {} {} {} {} {} {}\n", p.timestamp, p.translation.x(), p.translation.y(),
                       p.translation.z(), q.x(), q.y(), q.z(), q.w());
  }
  return out;
}

Trajectory parse_tum(const std::string& text) {
  Trajectory out;
  std::istringstream lines(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(lines, line)) {
    ++number;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    double v[8];
    const char* p = line.data() + first;
    const char* end = line.data() + line.size();
    for (int i = 0; i < 8; ++i) {
      while (p < end && (*p == ' ' || *p == '\t')) ++p;
      auto [next, ec] = std::from_chars(p, end, v[i]);
      if (ec != std::errc()) throw ConfigError(fmt::format("TUM line {}: expected 8 numbers", number));
      p = next;
    }
    while (p < end && (*p == ' ' || *p == '\t' || *p == '\r')) ++p;
    if (p != end) throw ConfigError(fmt::format("TUM line {}: trailing text", number));
    StampedPose s;
    s.timestamp = v[0];
    s.translation = {v[1], v[2], v[3]};
    s.rotation = Eigen::Quaterniond(v[7], v[4], v[5], v[6]);
    if (!(s.rotation.norm() > 0.5)) throw ConfigError(fmt::format("TUM line {}: degenerate quaternion", number));
    out.push_back(s);
  }
  validate_trajectory(out);
  return out;
}

Trajectory read_tum(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open trajectory '{}'", path.string()));
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_tum(buf.str());
}

void write_tum(const std::filesystem::path& path, const Trajectory& trajectory) {
  std::ofstream out(path);
  if (!out) throw IoError(fmt::format("cannot write trajectory '{}'", path.string()));
  out << format_tum(trajectory);
  if (!out) throw IoError(fmt::format("failed writing '{}'", path.string()));
}

Trajectory integrate_poses(std::span<const SE3Transform> motions, double t0, double dt) {
  Trajectory out;
  out.reserve(motions.size() + 1);
  SE3Transform pose = SE3Transform::identity();
  out.push_back(StampedPose::from_transform(t0, pose));
  for (std::size_t k = 0; k < motions.size(); ++k) {
    pose = transform_compose(pose, motions[k]);
    out.push_back(StampedPose::from_transform(t0 + static_cast<double>(k + 1) * dt, pose));
  }
  return out;
}

std::vector<SE3Transform> relative_motions(const Trajectory& trajectory) {
  std::vector<SE3Transform> out;
  for (std::size_t k = 1; k < trajectory.size(); ++k) {
    out.push_back(transform_compose(transform_invert(trajectory[k - 1].transform()), trajectory[k].transform()));
  }
  return out;
}

double path_length(const Trajectory& trajectory) {
  double total = 0;
  for (std::size_t k = 1; k < trajectory.size(); ++k) {
    total += (trajectory[k].translation - trajectory[k - 1].translation).norm();
  }
  return total;
}

double rotation_angle_deg(const Eigen::Matrix3d& r) {
  const double c = std::clamp((r.trace() - 1.0) / 2.0, -1.0, 1.0);
  // acos loses precision near zero; recover small angles from the skew part.
  const Eigen::Vector3d w(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  return std::atan2(0.5 * w.norm(), c) * 180.0 / std::numbers::pi;
}

}  // namespace ssvo
