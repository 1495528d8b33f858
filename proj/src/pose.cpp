#include "lcodom/pose.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include <Eigen/LU>

namespace lcodom {
namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

}  // namespace

PoseMatrix PoseMatrix::from_row_major(std::span<const double, 12> v) {
  PoseMatrix p;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) p.rotation(r, c) = v[r * 4 + c];
    p.translation(r) = v[r * 4 + 3];
  }
  return p;
}

std::array<double, 12> PoseMatrix::to_row_major() const {
  std::array<double, 12> v{};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) v[r * 4 + c] = rotation(r, c);
    v[r * 4 + 3] = translation(r);
  }
  return v;
}

PoseMatrix PoseMatrix::planar(double x, double z, double yaw_deg) {
  const double t = yaw_deg * kDegToRad;
  const double c = std::cos(t), s = std::sin(t);
  PoseMatrix p;
  p.rotation << c, 0, s, 0, 1, 0, -s, 0, c;
  p.translation << x, 0, z;
  return p;
}

PoseMatrix PoseMatrix::inverse() const {
  PoseMatrix p;
  p.rotation = rotation.transpose();
  p.translation = -(p.rotation * translation);
  return p;
}

PoseMatrix PoseMatrix::operator*(const PoseMatrix& rhs) const {
  PoseMatrix p;
  p.rotation = rotation * rhs.rotation;
  p.translation = rotation * rhs.translation + translation;
  return p;
}

void PoseMatrix::validate(double tol) const {
  if (!rotation.allFinite() || !translation.allFinite()) throw std::invalid_argument("pose has non-finite entries");
  const double ortho = (rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  if (ortho > tol) {
    throw std::invalid_argument("rotation is not orthonormal (max |R^T R - I| = " + std::to_string(ortho) + ")");
  }
  const double det = rotation.determinant();
  if (std::abs(det - 1.0) > tol) throw std::invalid_argument("rotation determinant is " + std::to_string(det));
}

double wrap_degrees(double deg) {
  double w = std::fmod(deg, 360.0);
  if (w > 180.0) w -= 360.0;
  if (w <= -180.0) w += 360.0;
  return w;
}

double yaw_degrees(const Eigen::Matrix3d& r) { return std::atan2(r(0, 2), r(2, 2)) / kDegToRad; }

RelativePose relative_pose_from_gt(const PoseMatrix& prev, const PoseMatrix& curr, double tol) {
  prev.validate(tol);
  curr.validate(tol);
  const PoseMatrix rel = prev.inverse() * curr;
  return {std::hypot(rel.translation(0), rel.translation(2)), wrap_degrees(yaw_degrees(rel.rotation))};
}

std::vector<RelativePose> relative_poses(std::span<const PoseMatrix> poses) {
  std::vector<RelativePose> out;
  for (std::size_t i = 1; i < poses.size(); ++i) out.push_back(relative_pose_from_gt(poses[i - 1], poses[i]));
  return out;
}

PoseMatrix parse_pose_line(std::string_view line) {
  std::array<double, 12> v{};
  std::size_t n = 0;
  const char* p = line.data();
  const char* end = line.data() + line.size();
  while (true) {
    while (p < end && (*p == ' ' || *p == '\t' || *p == '\r')) ++p;
    if (p == end) break;
    if (n == 12) throw PoseFileError("more than 12 values");
    const auto [next, ec] = std::from_chars(p, end, v[n]);
    if (ec != std::errc() || (next < end && *next != ' ' && *next != '\t' && *next != '\r')) {
      throw PoseFileError("malformed number '" + std::string(p, std::find_if(p, end, [](char c) {
                                                  return c == ' ' || c == '\t';
                                                })) + "'");
    }
    ++n;
    p = next;
  }
  if (n != 12) throw PoseFileError("expected 12 values, got " + std::to_string(n));
  return PoseMatrix::from_row_major(v);
}

std::vector<PoseMatrix> read_kitti_poses(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw PoseFileError(path.string() + ": cannot open");
  std::vector<PoseMatrix> poses;
  std::string line;
  std::size_t line_no = 0;
  std::size_t blank_at = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      if (blank_at == 0) blank_at = line_no;
      continue;
    }
    if (blank_at != 0) throw PoseFileError(path.string() + ":" + std::to_string(blank_at) + ": blank line");
    try {
      poses.push_back(parse_pose_line(line));
      poses.back().validate();
    } catch (const std::exception& e) {
      throw PoseFileError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return poses;
}

void write_kitti_poses(const std::filesystem::path& path, std::span<const PoseMatrix> poses) {
  std::ofstream out(path);
  if (!out) throw PoseFileError(path.string() + ": cannot open for writing");
  char buf[32];
  for (const auto& pose : poses) {
    const auto v = pose.to_row_major();
    for (std::size_t i = 0; i < 12; ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", v[i]);
      out << buf << (i == 11 ? '\n' : ' ');
    }
  }
  if (!out) throw PoseFileError(path.string() + ": write failed");
}

}  // namespace lcodom
