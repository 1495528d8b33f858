#pragma once

// Ground-truth poses follow the KITTI camera convention: x right, y down,
// z forward. The ground plane is (x, z); yaw is the rotation about y, with
// R_y(t) = [[cos t, 0, sin t], [0, 1, 0], [-sin t, 0, cos t]], so positive
// yaw turns the forward axis toward +x. Planar 2D coordinates used by the
// odometry code are (x_2d, y_2d) = (x_cam, z_cam).

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace lcodom {

inline constexpr double kPoseTolerance = 1e-6;

struct PoseMatrix {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static PoseMatrix identity() { return {}; }
  static PoseMatrix from_row_major(std::span<const double, 12> v);
  std::array<double, 12> to_row_major() const;

  /// Yaw-only pose: rotation R_y(yaw_deg), translation (x, 0, z).
  static PoseMatrix planar(double x, double z, double yaw_deg);

  PoseMatrix inverse() const;
  PoseMatrix operator*(const PoseMatrix& rhs) const;

  /// Throws std::invalid_argument unless R is orthonormal with det +1 within tol.
  void validate(double tol = kPoseTolerance) const;
};

struct RelativePose {
  double delta_d = 0;      // meters, >= 0
  double delta_theta = 0;  // degrees, (-180, 180]
};

/// Maps any angle in degrees into (-180, 180].
double wrap_degrees(double deg);

/// Yaw about the vertical axis: atan2(R(0,2), R(2,2)) in degrees.
double yaw_degrees(const Eigen::Matrix3d& rotation);

/// Relative motion prev^-1 * curr: planar distance over (x, z), yaw wrapped.
RelativePose relative_pose_from_gt(const PoseMatrix& prev, const PoseMatrix& curr, double tol = kPoseTolerance);

std::vector<RelativePose> relative_poses(std::span<const PoseMatrix> poses);

class PoseFileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parses one line of 12 whitespace-separated floats.
PoseMatrix parse_pose_line(std::string_view line);

/// Reads a KITTI pose file; errors name the file and 1-based line.
std::vector<PoseMatrix> read_kitti_poses(const std::filesystem::path& path);
void write_kitti_poses(const std::filesystem::path& path, std::span<const PoseMatrix> poses);

}  // namespace lcodom
