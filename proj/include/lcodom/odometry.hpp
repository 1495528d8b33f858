#pragma once

// Trajectory integration and drift/absolute error metrics.
//
// Trajectory2D uses the planar convention from pose.hpp: x lateral, y forward
// (camera z), theta = yaw in degrees.

#include <cstddef>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "lcodom/pose.hpp"

namespace lcodom {

enum class IntegrationMode {
  kHeadingIntegrated,  // x += d sin(theta + dtheta), y += d cos(theta + dtheta)
  kPaperVerbatim,      // x += d sin(dtheta),         y += d cos(dtheta)
};

std::string_view integration_mode_name(IntegrationMode mode);
IntegrationMode parse_integration_mode(std::string_view name);

struct Pose2D {
  double x = 0;
  double y = 0;
  double theta = 0;  // degrees, (-180, 180]
  friend bool operator==(const Pose2D&, const Pose2D&) = default;
};

using Trajectory2D = std::vector<Pose2D>;

/// Accumulates relative poses from `start`; the result has rel.size() + 1 poses.
Trajectory2D integrate(std::span<const RelativePose> rel, IntegrationMode mode = IntegrationMode::kHeadingIntegrated,
                       Pose2D start = {});

/// Yaw-only 3D poses with zero height: (x, y, theta) -> R_y(theta), t = (x, 0, y).
std::vector<PoseMatrix> lift_to_3d(const Trajectory2D& traj);
Pose2D project_to_2d(const PoseMatrix& pose);

inline constexpr std::size_t kDriftStartStep = 10;
inline constexpr double kDriftLengths[] = {100, 200, 300, 400, 500, 600, 700, 800};

struct LengthDrift {
  double length = 0;
  std::size_t segments = 0;
  double t_rel = 0;  // percent
  double r_rel = 0;  // degrees per 100 m
};

struct DriftScores {
  bool sufficient = false;  // false: ground truth shorter than the shortest segment length
  std::size_t segments = 0;
  double t_rel = 0;  // percent
  double r_rel = 0;  // degrees per 100 m
  std::vector<LengthDrift> per_length;
};

/// Cumulative ground-truth path length at each frame.
std::vector<double> path_distances(std::span<const PoseMatrix> poses);

/// Segment-averaged relative drift over start frames 0, 10, 20, ... and
/// lengths 100..800 m. Throws std::invalid_argument on unequal lengths.
DriftScores drift_metrics(std::span<const PoseMatrix> pred, std::span<const PoseMatrix> gt);

struct AbsErrors {
  double sigma_r = 0;  // degrees
  double sigma_t = 0;  // meters
};

/// Mean absolute per-pair errors; rotation differences are wrapped.
AbsErrors abs_errors(std::span<const RelativePose> pred, std::span<const RelativePose> gt);

/// CSV with header `frame,x,y,theta`, values printed with 17 significant digits.
void write_trajectory_csv(const std::filesystem::path& path, const Trajectory2D& traj);
Trajectory2D read_trajectory_csv(const std::filesystem::path& path);

/// Writes the CSV and, next to it, the 3D lift as KITTI pose lines.
void export_trajectory(const Trajectory2D& traj, const std::filesystem::path& csv_path,
                       const std::filesystem::path& kitti_path);

}  // namespace lcodom
