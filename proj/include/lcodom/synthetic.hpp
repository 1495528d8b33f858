#pragma once

// Procedural sequences with known motion: a flat world of vertical pillars
// over a checkered ground, seen by a simulated multi-ring lidar and a pinhole
// camera that share the vehicle pose. The vehicle turns first and then drives
// along its new heading, so ground-truth relative poses integrate exactly.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lcodom/image.hpp"
#include "lcodom/pose.hpp"
#include "lcodom/scan.hpp"

namespace lcodom {

struct SyntheticOptions {
  std::size_t frames = 17;
  std::uint64_t seed = 1;
  std::size_t image_width = kImageWidth;
  std::size_t image_height = kImageHeight;
  double min_step_m = 0.3;
  double max_step_m = 2.5;
  double max_turn_deg = 5.0;
  std::size_t pillars = 80;
  double world_radius_m = 70.0;
  double lidar_azimuth_step_deg = 0.2;
  std::vector<double> lidar_ring_elevations_deg{-2.0, -1.0, 0.0, 1.0, 2.0};
};

struct SyntheticSequence {
  std::vector<PoseMatrix> poses;
  std::vector<RelativePose> motion;  // motion[i] takes frame i to i + 1
  std::vector<std::vector<Point3>> clouds;
  std::vector<RgbImage> images;
};

SyntheticSequence generate_sequence(const SyntheticOptions& options);

/// Writes the KITTI raw layout (velodyne/*.bin, image_2/*.png, poses/<id>.txt).
void write_raw_sequence(const SyntheticSequence& sequence, const std::filesystem::path& root, const std::string& id);

/// Poses only: a smooth curved drive built from per-frame (step, turn) values.
std::vector<PoseMatrix> integrate_motion_to_poses(const std::vector<RelativePose>& motion);

/// Smooth curved motion of the given total length in meters, step about 1 m.
std::vector<RelativePose> smooth_motion(double length_m, std::uint64_t seed);

}  // namespace lcodom
