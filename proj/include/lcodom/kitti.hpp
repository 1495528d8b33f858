#pragma once

// Raw KITTI odometry layout:
//   <root>/sequences/NN/velodyne/FFFFFF.bin   float32 x, y, z, reflectance
//   <root>/sequences/NN/image_2/FFFFFF.png
//   <root>/poses/NN.txt

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lcodom/scan.hpp"

namespace lcodom {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<Point3> read_velodyne_bin(const std::filesystem::path& path);
/// Writes reflectance 0 for every point.
void write_velodyne_bin(const std::filesystem::path& path, std::span<const Point3> points);

struct RawSequence {
  std::string id;
  std::vector<std::filesystem::path> scans;
  std::vector<std::filesystem::path> images;
  std::filesystem::path poses;
};

std::string frame_name(std::size_t index);

/// Lists frames of one sequence. Throws DatasetError if a directory or pose file
/// is missing or the scan and image frame sets differ.
RawSequence locate_sequence(const std::filesystem::path& root, const std::string& id);

/// The fixed train/test split: train 00,02,03,04,05,06,08,09; test 01,07,10.
std::vector<std::string> split_sequences(const std::string& split);

}  // namespace lcodom
