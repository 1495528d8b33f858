#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "lcodom/tensor.hpp"

namespace lcodom {

/// Cartesian point in the lidar frame (x forward, y left, z up), meters.
struct Point3 {
  float x = 0;
  float y = 0;
  float z = 0;
};

struct ScanPoint {
  double angle_deg = 0;  // azimuth in [0, 360), counter-clockwise from +x
  double range_m = 0;    // planar range, > 0
};

struct Scan2D {
  std::vector<ScanPoint> points;
};

inline constexpr std::size_t kScanBins = 3601;
inline constexpr double kScanBinDeg = 0.1;
inline constexpr double kDefaultElevationBandDeg = 0.2;
inline constexpr double kDefaultMaxRange = 80.0;

/// Keeps points with |atan2(z, hypot(x, y))| <= band and returns their azimuth
/// and planar range. Points on the sensor axis (zero planar range) are dropped.
/// An empty result is valid (nothing in the plane).
Scan2D extract_planar_layer(std::span<const Point3> cloud, double elevation_band_deg = kDefaultElevationBandDeg);

/// 3601 normalized depths; bin b covers azimuth [0.1 b, 0.1 (b + 1)).
class ScanVector {
 public:
  ScanVector() { depth_.fill(0.0f); }
  explicit ScanVector(std::span<const float> values);

  float operator[](std::size_t bin) const { return depth_[bin]; }
  float& operator[](std::size_t bin) { return depth_[bin]; }
  std::span<const float> values() const { return depth_; }
  std::span<float> values() { return depth_; }
  static constexpr std::size_t size() { return kScanBins; }

  friend bool operator==(const ScanVector&, const ScanVector&) = default;

 private:
  std::array<float, kScanBins> depth_;
};

struct ScanEncodeStats {
  std::size_t points = 0;
  std::size_t clamped = 0;  // ranges above max_range, encoded as max_range
};

/// Bins by floor(angle / 0.1) (360 wraps to bin 0, result clamped to [0, 3600]),
/// averages the ranges that share a bin and divides by max_range. Empty bins stay 0.
ScanVector encode_scan(const Scan2D& scan, double max_range = kDefaultMaxRange, ScanEncodeStats* stats = nullptr);

std::size_t scan_bin(double angle_deg);

/// Row 0 = previous frame, row 1 = current frame.
Tensor32 stack_scans(const ScanVector& prev, const ScanVector& curr);
std::pair<ScanVector, ScanVector> unstack_scans(const Tensor32& stacked);

}  // namespace lcodom
