#include "lcodom/scan.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace lcodom {
namespace {

constexpr double kRadToDeg = 180.0 / std::numbers::pi;

}  // namespace

Scan2D extract_planar_layer(std::span<const Point3> cloud, double elevation_band_deg) {
  if (!(elevation_band_deg >= 0.0)) throw std::invalid_argument("elevation band must be >= 0");
  Scan2D scan;
  for (const auto& p : cloud) {
    const double planar = std::hypot(static_cast<double>(p.x), static_cast<double>(p.y));
    if (!(planar > 0.0)) continue;
    const double elevation = std::atan2(static_cast<double>(p.z), planar) * kRadToDeg;
    if (std::abs(elevation) > elevation_band_deg) continue;
    double azimuth = std::atan2(static_cast<double>(p.y), static_cast<double>(p.x)) * kRadToDeg;
    if (azimuth < 0.0) azimuth += 360.0;
    if (azimuth >= 360.0) azimuth -= 360.0;
    scan.points.push_back({azimuth, planar});
  }
  return scan;
}

ScanVector::ScanVector(std::span<const float> values) {
  if (values.size() != kScanBins) {
    throw ShapeError("scan vector needs " + std::to_string(kScanBins) + " values, got " +
                     std::to_string(values.size()));
  }
  std::copy(values.begin(), values.end(), depth_.begin());
}

std::size_t scan_bin(double angle_deg) {
  double a = std::fmod(angle_deg, 360.0);
  if (a < 0.0) a += 360.0;
  // Bin edges are multiples of 0.1, which binary floats cannot hold; snap
  // quotients within 1e-9 of an edge so that e.g. 0.3 deg lands in bin 3.
  const double scaled = a / kScanBinDeg;
  const double nearest = std::round(scaled);
  const double index = std::abs(scaled - nearest) < 1e-9 ? nearest : std::floor(scaled);
  if (index >= 3600.0) return 0;  // 360 deg is 0 deg
  return static_cast<std::size_t>(index);
}

ScanVector encode_scan(const Scan2D& scan, double max_range, ScanEncodeStats* stats) {
  if (!(max_range > 0.0)) throw std::invalid_argument("max_range must be positive");
  std::array<double, kScanBins> sum{};
  std::array<std::uint32_t, kScanBins> count{};
  ScanEncodeStats local;
  for (const auto& p : scan.points) {
    if (!std::isfinite(p.angle_deg) || !std::isfinite(p.range_m) || p.range_m <= 0.0) {
      throw std::invalid_argument("scan point needs a finite angle and a positive range");
    }
    double range = p.range_m;
    if (range > max_range) {
      range = max_range;
      ++local.clamped;
    }
    const std::size_t b = scan_bin(p.angle_deg);
    sum[b] += range;
    ++count[b];
    ++local.points;
  }
  ScanVector out;
  for (std::size_t b = 0; b < kScanBins; ++b) {
    if (count[b] > 0) out[b] = static_cast<float>(sum[b] / count[b] / max_range);
  }
  if (stats) {
    stats->points += local.points;
    stats->clamped += local.clamped;
  }
  return out;
}

Tensor32 stack_scans(const ScanVector& prev, const ScanVector& curr) {
  Tensor32 out({2, kScanBins});
  std::copy(prev.values().begin(), prev.values().end(), out.data());
  std::copy(curr.values().begin(), curr.values().end(), out.data() + kScanBins);
  return out;
}

std::pair<ScanVector, ScanVector> unstack_scans(const Tensor32& stacked) {
  if (stacked.shape() != Shape{2, kScanBins}) {
    throw ShapeError("stacked scans must be [2, 3601], got " + to_string(stacked.shape()));
  }
  return {ScanVector(stacked.span().subspan(0, kScanBins)), ScanVector(stacked.span().subspan(kScanBins))};
}

}  // namespace lcodom
