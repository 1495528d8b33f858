#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace lcodom {

/// Uniform grid of k classes: class c stands for min_value + c * resolution.
struct ClassGrid {
  double min_value = 0;
  double resolution = 1;
  std::size_t k = 2;

  /// -5.6 deg .. 5.5 deg in 0.1 deg steps, 112 classes.
  static ClassGrid rotation() { return {-5.6, 0.1, 112}; }
  /// 0.00 m .. 2.69 m in 0.01 m steps, 270 classes.
  static ClassGrid translation() { return {0.0, 0.01, 270}; }

  void validate() const;
  std::size_t ranks() const { return k - 1; }
  friend bool operator==(const ClassGrid&, const ClassGrid&) = default;
};

/// round((value - min) / resolution) with ties away from zero, clamped to
/// [0, k-1]. Clamped calls increment clamp_count() when a counter is given.
std::size_t class_of(double value, const ClassGrid& grid, std::atomic<std::uint64_t>* clamp_counter = nullptr);

double value_of(std::size_t cls, const ClassGrid& grid);

/// k-1 binary labels; element j is 1 iff cls > j.
std::vector<float> encode_rank(std::size_t cls, std::size_t k);

/// Number of probabilities strictly above threshold. Throws if the length is not k-1.
std::size_t decode_rank(std::span<const float> probs, std::size_t k, double threshold = 0.5);

/// Process-wide count of values clamped by class_of during label generation.
std::atomic<std::uint64_t>& label_clamp_counter();

}  // namespace lcodom
