#include "lcodom/ordinal.hpp"

#include <cmath>
#include <stdexcept>

namespace lcodom {

void ClassGrid::validate() const {
  if (!(resolution > 0.0) || !std::isfinite(resolution)) throw std::invalid_argument("grid resolution must be positive");
  if (!std::isfinite(min_value)) throw std::invalid_argument("grid minimum must be finite");
  if (k < 2) throw std::invalid_argument("grid needs at least 2 classes");
}

std::size_t class_of(double value, const ClassGrid& grid, std::atomic<std::uint64_t>* clamp_counter) {
  if (!std::isfinite(value)) throw std::invalid_argument("class_of needs a finite value");
  const double idx = std::round((value - grid.min_value) / grid.resolution);
  const double top = static_cast<double>(grid.k - 1);
  if (idx < 0.0 || idx > top) {
    if (clamp_counter) clamp_counter->fetch_add(1, std::memory_order_relaxed);
    return idx < 0.0 ? 0 : grid.k - 1;
  }
  return static_cast<std::size_t>(idx);
}

double value_of(std::size_t cls, const ClassGrid& grid) {
  if (cls >= grid.k) throw std::out_of_range("class " + std::to_string(cls) + " outside grid of " + std::to_string(grid.k));
  return grid.min_value + static_cast<double>(cls) * grid.resolution;
}

std::vector<float> encode_rank(std::size_t cls, std::size_t k) {
  if (k < 2) throw std::invalid_argument("encode_rank needs k >= 2");
  if (cls >= k) throw std::out_of_range("class " + std::to_string(cls) + " outside [0, " + std::to_string(k - 1) + "]");
  std::vector<float> label(k - 1, 0.0f);
  for (std::size_t j = 0; j < cls; ++j) label[j] = 1.0f;
  return label;
}

std::size_t decode_rank(std::span<const float> probs, std::size_t k, double threshold) {
  if (k < 2 || probs.size() != k - 1) {
    throw std::invalid_argument("rank vector has length " + std::to_string(probs.size()) + ", expected " +
                                std::to_string(k < 1 ? 0 : k - 1));
  }
  std::size_t count = 0;
  for (float p : probs) count += p > threshold;
  return count;
}

std::atomic<std::uint64_t>& label_clamp_counter() {
  static std::atomic<std::uint64_t> counter{0};
  return counter;
}

}  // namespace lcodom
