#pragma once

#include <cstdint>
#include <vector>

#include "lcodom/params.hpp"
#include "lcodom/tensor.hpp"

namespace lcodom {

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction:
///   m <- b1 m + (1 - b1) g,  v <- b2 v + (1 - b2) g^2
///   p <- p - lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
/// Moments are matched to parameters by position in the store.
template <typename T>
class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : options_(options) {}

  /// Applies one update from the store's current gradients. Throws
  /// NonFiniteError if a gradient holds NaN/Inf (parameters untouched).
  void step(ParamStore<T>& params);

  std::uint64_t step_count() const noexcept { return step_; }
  const AdamOptions& options() const noexcept { return options_; }
  const std::vector<Tensor<T>>& first_moments() const noexcept { return m_; }
  const std::vector<Tensor<T>>& second_moments() const noexcept { return v_; }

  /// Restores saved state; moment shapes are checked on the next step().
  void restore(std::uint64_t step, std::vector<Tensor<T>> m, std::vector<Tensor<T>> v);

 private:
  AdamOptions options_;
  std::uint64_t step_ = 0;
  std::vector<Tensor<T>> m_;
  std::vector<Tensor<T>> v_;
};

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace lcodom
