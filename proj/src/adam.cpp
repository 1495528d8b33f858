#include "lcodom/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace lcodom {

template <typename T>
void Adam<T>::step(ParamStore<T>& params) {
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.value.shape());
      v_.emplace_back(p.value.shape());
    }
  }
  if (m_.size() != params.size()) {
    throw std::invalid_argument("Adam state tracks " + std::to_string(m_.size()) + " tensors but the store has " +
                                std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    if (m_[i].shape() != p.value.shape() || v_[i].shape() != p.value.shape()) {
      throw ShapeError("Adam moment shape mismatch for '" + p.name + "'");
    }
    if (!p.grad.all_finite()) throw NonFiniteError("non-finite gradient for '" + p.name + "'");
  }

  ++step_;
  const double b1 = options_.beta1;
  const double b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    T* w = p.value.data();
    const T* g = p.grad.data();
    T* m = m_[i].data();
    T* v = v_[i].data();
    const std::size_t n = p.value.size();
#pragma omp parallel for schedule(static) if (n > (1u << 16))
    for (std::size_t j = 0; j < n; ++j) {
      const double gj = g[j];
      const double mj = b1 * m[j] + (1.0 - b1) * gj;
      const double vj = b2 * v[j] + (1.0 - b2) * gj * gj;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      const double m_hat = static_cast<double>(m[j]) / c1;
      const double v_hat = static_cast<double>(v[j]) / c2;
      w[j] = static_cast<T>(w[j] - options_.lr * m_hat / (std::sqrt(v_hat) + options_.epsilon));
    }
  }
}

template <typename T>
void Adam<T>::restore(std::uint64_t step, std::vector<Tensor<T>> m, std::vector<Tensor<T>> v) {
  if (m.size() != v.size()) throw std::invalid_argument("Adam restore: moment lists differ in length");
  step_ = step;
  m_ = std::move(m);
  v_ = std::move(v);
}

template class Adam<float>;
template class Adam<double>;

}  // namespace lcodom
