#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "lcodom/tensor.hpp"

namespace lcodom {

enum class Init {
  kZeros,
  /// U(-b, b) with b = sqrt(6 / fan_in).
  kHeUniform,
};

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
};

/// Named trainable tensors with matching gradients, in registration order.
/// Initial values depend only on (seed, name), never on registration order.
template <typename T>
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed = 0) : seed_(seed) {}

  Parameter<T>& add(std::string name, Shape shape, Init init, std::size_t fan_in = 0);
  /// Registers a parameter with an explicit value (checkpoint loading, tests).
  Parameter<T>& add(std::string name, Tensor<T> value);

  bool contains(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;
  Parameter<T>& at(std::string_view name);
  const Parameter<T>& at(std::string_view name) const;
  Parameter<T>& operator[](std::size_t i) { return params_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return params_[i]; }

  std::size_t size() const noexcept { return params_.size(); }
  std::uint64_t seed() const noexcept { return seed_; }
  std::size_t element_count() const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad();

  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out(seed_);
    for (const auto& p : params_) out.add(p.name, p.value.template cast<U>());
    return out;
  }

 private:
  std::uint64_t seed_;
  std::vector<Parameter<T>> params_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

extern template class ParamStore<float>;
extern template class ParamStore<double>;

}  // namespace lcodom
