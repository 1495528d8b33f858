#include "lcodom/params.hpp"

#include <cmath>
#include <stdexcept>

#include "lcodom/rng.hpp"

namespace lcodom {
namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

template <typename T>
Parameter<T>& ParamStore<T>::add(std::string name, Shape shape, Init init, std::size_t fan_in) {
  Tensor<T> value(shape);
  if (init == Init::kHeUniform) {
    if (fan_in == 0) throw std::invalid_argument("He initialization of '" + name + "' needs fan_in > 0");
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    Rng rng(mix_seed(seed_, fnv1a(name)));
    for (auto& v : value.values()) v = static_cast<T>(rng.uniform(-bound, bound));
  }
  return add(std::move(name), std::move(value));
}

template <typename T>
Parameter<T>& ParamStore<T>::add(std::string name, Tensor<T> value) {
  if (index_.count(name) != 0) throw std::invalid_argument("duplicate parameter '" + name + "'");
  index_.emplace(name, params_.size());
  Tensor<T> grad(value.shape());
  params_.push_back(Parameter<T>{std::move(name), std::move(value), std::move(grad)});
  return params_.back();
}

template <typename T>
bool ParamStore<T>::contains(std::string_view name) const {
  return index_.find(name) != index_.end();
}

template <typename T>
std::size_t ParamStore<T>::index_of(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter '" + std::string(name) + "'");
  return it->second;
}

template <typename T>
Parameter<T>& ParamStore<T>::at(std::string_view name) {
  return params_[index_of(name)];
}

template <typename T>
const Parameter<T>& ParamStore<T>::at(std::string_view name) const {
  return params_[index_of(name)];
}

template <typename T>
std::size_t ParamStore<T>::element_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

template <typename T>
void ParamStore<T>::zero_grad() {
  for (auto& p : params_) p.grad.fill(T{0});
}

template class ParamStore<float>;
template class ParamStore<double>;

}  // namespace lcodom
