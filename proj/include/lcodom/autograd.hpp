#pragma once

// Tape-based reverse-mode differentiation.
//
// A Tape records every op applied to its Vars. Parameters enter the tape by
// reference to a ParamStore entry (no copy), so an inference tape over the
// full model only allocates activations. backward() writes d(loss)/d(param)
// into the store's gradient tensors: every parameter of every store touched by
// the tape is zeroed first, so unused parameters end with a zero gradient.

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string_view>
#include <utility>
#include <vector>

#include "lcodom/params.hpp"
#include "lcodom/rng.hpp"
#include "lcodom/tensor.hpp"

namespace lcodom {

enum class GradMode { kRecord, kInference };
enum class Mode { kTrain, kEval };

template <typename T>
class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
template <typename T>
class Var {
 public:
  Var() = default;

  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  Tape<T>& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape<T>;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

template <typename T>
class Tape {
 public:
  /// Receives the gradient of the loss w.r.t. the node's output.
  using BackwardFn = std::function<void(Tape&, const Tensor<T>&)>;

  explicit Tape(GradMode mode = GradMode::kRecord) : mode_(mode) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Input that never receives a gradient.
  Var<T> constant(Tensor<T> value);
  /// Input whose gradient is kept on the tape (see input_grad); used for gradient checks.
  Var<T> variable(Tensor<T> value);
  /// Trainable leaf aliasing store.at(name). Repeated calls return the same Var.
  Var<T> parameter(ParamStore<T>& store, std::string_view name);

  const Tensor<T>& value(Var<T> v) const { return nodes_[v.id()].value(); }
  bool recording() const noexcept { return mode_ == GradMode::kRecord; }
  bool requires_grad(Var<T> v) const { return nodes_[v.id()].requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }
  /// Value of the node-th recorded node, in recording order.
  const Tensor<T>& node_value(std::size_t node) const { return nodes_.at(node).value(); }

  /// Runs reverse accumulation from a scalar loss. A tape can be differentiated once.
  void backward(Var<T> loss);

  /// Gradient of a variable() input after backward(); zeros if it was unused.
  Tensor<T> input_grad(Var<T> v) const;

  // Op-implementer interface.

  /// Appends an op result. Throws NonFiniteError if the value holds NaN/Inf.
  Var<T> record(std::string_view op, Tensor<T> value, std::span<const Var<T>> parents,
                BackwardFn backward);
  Var<T> record(std::string_view op, Tensor<T> value, std::initializer_list<Var<T>> parents,
                BackwardFn backward) {
    return record(op, std::move(value), std::span<const Var<T>>(parents.begin(), parents.size()),
                  std::move(backward));
  }
  /// Gradient accumulator of v, allocated on first use; null if v needs no gradient.
  Tensor<T>* grad_target(Var<T> v);

 private:
  struct Node {
    std::optional<Tensor<T>> owned;
    const Tensor<T>* external = nullptr;
    Tensor<T> grad;
    Tensor<T>* external_grad = nullptr;
    bool requires_grad = false;
    BackwardFn backward;

    const Tensor<T>& value() const { return owned ? *owned : *external; }
  };

  GradMode mode_;
  bool differentiated_ = false;
  std::vector<Node> nodes_;
  std::map<std::pair<const ParamStore<T>*, std::size_t>, std::size_t> param_nodes_;
  std::set<ParamStore<T>*> stores_;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return tape_->value(*this);
}

// Layer ops. Shapes follow the channels-first convention:
//   conv1d   x[C_in, L],    w[C_out, C_in, K],       b[C_out] -> [C_out, L_out]
//   conv2d   x[C_in, H, W], w[C_out, C_in, Kh, Kw],  b[C_out] -> [C_out, H_out, W_out]
//   linear   x (any shape, N elements), w[M, N], b[M]         -> [M]
// with L_out = floor((L + 2 * padding - K) / stride) + 1.

template <typename T>
Var<T> conv1d(Var<T> x, Var<T> w, Var<T> b, std::size_t stride, std::size_t padding);

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> w, Var<T> b, std::size_t stride, std::size_t padding);

/// Mean over non-overlapping-or-strided windows along the last `dims` axes (1 or 2).
template <typename T>
Var<T> avg_pool(Var<T> x, std::size_t window, std::size_t stride, int dims);

template <typename T>
Var<T> linear(Var<T> x, Var<T> w, Var<T> b);

template <typename T>
Var<T> relu(Var<T> x);

template <typename T>
Var<T> sigmoid(Var<T> x);

/// Inverted dropout: eval mode (or p == 0) returns x itself.
template <typename T>
Var<T> dropout(Var<T> x, double p, Mode mode, Rng& rng);

/// Flattens each input and joins them in order.
template <typename T>
Var<T> concat(std::span<const Var<T>> parts);

/// Binary cross entropy summed over elements, probabilities clamped to
/// [kBceClamp, 1 - kBceClamp]. Returns a [1] tensor.
template <typename T>
Var<T> bce_sum(Var<T> probs, const Tensor<T>& targets);

template <typename T>
Var<T> add(Var<T> a, Var<T> b);

template <typename T>
Var<T> scale(Var<T> a, T factor);

template <typename T>
Var<T> reshape(Var<T> x, Shape shape);

inline constexpr double kBceClamp = 1e-7;

/// Plain evaluation of the clamped BCE sum, no tape.
template <typename T>
double bce_sum_value(std::span<const T> probs, std::span<const T> targets);

}  // namespace lcodom
