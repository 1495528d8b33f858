#include "lcodom/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lcodom/kernels.hpp"

namespace lcodom {

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  if (!value.all_finite()) throw NonFiniteError("non-finite value in tape input");
  Node node;
  node.owned = std::move(value);
  nodes_.push_back(std::move(node));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::variable(Tensor<T> value) {
  if (!value.all_finite()) throw NonFiniteError("non-finite value in tape input");
  Node node;
  node.owned = std::move(value);
  node.requires_grad = recording();
  nodes_.push_back(std::move(node));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::parameter(ParamStore<T>& store, std::string_view name) {
  const std::size_t index = store.index_of(name);
  const auto key = std::make_pair(static_cast<const ParamStore<T>*>(&store), index);
  if (auto it = param_nodes_.find(key); it != param_nodes_.end()) return Var<T>(this, it->second);
  Node node;
  node.external = &store[index].value;
  node.external_grad = &store[index].grad;
  node.requires_grad = recording();
  nodes_.push_back(std::move(node));
  param_nodes_.emplace(key, nodes_.size() - 1);
  stores_.insert(&store);
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::record(std::string_view op, Tensor<T> value, std::span<const Var<T>> parents,
                       BackwardFn backward) {
  if (!value.all_finite()) {
    throw NonFiniteError(std::string(op) + " produced non-finite values");
  }
  Node node;
  node.owned = std::move(value);
  if (recording()) {
    for (const auto& p : parents) {
      if (p.tape_ != this) throw std::invalid_argument(std::string(op) + ": operand from another tape");
      node.requires_grad = node.requires_grad || nodes_[p.id()].requires_grad;
    }
    if (node.requires_grad) node.backward = std::move(backward);
  }
  nodes_.push_back(std::move(node));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Tensor<T>* Tape<T>::grad_target(Var<T> v) {
  Node& node = nodes_[v.id()];
  if (!node.requires_grad) return nullptr;
  if (node.external_grad != nullptr) return node.external_grad;
  if (node.grad.empty()) node.grad = Tensor<T>(node.value().shape());
  return &node.grad;
}

template <typename T>
void Tape<T>::backward(Var<T> loss) {
  if (!recording()) throw std::logic_error("backward() on an inference tape");
  if (differentiated_) {
    throw std::logic_error("backward() called twice on the same tape; run a fresh forward pass");
  }
  if (loss.tape_ != this) throw std::invalid_argument("backward(): loss belongs to another tape");
  if (value(loss).size() != 1) {
    throw ShapeError("backward(): loss must be a scalar, got shape " + to_string(value(loss).shape()));
  }
  differentiated_ = true;
  for (ParamStore<T>* store : stores_) store->zero_grad();
  Tensor<T>* seed = grad_target(loss);
  if (seed == nullptr) return;
  (*seed)[0] += T{1};
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!node.requires_grad || !node.backward || node.grad.empty()) continue;
    node.backward(*this, node.grad);
    // Intermediate gradients are no longer needed once propagated.
    node.backward = nullptr;
    node.grad = Tensor<T>();
  }
}

template <typename T>
Tensor<T> Tape<T>::input_grad(Var<T> v) const {
  const Node& node = nodes_[v.id()];
  if (node.external_grad != nullptr) return *node.external_grad;
  if (node.grad.empty()) return Tensor<T>(node.value().shape());
  return node.grad;
}

template class Tape<float>;
template class Tape<double>;

namespace {

using kernels::Backend;

template <typename T>
void add_into(Tensor<T>* target, const Tensor<T>& g) {
  if (target == nullptr) return;
  T* dst = target->data();
  const T* src = g.data();
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += src[i];
}

[[noreturn]] void shape_error(std::string_view op, const std::string& what) {
  throw ShapeError(std::string(op) + ": " + what);
}

void expect_rank(std::string_view op, std::string_view operand, const Shape& s, std::size_t rank) {
  if (s.size() != rank) {
    shape_error(op, std::string(operand) + " must have rank " + std::to_string(rank) + ", got shape " +
                        to_string(s));
  }
}

void expect_dim(std::string_view op, const std::string& what, std::size_t got, std::size_t want) {
  if (got != want) {
    shape_error(op, what + " is " + std::to_string(got) + ", expected " + std::to_string(want));
  }
}

template <typename T>
Var<T> conv_impl(std::string_view op, Var<T> x, Var<T> w, Var<T> b, kernels::ConvGeometry g,
                 Shape out_shape) {
  Tape<T>& tape = x.tape();
  Tensor<T> out(std::move(out_shape));
  const bool reference = kernels::backend() == Backend::kReference;
  if (reference) {
    kernels::reference::conv_forward(g, x.value().data(), w.value().data(), b.value().data(), out.data());
  } else {
    kernels::conv_forward(g, x.value().data(), w.value().data(), b.value().data(), out.data());
  }
  return tape.record(op, std::move(out), {x, w, b}, [x, w, b, g, reference](Tape<T>& t, const Tensor<T>& go) {
    Tensor<T>* gx = t.grad_target(x);
    Tensor<T>* gw = t.grad_target(w);
    Tensor<T>* gb = t.grad_target(b);
    auto ptr = [](Tensor<T>* p) { return p ? p->data() : nullptr; };
    if (reference) {
      kernels::reference::conv_backward(g, x.value().data(), w.value().data(), go.data(), ptr(gx), ptr(gw), ptr(gb));
    } else {
      kernels::conv_backward(g, x.value().data(), w.value().data(), go.data(), ptr(gx), ptr(gw), ptr(gb));
    }
  });
}

}  // namespace

template <typename T>
Var<T> conv1d(Var<T> x, Var<T> w, Var<T> b, std::size_t stride, std::size_t padding) {
  constexpr std::string_view op = "conv1d";
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  expect_rank(op, "input", xs, 2);
  expect_rank(op, "weight", ws, 3);
  expect_dim(op, "weight dim 1 (in_channels)", ws[1], xs[0]);
  expect_dim(op, "bias length", b.value().size(), ws[0]);
  if (stride == 0) shape_error(op, "stride must be >= 1");
  if (xs[1] + 2 * padding < ws[2]) {
    shape_error(op, "input length (dim 1) " + std::to_string(xs[1]) + " plus padding is shorter than kernel " +
                        std::to_string(ws[2]));
  }
  kernels::ConvGeometry g;
  g.in_channels = xs[0];
  g.in_w = xs[1];
  g.out_channels = ws[0];
  g.kernel_w = ws[2];
  g.stride_w = stride;
  g.pad_w = padding;
  return conv_impl(op, x, w, b, g, Shape{g.out_channels, g.out_w()});
}

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> w, Var<T> b, std::size_t stride, std::size_t padding) {
  constexpr std::string_view op = "conv2d";
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  expect_rank(op, "input", xs, 3);
  expect_rank(op, "weight", ws, 4);
  expect_dim(op, "weight dim 1 (in_channels)", ws[1], xs[0]);
  expect_dim(op, "bias length", b.value().size(), ws[0]);
  if (stride == 0) shape_error(op, "stride must be >= 1");
  if (xs[1] + 2 * padding < ws[2]) shape_error(op, "input height (dim 1) plus padding is smaller than the kernel");
  if (xs[2] + 2 * padding < ws[3]) shape_error(op, "input width (dim 2) plus padding is smaller than the kernel");
  kernels::ConvGeometry g;
  g.in_channels = xs[0];
  g.in_h = xs[1];
  g.in_w = xs[2];
  g.out_channels = ws[0];
  g.kernel_h = ws[2];
  g.kernel_w = ws[3];
  g.stride_h = g.stride_w = stride;
  g.pad_h = g.pad_w = padding;
  return conv_impl(op, x, w, b, g, Shape{g.out_channels, g.out_h(), g.out_w()});
}

template <typename T>
Var<T> avg_pool(Var<T> x, std::size_t window, std::size_t stride, int dims) {
  constexpr std::string_view op = "avg_pool";
  if (window == 0 || stride == 0) shape_error(op, "window and stride must be >= 1");
  if (dims != 1 && dims != 2) shape_error(op, "dims must be 1 or 2");
  const Shape& xs = x.shape();
  kernels::PoolGeometry g;
  Shape out_shape;
  if (dims == 1) {
    expect_rank(op, "input", xs, 2);
    if (xs[1] < window) shape_error(op, "input length (dim 1) is shorter than the window");
    g.channels = xs[0];
    g.in_w = xs[1];
    g.window_w = window;
    g.stride_w = stride;
    out_shape = {g.channels, g.out_w()};
  } else {
    expect_rank(op, "input", xs, 3);
    if (xs[1] < window) shape_error(op, "input height (dim 1) is smaller than the window");
    if (xs[2] < window) shape_error(op, "input width (dim 2) is smaller than the window");
    g.channels = xs[0];
    g.in_h = xs[1];
    g.in_w = xs[2];
    g.window_h = g.window_w = window;
    g.stride_h = g.stride_w = stride;
    out_shape = {g.channels, g.out_h(), g.out_w()};
  }
  Tensor<T> out(std::move(out_shape));
  const bool reference = kernels::backend() == Backend::kReference;
  if (reference) {
    kernels::reference::avg_pool_forward(g, x.value().data(), out.data());
  } else {
    kernels::avg_pool_forward(g, x.value().data(), out.data());
  }
  return x.tape().record(op, std::move(out), {x}, [x, g, reference](Tape<T>& t, const Tensor<T>& go) {
    Tensor<T>* gx = t.grad_target(x);
    if (gx == nullptr) return;
    if (reference) {
      kernels::reference::avg_pool_backward(g, go.data(), gx->data());
    } else {
      kernels::avg_pool_backward(g, go.data(), gx->data());
    }
  });
}

template <typename T>
Var<T> linear(Var<T> x, Var<T> w, Var<T> b) {
  constexpr std::string_view op = "linear";
  const Shape& ws = w.shape();
  expect_rank(op, "weight", ws, 2);
  expect_dim(op, "input element count", x.value().size(), ws[1]);
  expect_dim(op, "bias length", b.value().size(), ws[0]);
  const std::size_t out_f = ws[0];
  const std::size_t in_f = ws[1];
  Tensor<T> out(Shape{out_f});
  const bool reference = kernels::backend() == Backend::kReference;
  if (reference) {
    kernels::reference::linear_forward(out_f, in_f, w.value().data(), b.value().data(), x.value().data(), out.data());
  } else {
    kernels::linear_forward(out_f, in_f, w.value().data(), b.value().data(), x.value().data(), out.data());
  }
  return x.tape().record(op, std::move(out), {x, w, b},
                         [x, w, b, out_f, in_f, reference](Tape<T>& t, const Tensor<T>& go) {
    Tensor<T>* gx = t.grad_target(x);
    Tensor<T>* gw = t.grad_target(w);
    Tensor<T>* gb = t.grad_target(b);
    auto ptr = [](Tensor<T>* p) { return p ? p->data() : nullptr; };
    if (reference) {
      kernels::reference::linear_backward(out_f, in_f, w.value().data(), x.value().data(), go.data(), ptr(gx),
                                          ptr(gw), ptr(gb));
    } else {
      kernels::linear_backward(out_f, in_f, w.value().data(), x.value().data(), go.data(), ptr(gx), ptr(gw),
                               ptr(gb));
    }
  });
}

template <typename T>
Var<T> relu(Var<T> x) {
  const Tensor<T>& xv = x.value();
  Tensor<T> out(xv.shape());
  const std::size_t n = xv.size();
  for (std::size_t i = 0; i < n; ++i) out[i] = xv[i] > T{0} ? xv[i] : T{0};
  return x.tape().record("relu", std::move(out), {x}, [x](Tape<T>& t, const Tensor<T>& go) {
    Tensor<T>* gx = t.grad_target(x);
    if (gx == nullptr) return;
    const Tensor<T>& xv = x.value();
    for (std::size_t i = 0; i < go.size(); ++i) {
      if (xv[i] > T{0}) (*gx)[i] += go[i];
    }
  });
}

template <typename T>
Var<T> sigmoid(Var<T> x) {
  const Tensor<T>& xv = x.value();
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const T v = xv[i];
    if (v >= T{0}) {
      out[i] = T{1} / (T{1} + std::exp(-v));
    } else {
      const T e = std::exp(v);
      out[i] = e / (T{1} + e);
    }
  }
  return x.tape().record("sigmoid", std::move(out), {x}, [x](Tape<T>& t, const Tensor<T>& go) {
    Tensor<T>* gx = t.grad_target(x);
    if (gx == nullptr) return;
    const Tensor<T>& xv = x.value();
    for (std::size_t i = 0; i < go.size(); ++i) {
      const T v = xv[i];
      const T s = v >= T{0} ? T{1} / (T{1} + std::exp(-v)) : std::exp(v) / (T{1} + std::exp(v));
      (*gx)[i] += go[i] * s * (T{1} - s);
    }
  });
}

template <typename T>
Var<T> dropout(Var<T> x, double p, Mode mode, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("dropout: p must lie in [0, 1)");
  if (mode == Mode::kEval || p == 0.0) return x;
  const Tensor<T>& xv = x.value();
  Tensor<T> mask(xv.shape());
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  for (auto& m : mask.values()) m = rng.uniform() < p ? T{0} : keep_scale;
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] * mask[i];
  return x.tape().record("dropout", std::move(out), {x},
                         [x, mask = std::move(mask)](Tape<T>& t, const Tensor<T>& go) {
    Tensor<T>* gx = t.grad_target(x);
    if (gx == nullptr) return;
    for (std::size_t i = 0; i < go.size(); ++i) (*gx)[i] += go[i] * mask[i];
  });
}

template <typename T>
Var<T> concat(std::span<const Var<T>> parts) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  Tape<T>& tape = parts.front().tape();
  std::size_t total = 0;
  for (const auto& p : parts) total += p.value().size();
  Tensor<T> out(Shape{total});
  std::size_t offset = 0;
  for (const auto& p : parts) {
    std::copy(p.value().values().begin(), p.value().values().end(), out.values().begin() + offset);
    offset += p.value().size();
  }
  std::vector<Var<T>> inputs(parts.begin(), parts.end());
  return tape.record("concat", std::move(out), parts, [inputs](Tape<T>& t, const Tensor<T>& go) {
    std::size_t offset = 0;
    for (const auto& p : inputs) {
      const std::size_t n = p.value().size();
      if (Tensor<T>* gp = t.grad_target(p)) {
        for (std::size_t i = 0; i < n; ++i) (*gp)[i] += go[offset + i];
      }
      offset += n;
    }
  });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  if (a.shape() != b.shape()) {
    shape_error("add", "operand shapes " + to_string(a.shape()) + " and " + to_string(b.shape()) + " differ");
  }
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return a.tape().record("add", std::move(out), {a, b}, [a, b](Tape<T>& t, const Tensor<T>& go) {
    add_into(t.grad_target(a), go);
    add_into(t.grad_target(b), go);
  });
}

template <typename T>
Var<T> scale(Var<T> a, T factor) {
  Tensor<T> out = a.value();
  for (auto& v : out.values()) v *= factor;
  return a.tape().record("scale", std::move(out), {a}, [a, factor](Tape<T>& t, const Tensor<T>& go) {
    Tensor<T>* ga = t.grad_target(a);
    if (ga == nullptr) return;
    for (std::size_t i = 0; i < go.size(); ++i) (*ga)[i] += go[i] * factor;
  });
}

template <typename T>
Var<T> reshape(Var<T> x, Shape shape) {
  Tensor<T> out = x.value().reshaped(std::move(shape));
  return x.tape().record("reshape", std::move(out), {x}, [x](Tape<T>& t, const Tensor<T>& go) {
    Tensor<T>* gx = t.grad_target(x);
    if (gx == nullptr) return;
    for (std::size_t i = 0; i < go.size(); ++i) (*gx)[i] += go[i];
  });
}

template <typename T>
double bce_sum_value(std::span<const T> probs, std::span<const T> targets) {
  if (probs.size() != targets.size()) {
    throw ShapeError("bce_sum: " + std::to_string(probs.size()) + " probabilities vs " +
                     std::to_string(targets.size()) + " targets");
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double x = std::clamp(static_cast<double>(probs[i]), kBceClamp, 1.0 - kBceClamp);
    const double y = targets[i];
    loss -= y * std::log(x) + (1.0 - y) * std::log(1.0 - x);
  }
  return loss;
}

template <typename T>
Var<T> bce_sum(Var<T> probs, const Tensor<T>& targets) {
  for (T y : targets.values()) {
    if (y != T{0} && y != T{1}) throw std::invalid_argument("bce_sum: targets must be 0 or 1");
  }
  const double loss = bce_sum_value<T>(probs.value().span(), targets.span());
  return probs.tape().record("bce_sum", Tensor<T>::scalar(static_cast<T>(loss)), {probs},
                             [probs, targets](Tape<T>& t, const Tensor<T>& go) {
    Tensor<T>* gp = t.grad_target(probs);
    if (gp == nullptr) return;
    const Tensor<T>& pv = probs.value();
    for (std::size_t i = 0; i < pv.size(); ++i) {
      const double x = pv[i];
      if (x <= kBceClamp || x >= 1.0 - kBceClamp) continue;  // clamp is flat here
      const double y = targets[i];
      (*gp)[i] += static_cast<T>(go[0] * (-y / x + (1.0 - y) / (1.0 - x)));
    }
  });
}

#define LCODOM_INSTANTIATE(T)                                                   \
  template Var<T> conv1d(Var<T>, Var<T>, Var<T>, std::size_t, std::size_t);   \
  template Var<T> conv2d(Var<T>, Var<T>, Var<T>, std::size_t, std::size_t);   \
  template Var<T> avg_pool(Var<T>, std::size_t, std::size_t, int);            \
  template Var<T> linear(Var<T>, Var<T>, Var<T>);                              \
  template Var<T> relu(Var<T>);                                                \
  template Var<T> sigmoid(Var<T>);                                             \
  template Var<T> dropout(Var<T>, double, Mode, Rng&);                         \
  template Var<T> concat(std::span<const Var<T>>);                             \
  template Var<T> bce_sum(Var<T>, const Tensor<T>&);                           \
  template Var<T> add(Var<T>, Var<T>);                                         \
  template Var<T> scale(Var<T>, T);                                            \
  template Var<T> reshape(Var<T>, Shape);                                      \
  template double bce_sum_value<T>(std::span<const T>, std::span<const T>);

LCODOM_INSTANTIATE(float)
LCODOM_INSTANTIATE(double)
#undef LCODOM_INSTANTIATE

}  // namespace lcodom
