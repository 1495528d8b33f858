// Direct nested-loop kernels. Slow and obviously correct; used as the test
// oracle for the optimized kernels and as the benchmark baseline.

#include <cstddef>

#include "lcodom/kernels.hpp"

namespace lcodom::kernels::reference {

template <typename T>
void gemm(std::size_t m, std::size_t n, std::size_t k, const T* a, std::ptrdiff_t a_rs,
          std::ptrdiff_t a_cs, const T* b, std::ptrdiff_t b_rs, std::ptrdiff_t b_cs, T* c,
          std::ptrdiff_t c_rs, std::ptrdiff_t c_cs, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T s = 0;
      for (std::size_t p = 0; p < k; ++p) {
        s += a[static_cast<std::ptrdiff_t>(i) * a_rs + static_cast<std::ptrdiff_t>(p) * a_cs] *
             b[static_cast<std::ptrdiff_t>(p) * b_rs + static_cast<std::ptrdiff_t>(j) * b_cs];
      }
      T& out = c[static_cast<std::ptrdiff_t>(i) * c_rs + static_cast<std::ptrdiff_t>(j) * c_cs];
      out = accumulate ? out + s : s;
    }
  }
}

namespace {

// Input coordinate feeding output (o, tap) or -1 when it falls in the padding.
std::ptrdiff_t source_index(std::size_t o, std::size_t tap, std::size_t stride, std::size_t pad,
                            std::size_t extent) {
  const std::ptrdiff_t i = static_cast<std::ptrdiff_t>(o * stride + tap) - static_cast<std::ptrdiff_t>(pad);
  return (i < 0 || i >= static_cast<std::ptrdiff_t>(extent)) ? -1 : i;
}

}  // namespace

template <typename T>
void conv_forward(const ConvGeometry& g, const T* input, const T* weight, const T* bias, T* output) {
  const std::size_t oh_n = g.out_h();
  const std::size_t ow_n = g.out_w();
  for (std::size_t co = 0; co < g.out_channels; ++co) {
    for (std::size_t oh = 0; oh < oh_n; ++oh) {
      for (std::size_t ow = 0; ow < ow_n; ++ow) {
        T s = bias ? bias[co] : T{0};
        for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
          for (std::size_t kh = 0; kh < g.kernel_h; ++kh) {
            const std::ptrdiff_t ih = source_index(oh, kh, g.stride_h, g.pad_h, g.in_h);
            if (ih < 0) continue;
            for (std::size_t kw = 0; kw < g.kernel_w; ++kw) {
              const std::ptrdiff_t iw = source_index(ow, kw, g.stride_w, g.pad_w, g.in_w);
              if (iw < 0) continue;
              s += weight[((co * g.in_channels + ci) * g.kernel_h + kh) * g.kernel_w + kw] *
                   input[(ci * g.in_h + static_cast<std::size_t>(ih)) * g.in_w + static_cast<std::size_t>(iw)];
            }
          }
        }
        output[(co * oh_n + oh) * ow_n + ow] = s;
      }
    }
  }
}

template <typename T>
void conv_backward(const ConvGeometry& g, const T* input, const T* weight, const T* grad_output,
                   T* grad_input, T* grad_weight, T* grad_bias) {
  const std::size_t oh_n = g.out_h();
  const std::size_t ow_n = g.out_w();
  for (std::size_t co = 0; co < g.out_channels; ++co) {
    for (std::size_t oh = 0; oh < oh_n; ++oh) {
      for (std::size_t ow = 0; ow < ow_n; ++ow) {
        const T go = grad_output[(co * oh_n + oh) * ow_n + ow];
        if (grad_bias) grad_bias[co] += go;
        for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
          for (std::size_t kh = 0; kh < g.kernel_h; ++kh) {
            const std::ptrdiff_t ih = source_index(oh, kh, g.stride_h, g.pad_h, g.in_h);
            if (ih < 0) continue;
            for (std::size_t kw = 0; kw < g.kernel_w; ++kw) {
              const std::ptrdiff_t iw = source_index(ow, kw, g.stride_w, g.pad_w, g.in_w);
              if (iw < 0) continue;
              const std::size_t wi = ((co * g.in_channels + ci) * g.kernel_h + kh) * g.kernel_w + kw;
              const std::size_t xi =
                  (ci * g.in_h + static_cast<std::size_t>(ih)) * g.in_w + static_cast<std::size_t>(iw);
              if (grad_weight) grad_weight[wi] += go * input[xi];
              if (grad_input) grad_input[xi] += go * weight[wi];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void avg_pool_forward(const PoolGeometry& g, const T* input, T* output) {
  const std::size_t oh_n = g.out_h();
  const std::size_t ow_n = g.out_w();
  const T count = static_cast<T>(g.window_h * g.window_w);
  for (std::size_t c = 0; c < g.channels; ++c)
    for (std::size_t oh = 0; oh < oh_n; ++oh)
      for (std::size_t ow = 0; ow < ow_n; ++ow) {
        T s = 0;
        for (std::size_t wh = 0; wh < g.window_h; ++wh)
          for (std::size_t ww = 0; ww < g.window_w; ++ww)
            s += input[(c * g.in_h + oh * g.stride_h + wh) * g.in_w + ow * g.stride_w + ww];
        output[(c * oh_n + oh) * ow_n + ow] = s / count;
      }
}

template <typename T>
void avg_pool_backward(const PoolGeometry& g, const T* grad_output, T* grad_input) {
  const std::size_t oh_n = g.out_h();
  const std::size_t ow_n = g.out_w();
  const T count = static_cast<T>(g.window_h * g.window_w);
  for (std::size_t c = 0; c < g.channels; ++c)
    for (std::size_t oh = 0; oh < oh_n; ++oh)
      for (std::size_t ow = 0; ow < ow_n; ++ow) {
        const T go = grad_output[(c * oh_n + oh) * ow_n + ow] / count;
        for (std::size_t wh = 0; wh < g.window_h; ++wh)
          for (std::size_t ww = 0; ww < g.window_w; ++ww)
            grad_input[(c * g.in_h + oh * g.stride_h + wh) * g.in_w + ow * g.stride_w + ww] += go;
      }
}

template <typename T>
void linear_forward(std::size_t out_features, std::size_t in_features, const T* weight,
                    const T* bias, const T* input, T* output) {
  for (std::size_t o = 0; o < out_features; ++o) {
    T s = bias ? bias[o] : T{0};
    for (std::size_t i = 0; i < in_features; ++i) s += weight[o * in_features + i] * input[i];
    output[o] = s;
  }
}

template <typename T>
void linear_backward(std::size_t out_features, std::size_t in_features, const T* weight,
                     const T* input, const T* grad_output, T* grad_input, T* grad_weight,
                     T* grad_bias) {
  for (std::size_t o = 0; o < out_features; ++o) {
    const T go = grad_output[o];
    if (grad_bias) grad_bias[o] += go;
    for (std::size_t i = 0; i < in_features; ++i) {
      if (grad_weight) grad_weight[o * in_features + i] += go * input[i];
      if (grad_input) grad_input[i] += go * weight[o * in_features + i];
    }
  }
}

#define LCODOM_INSTANTIATE(T)                                                                      \
  template void gemm<T>(std::size_t, std::size_t, std::size_t, const T*, std::ptrdiff_t,          \
                        std::ptrdiff_t, const T*, std::ptrdiff_t, std::ptrdiff_t, T*,              \
                        std::ptrdiff_t, std::ptrdiff_t, bool);                                     \
  template void conv_forward<T>(const ConvGeometry&, const T*, const T*, const T*, T*);           \
  template void conv_backward<T>(const ConvGeometry&, const T*, const T*, const T*, T*, T*, T*);  \
  template void avg_pool_forward<T>(const PoolGeometry&, const T*, T*);                            \
  template void avg_pool_backward<T>(const PoolGeometry&, const T*, T*);                           \
  template void linear_forward<T>(std::size_t, std::size_t, const T*, const T*, const T*, T*);     \
  template void linear_backward<T>(std::size_t, std::size_t, const T*, const T*, const T*, T*, T*, \
                                   T*);

LCODOM_INSTANTIATE(float)
LCODOM_INSTANTIATE(double)
#undef LCODOM_INSTANTIATE

}  // namespace lcodom::kernels::reference
