#include <algorithm>
#include <atomic>
#include <cstddef>
#include <type_traits>
#include <utility>
#include <vector>

#if defined(__AVX512F__)
#include <immintrin.h>
#endif

#include "lcodom/kernels.hpp"
#include "gemm_internal.hpp"

namespace lcodom::kernels {
namespace {

constexpr std::size_t kParallelThreshold = 1u << 15;

template <typename T>
std::vector<T>& column_buffer() {
  thread_local std::vector<T> buffer;
  return buffer;
}

bool is_pointwise(const ConvGeometry& g) {
  return g.kernel_h == 1 && g.kernel_w == 1 && g.stride_h == 1 && g.stride_w == 1 &&
         g.pad_h == 0 && g.pad_w == 0;
}

// col[(ci, kh, kw), (oh, ow)] = input[ci, oh * sh - ph + kh, ow * sw - pw + kw], zero outside.
template <typename T>
void im2col(const ConvGeometry& g, const T* input, T* col) {
  const std::size_t oh_n = g.out_h();
  const std::size_t ow_n = g.out_w();
  const std::size_t rows = g.patch_size();
  const std::size_t n = oh_n * ow_n;
#pragma omp parallel for schedule(static) if (rows * n > kParallelThreshold)
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t kw = r % g.kernel_w;
    const std::size_t kh = (r / g.kernel_w) % g.kernel_h;
    const std::size_t ci = r / (g.kernel_w * g.kernel_h);
    const T* plane = input + ci * g.in_h * g.in_w;
    T* dst = col + r * n;
    for (std::size_t oh = 0; oh < oh_n; ++oh) {
      const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.stride_h + kh) -
                                static_cast<std::ptrdiff_t>(g.pad_h);
      T* out_row = dst + oh * ow_n;
      if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.in_h)) {
        std::fill(out_row, out_row + ow_n, T{0});
        continue;
      }
      const T* in_row = plane + static_cast<std::size_t>(ih) * g.in_w;
      // Output columns whose source lies inside the row: ow * sw + kw - pw in [0, in_w).
      const std::size_t lo = std::min(ow_n, kw >= g.pad_w ? std::size_t{0} : (g.pad_w - kw + g.stride_w - 1) / g.stride_w);
      const std::size_t reach = g.in_w + g.pad_w - kw;  // iw < in_w  <=>  ow * sw < reach
      const std::size_t hi = std::max(lo, std::min(ow_n, kw > g.in_w + g.pad_w ? std::size_t{0} : (reach + g.stride_w - 1) / g.stride_w));
      std::fill(out_row, out_row + lo, T{0});
      const T* src = in_row + (lo * g.stride_w + kw - g.pad_w);
      if (g.stride_w == 1) {
        std::copy(src, src + (hi - lo), out_row + lo);
      } else {
        for (std::size_t ow = lo; ow < hi; ++ow) out_row[ow] = src[(ow - lo) * g.stride_w];
      }
      std::fill(out_row + hi, out_row + ow_n, T{0});
    }
  }
}

// Adjoint of im2col. Each input channel is owned by one thread.
template <typename T>
void col2im_add(const ConvGeometry& g, const T* col, T* grad_input) {
  const std::size_t oh_n = g.out_h();
  const std::size_t ow_n = g.out_w();
  const std::size_t n = oh_n * ow_n;
  const std::size_t taps = g.kernel_h * g.kernel_w;
#pragma omp parallel for schedule(static) if (g.patch_size() * n > kParallelThreshold)
  for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
    T* plane = grad_input + ci * g.in_h * g.in_w;
    for (std::size_t tap = 0; tap < taps; ++tap) {
      const std::size_t kh = tap / g.kernel_w;
      const std::size_t kw = tap % g.kernel_w;
      const T* src = col + (ci * taps + tap) * n;
      for (std::size_t oh = 0; oh < oh_n; ++oh) {
        const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.stride_h + kh) -
                                  static_cast<std::ptrdiff_t>(g.pad_h);
        if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
        T* in_row = plane + static_cast<std::size_t>(ih) * g.in_w;
        const T* src_row = src + oh * ow_n;
        for (std::size_t ow = 0; ow < ow_n; ++ow) {
          const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * g.stride_w + kw) -
                                    static_cast<std::ptrdiff_t>(g.pad_w);
          if (iw >= 0 && iw < static_cast<std::ptrdiff_t>(g.in_w)) in_row[iw] += src_row[ow];
        }
      }
    }
  }
}

// out[i] = src[2 * i] for i < count. Reads nothing past src[2 * count - 2].
template <typename T>
void copy_stride2(const T* src, std::size_t count, T* out) {
  std::size_t i = 0;
#if defined(__AVX512F__)
  if constexpr (std::is_same_v<T, float>) {
    const __m512i even = _mm512_setr_epi32(0, 2, 4, 6, 8, 10, 12, 14, 16, 18, 20, 22, 24, 26, 28, 30);
    for (; i < count; i += 16) {
      const std::size_t c = std::min<std::size_t>(16, count - i);
      const std::size_t span = 2 * c - 1;
      const __mmask16 lo = span >= 16 ? __mmask16(0xffff) : __mmask16((1u << span) - 1);
      const __mmask16 hi = span > 16 ? __mmask16((1u << (span - 16)) - 1) : __mmask16(0);
      const __m512 v0 = _mm512_maskz_loadu_ps(lo, src + 2 * i);
      const __m512 v1 = _mm512_maskz_loadu_ps(hi, src + 2 * i + 16);
      const __mmask16 keep = c == 16 ? __mmask16(0xffff) : __mmask16((1u << c) - 1);
      _mm512_mask_storeu_ps(out + i, keep, _mm512_permutex2var_ps(v0, even, v1));
    }
    return;
  }
#endif
  for (; i < count; ++i) out[i] = src[2 * i];
}

// Packs rows [p0, p0 + kc) and columns [j0, j0 + nr) of the im2col matrix straight
// from the input, in the layout of a packed GEMM panel of the given width.
template <typename T>
void pack_columns(const ConvGeometry& g, const T* input, std::size_t p0, std::size_t kc, std::size_t j0,
                  std::size_t nr, std::size_t width, T* dst) {
  struct Run {
    std::size_t oh, ow0, ow1, offset;
  };
  const std::size_t ow_n = g.out_w();
  Run runs[64];
  std::size_t n_runs = 0;
  for (std::size_t j = j0; j < j0 + nr && n_runs < 64;) {
    const std::size_t oh = j / ow_n;
    const std::size_t ow0 = j % ow_n;
    const std::size_t ow1 = std::min(ow_n, ow0 + (j0 + nr - j));
    runs[n_runs++] = {oh, ow0, ow1, j - j0};
    j += ow1 - ow0;
  }
  std::size_t kw = p0 % g.kernel_w;
  std::size_t kh = (p0 / g.kernel_w) % g.kernel_h;
  std::size_t ci = p0 / (g.kernel_w * g.kernel_h);
  // Output columns whose source lies inside the row depend only on kw.
  const auto bounds = [&](std::size_t kw_) {
    const std::size_t lo = kw_ >= g.pad_w ? 0 : (g.pad_w - kw_ + g.stride_w - 1) / g.stride_w;
    const std::size_t hi = kw_ > g.in_w + g.pad_w ? 0 : (g.in_w + g.pad_w - kw_ + g.stride_w - 1) / g.stride_w;
    return std::pair{lo, std::max(lo, hi)};
  };
  for (std::size_t p = 0; p < kc; ++p) {
    T* d = dst + p * width;
    const T* plane = input + ci * g.in_h * g.in_w;
    const auto [lo, hi] = bounds(kw);
    for (std::size_t r = 0; r < n_runs; ++r) {
      const Run& run = runs[r];
      T* out = d + run.offset - run.ow0;
      const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(run.oh * g.stride_h + kh) -
                                static_cast<std::ptrdiff_t>(g.pad_h);
      if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.in_h)) {
        std::fill(out + run.ow0, out + run.ow1, T{0});
        continue;
      }
      const std::size_t a = std::clamp(lo, run.ow0, run.ow1);
      const std::size_t b = std::clamp(hi, a, run.ow1);
      std::fill(out + run.ow0, out + a, T{0});
      const T* src = plane + static_cast<std::size_t>(ih) * g.in_w + (a * g.stride_w + kw - g.pad_w);
      if (g.stride_w == 1) {
        std::copy(src, src + (b - a), out + a);
      } else if (g.stride_w == 2) {
        copy_stride2(src, b - a, out + a);
      } else {
        for (std::size_t ow = a; ow < b; ++ow) out[ow] = src[(ow - a) * g.stride_w];
      }
      std::fill(out + b, out + run.ow1, T{0});
    }
    std::fill(d + nr, d + width, T{0});
    if (++kw == g.kernel_w) {
      kw = 0;
      if (++kh == g.kernel_h) {
        kh = 0;
        ++ci;
      }
    }
  }
}

template <typename T>
const T* columns_for(const ConvGeometry& g, const T* input) {
  if (is_pointwise(g)) return input;
  auto& col = column_buffer<T>();
  col.resize(g.patch_size() * g.out_positions());
  im2col(g, input, col.data());
  return col.data();
}

// Independent lanes let the compiler vectorize without reassociating the sum.
template <typename T>
T dot(const T* a, const T* b, std::size_t n) {
  constexpr std::size_t kLanes = 16;
  T lanes[kLanes] = {};
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes)
    for (std::size_t l = 0; l < kLanes; ++l) lanes[l] += a[i + l] * b[i + l];
  T tail = 0;
  for (; i < n; ++i) tail += a[i] * b[i];
  for (std::size_t w = kLanes / 2; w > 0; w /= 2)
    for (std::size_t l = 0; l < w; ++l) lanes[l] += lanes[l + w];
  return lanes[0] + tail;
}

std::atomic<Backend> g_backend{Backend::kOptimized};

}  // namespace

void set_backend(Backend b) { g_backend.store(b); }
Backend backend() { return g_backend.load(); }

template <typename T>
void conv_forward(const ConvGeometry& g, const T* input, const T* weight, const T* bias, T* output) {
  const std::size_t n = g.out_positions();
  const std::size_t k = g.patch_size();
  if (bias != nullptr) {
#pragma omp parallel for schedule(static) if (g.out_channels * n > kParallelThreshold)
    for (std::size_t co = 0; co < g.out_channels; ++co) std::fill_n(output + co * n, n, bias[co]);
  }
  const std::size_t width = detail::gemm_panel_width<T>();
  // Narrow outputs go through the transposed GEMM, which needs explicit columns.
  if (is_pointwise(g) || n < 2 * width) {
    gemm<T>(g.out_channels, n, k, weight, static_cast<std::ptrdiff_t>(k), 1, columns_for(g, input),
            static_cast<std::ptrdiff_t>(n), 1, output, static_cast<std::ptrdiff_t>(n), 1, bias != nullptr);
    return;
  }
  detail::gemm_packed_b<T>(
      g.out_channels, n, k, weight, static_cast<std::ptrdiff_t>(k), 1,
      [&](std::size_t p0, std::size_t kc, std::size_t j0, std::size_t nr, T* dst) {
        pack_columns(g, input, p0, kc, j0, nr, width, dst);
      },
      output, static_cast<std::ptrdiff_t>(n), 1, bias != nullptr);
}

template <typename T>
void conv_backward(const ConvGeometry& g, const T* input, const T* weight, const T* grad_output,
                   T* grad_input, T* grad_weight, T* grad_bias) {
  const std::size_t n = g.out_positions();
  const std::size_t k = g.patch_size();
  const std::size_t m = g.out_channels;
  if (grad_bias != nullptr) {
    for (std::size_t co = 0; co < m; ++co) {
      const T* row = grad_output + co * n;
      T s = 0;
      for (std::size_t i = 0; i < n; ++i) s += row[i];
      grad_bias[co] += s;
    }
  }
  if (grad_weight != nullptr) {
    // dW[m x k] += dY[m x n] * col^T
    const T* col = columns_for(g, input);
    gemm<T>(m, k, n, grad_output, static_cast<std::ptrdiff_t>(n), 1, col, 1,
            static_cast<std::ptrdiff_t>(n), grad_weight, static_cast<std::ptrdiff_t>(k), 1, true);
  }
  if (grad_input != nullptr) {
    // dcol[k x n] = W^T * dY, scattered back onto the input.
    if (is_pointwise(g)) {
      gemm<T>(k, n, m, weight, 1, static_cast<std::ptrdiff_t>(k), grad_output,
              static_cast<std::ptrdiff_t>(n), 1, grad_input, static_cast<std::ptrdiff_t>(n), 1, true);
      return;
    }
    std::vector<T> dcol(k * n);
    gemm<T>(k, n, m, weight, 1, static_cast<std::ptrdiff_t>(k), grad_output,
            static_cast<std::ptrdiff_t>(n), 1, dcol.data(), static_cast<std::ptrdiff_t>(n), 1, false);
    col2im_add(g, dcol.data(), grad_input);
  }
}

template <typename T>
void avg_pool_forward(const PoolGeometry& g, const T* input, T* output) {
  const std::size_t oh_n = g.out_h();
  const std::size_t ow_n = g.out_w();
  const T count = static_cast<T>(g.window_h * g.window_w);
#pragma omp parallel for schedule(static) if (g.channels * g.in_h * g.in_w > kParallelThreshold)
  for (std::size_t c = 0; c < g.channels; ++c) {
    const T* plane = input + c * g.in_h * g.in_w;
    T* out = output + c * oh_n * ow_n;
    for (std::size_t oh = 0; oh < oh_n; ++oh) {
      for (std::size_t ow = 0; ow < ow_n; ++ow) {
        T s = 0;
        for (std::size_t wh = 0; wh < g.window_h; ++wh) {
          const T* row = plane + (oh * g.stride_h + wh) * g.in_w + ow * g.stride_w;
          for (std::size_t ww = 0; ww < g.window_w; ++ww) s += row[ww];
        }
        out[oh * ow_n + ow] = s / count;
      }
    }
  }
}

template <typename T>
void avg_pool_backward(const PoolGeometry& g, const T* grad_output, T* grad_input) {
  const std::size_t oh_n = g.out_h();
  const std::size_t ow_n = g.out_w();
  const T count = static_cast<T>(g.window_h * g.window_w);
#pragma omp parallel for schedule(static) if (g.channels * g.in_h * g.in_w > kParallelThreshold)
  for (std::size_t c = 0; c < g.channels; ++c) {
    T* plane = grad_input + c * g.in_h * g.in_w;
    const T* go = grad_output + c * oh_n * ow_n;
    for (std::size_t oh = 0; oh < oh_n; ++oh) {
      for (std::size_t ow = 0; ow < ow_n; ++ow) {
        const T v = go[oh * ow_n + ow] / count;
        for (std::size_t wh = 0; wh < g.window_h; ++wh) {
          T* row = plane + (oh * g.stride_h + wh) * g.in_w + ow * g.stride_w;
          for (std::size_t ww = 0; ww < g.window_w; ++ww) row[ww] += v;
        }
      }
    }
  }
}

template <typename T>
void linear_forward(std::size_t out_features, std::size_t in_features, const T* weight,
                    const T* bias, const T* input, T* output) {
#pragma omp parallel for schedule(static) if (out_features * in_features > kParallelThreshold)
  for (std::size_t o = 0; o < out_features; ++o) {
    output[o] = dot(weight + o * in_features, input, in_features) + (bias ? bias[o] : T{0});
  }
}

template <typename T>
void linear_backward(std::size_t out_features, std::size_t in_features, const T* weight,
                     const T* input, const T* grad_output, T* grad_input, T* grad_weight,
                     T* grad_bias) {
  const bool parallel = out_features * in_features > kParallelThreshold;
  if (grad_bias != nullptr) {
    for (std::size_t o = 0; o < out_features; ++o) grad_bias[o] += grad_output[o];
  }
  if (grad_weight != nullptr) {
#pragma omp parallel for schedule(static) if (parallel)
    for (std::size_t o = 0; o < out_features; ++o) {
      const T go = grad_output[o];
      if (go == T{0}) continue;
      T* row = grad_weight + o * in_features;
      for (std::size_t i = 0; i < in_features; ++i) row[i] += go * input[i];
    }
  }
  if (grad_input != nullptr) {
    constexpr std::size_t kChunk = 4096;
    const std::size_t chunks = (in_features + kChunk - 1) / kChunk;
#pragma omp parallel for schedule(static) if (parallel)
    for (std::size_t ch = 0; ch < chunks; ++ch) {
      const std::size_t lo = ch * kChunk;
      const std::size_t hi = std::min(in_features, lo + kChunk);
      for (std::size_t o = 0; o < out_features; ++o) {
        const T go = grad_output[o];
        const T* row = weight + o * in_features;
        for (std::size_t i = lo; i < hi; ++i) grad_input[i] += go * row[i];
      }
    }
  }
}

#define LCODOM_INSTANTIATE(T)                                                                      \
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

}  // namespace lcodom::kernels
