#pragma once

// Compute kernels behind the autograd ops. Two implementations share one
// signature set:
//   lcodom::kernels            packed GEMM + im2col, OpenMP-parallel
//   lcodom::kernels::reference direct nested loops, single-threaded
//
// Backward kernels accumulate into their gradient outputs. Every output element
// of the parallel kernels is reduced by exactly one thread in a fixed order, so
// results are bitwise identical for any thread count.

#include <cstddef>

namespace lcodom::kernels {

/// 2D convolution layout. 1D convolutions use in_h = kernel_h = stride_h = 1, pad_h = 0.
struct ConvGeometry {
  std::size_t in_channels = 1;
  std::size_t in_h = 1;
  std::size_t in_w = 1;
  std::size_t out_channels = 1;
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;
  std::size_t stride_h = 1;
  std::size_t stride_w = 1;
  std::size_t pad_h = 0;
  std::size_t pad_w = 0;

  std::size_t out_h() const { return (in_h + 2 * pad_h - kernel_h) / stride_h + 1; }
  std::size_t out_w() const { return (in_w + 2 * pad_w - kernel_w) / stride_w + 1; }
  std::size_t patch_size() const { return in_channels * kernel_h * kernel_w; }
  std::size_t out_positions() const { return out_h() * out_w(); }
};

/// Average pooling without padding; windows that do not fit are dropped.
struct PoolGeometry {
  std::size_t channels = 1;
  std::size_t in_h = 1;
  std::size_t in_w = 1;
  std::size_t window_h = 1;
  std::size_t window_w = 1;
  std::size_t stride_h = 1;
  std::size_t stride_w = 1;

  std::size_t out_h() const { return (in_h - window_h) / stride_h + 1; }
  std::size_t out_w() const { return (in_w - window_w) / stride_w + 1; }
};

/// C = A * B (or C += A * B). Element (i, j) of a matrix X lives at
/// x[i * x_rs + j * x_cs], so transposed operands are expressed through strides.
template <typename T>
void gemm(std::size_t m, std::size_t n, std::size_t k,
          const T* a, std::ptrdiff_t a_rs, std::ptrdiff_t a_cs,
          const T* b, std::ptrdiff_t b_rs, std::ptrdiff_t b_cs,
          T* c, std::ptrdiff_t c_rs, std::ptrdiff_t c_cs, bool accumulate);

template <typename T>
void conv_forward(const ConvGeometry& g, const T* input, const T* weight, const T* bias, T* output);

/// grad_input may be null when the input does not need a gradient.
template <typename T>
void conv_backward(const ConvGeometry& g, const T* input, const T* weight, const T* grad_output,
                   T* grad_input, T* grad_weight, T* grad_bias);

template <typename T>
void avg_pool_forward(const PoolGeometry& g, const T* input, T* output);

template <typename T>
void avg_pool_backward(const PoolGeometry& g, const T* grad_output, T* grad_input);

/// y[out] = W[out x in] x[in] + b[out]
template <typename T>
void linear_forward(std::size_t out_features, std::size_t in_features, const T* weight,
                    const T* bias, const T* input, T* output);

template <typename T>
void linear_backward(std::size_t out_features, std::size_t in_features, const T* weight,
                     const T* input, const T* grad_output, T* grad_input, T* grad_weight,
                     T* grad_bias);

namespace reference {

template <typename T>
void conv_forward(const ConvGeometry& g, const T* input, const T* weight, const T* bias, T* output);

template <typename T>
void conv_backward(const ConvGeometry& g, const T* input, const T* weight, const T* grad_output,
                   T* grad_input, T* grad_weight, T* grad_bias);

template <typename T>
void avg_pool_forward(const PoolGeometry& g, const T* input, T* output);

template <typename T>
void avg_pool_backward(const PoolGeometry& g, const T* grad_output, T* grad_input);

template <typename T>
void linear_forward(std::size_t out_features, std::size_t in_features, const T* weight,
                    const T* bias, const T* input, T* output);

template <typename T>
void linear_backward(std::size_t out_features, std::size_t in_features, const T* weight,
                     const T* input, const T* grad_output, T* grad_input, T* grad_weight,
                     T* grad_bias);

template <typename T>
void gemm(std::size_t m, std::size_t n, std::size_t k,
          const T* a, std::ptrdiff_t a_rs, std::ptrdiff_t a_cs,
          const T* b, std::ptrdiff_t b_rs, std::ptrdiff_t b_cs,
          T* c, std::ptrdiff_t c_rs, std::ptrdiff_t c_cs, bool accumulate);

}  // namespace reference

/// Which implementation the autograd ops dispatch to. Defaults to kOptimized.
enum class Backend { kOptimized, kReference };
void set_backend(Backend backend);
Backend backend();

}  // namespace lcodom::kernels
