#pragma once

#include <cstddef>
#include <functional>

namespace lcodom::kernels::detail {

/// Columns per packed B panel for element type T.
template <typename T>
std::size_t gemm_panel_width();

/// Fills dst[p * width + j] = B(p0 + p, j0 + j) for p < kc, j < nr, and zeros for nr <= j < width.
/// Called concurrently for disjoint panels.
template <typename T>
using PackB = std::function<void(std::size_t p0, std::size_t kc, std::size_t j0, std::size_t nr, T* dst)>;

/// gemm() with B supplied panel by panel, for operands never materialized in memory.
template <typename T>
void gemm_packed_b(std::size_t m, std::size_t n, std::size_t k, const T* a, std::ptrdiff_t a_rs,
                   std::ptrdiff_t a_cs, const PackB<T>& pack_b, T* c, std::ptrdiff_t c_rs,
                   std::ptrdiff_t c_cs, bool accumulate);

}  // namespace lcodom::kernels::detail
