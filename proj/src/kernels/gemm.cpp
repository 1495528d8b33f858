#include <algorithm>
#include <cstddef>
#include <cstring>
#include <type_traits>
#include <vector>

#if defined(__AVX512F__)
#include <immintrin.h>
#endif

#include "lcodom/kernels.hpp"
#include "gemm_internal.hpp"

namespace lcodom::kernels {
namespace {

// Register tile and cache block sizes. The float path on AVX-512 hosts uses a
// 14x32 tile (28 zmm accumulators); everything else falls back to a portable
// tile the compiler vectorizes.
template <typename T>
struct Blocking;

template <>
struct Blocking<float> {
#if defined(__AVX512F__)
  static constexpr std::size_t kMr = 14;
  static constexpr std::size_t kNr = 32;
#else
  static constexpr std::size_t kMr = 6;
  static constexpr std::size_t kNr = 16;
#endif
  static constexpr std::size_t kKc = 256;
  static constexpr std::size_t kMc = kMr * 18;
  static constexpr std::size_t kNc = kNr * 128;
};

template <>
struct Blocking<double> {
  static constexpr std::size_t kMr = 6;
  static constexpr std::size_t kNr = 8;
  static constexpr std::size_t kKc = 256;
  static constexpr std::size_t kMc = kMr * 16;
  static constexpr std::size_t kNc = kNr * 256;
};

template <typename T, std::size_t Mr, std::size_t Nr>
void micro_kernel_portable(std::size_t kc, const T* a, const T* b, T* tile) {
  T acc[Mr][Nr] = {};
  for (std::size_t p = 0; p < kc; ++p) {
    const T* bp = b + p * Nr;
    const T* ap = a + p * Mr;
    for (std::size_t i = 0; i < Mr; ++i) {
      const T av = ap[i];
      for (std::size_t j = 0; j < Nr; ++j) acc[i][j] += av * bp[j];
    }
  }
  for (std::size_t i = 0; i < Mr; ++i)
    for (std::size_t j = 0; j < Nr; ++j) tile[i * Nr + j] = acc[i][j];
}

#if defined(__AVX512F__)
void micro_kernel_avx512(std::size_t kc, const float* a, const float* b, float* tile) {
  constexpr std::size_t kMr = Blocking<float>::kMr;
  __m512 acc0[kMr];
  __m512 acc1[kMr];
  for (std::size_t i = 0; i < kMr; ++i) {
    acc0[i] = _mm512_setzero_ps();
    acc1[i] = _mm512_setzero_ps();
  }
  for (std::size_t p = 0; p < kc; ++p) {
    const __m512 b0 = _mm512_loadu_ps(b + p * 32);
    const __m512 b1 = _mm512_loadu_ps(b + p * 32 + 16);
    const float* ap = a + p * kMr;
#pragma GCC unroll 14
    for (std::size_t i = 0; i < kMr; ++i) {
      const __m512 av = _mm512_set1_ps(ap[i]);
      acc0[i] = _mm512_fmadd_ps(av, b0, acc0[i]);
      acc1[i] = _mm512_fmadd_ps(av, b1, acc1[i]);
    }
  }
  for (std::size_t i = 0; i < kMr; ++i) {
    _mm512_storeu_ps(tile + i * 32, acc0[i]);
    _mm512_storeu_ps(tile + i * 32 + 16, acc1[i]);
  }
}

// Same product, accumulated straight into a row-major C block of mr x nr.
// With load_c false the block is overwritten.
void micro_kernel_avx512_c(std::size_t kc, const float* a, const float* b, float* c,
                           std::ptrdiff_t rs, std::size_t mr, std::size_t nr, bool load_c) {
  constexpr std::size_t kMr = Blocking<float>::kMr;
  const __mmask16 m0 = nr >= 16 ? __mmask16(0xffff) : __mmask16((1u << nr) - 1);
  const __mmask16 m1 = nr >= 32 ? __mmask16(0xffff) : nr > 16 ? __mmask16((1u << (nr - 16)) - 1) : __mmask16(0);
  __m512 acc0[kMr];
  __m512 acc1[kMr];
#pragma GCC unroll 14
  for (std::size_t i = 0; i < kMr; ++i) {
    if (load_c && i < mr) {
      acc0[i] = _mm512_maskz_loadu_ps(m0, c + static_cast<std::ptrdiff_t>(i) * rs);
      acc1[i] = _mm512_maskz_loadu_ps(m1, c + static_cast<std::ptrdiff_t>(i) * rs + 16);
    } else {
      acc0[i] = _mm512_setzero_ps();
      acc1[i] = _mm512_setzero_ps();
    }
  }
  for (std::size_t p = 0; p < kc; ++p) {
    const __m512 b0 = _mm512_loadu_ps(b + p * 32);
    const __m512 b1 = _mm512_loadu_ps(b + p * 32 + 16);
    const float* ap = a + p * kMr;
#pragma GCC unroll 14
    for (std::size_t i = 0; i < kMr; ++i) {
      const __m512 av = _mm512_set1_ps(ap[i]);
      acc0[i] = _mm512_fmadd_ps(av, b0, acc0[i]);
      acc1[i] = _mm512_fmadd_ps(av, b1, acc1[i]);
    }
  }
#pragma GCC unroll 14
  for (std::size_t i = 0; i < kMr; ++i) {
    if (i >= mr) break;
    _mm512_mask_storeu_ps(c + static_cast<std::ptrdiff_t>(i) * rs, m0, acc0[i]);
    _mm512_mask_storeu_ps(c + static_cast<std::ptrdiff_t>(i) * rs + 16, m1, acc1[i]);
  }
}
#endif

template <typename T>
void micro_kernel(std::size_t kc, const T* a, const T* b, T* tile) {
#if defined(__AVX512F__)
  if constexpr (std::is_same_v<T, float>) {
    micro_kernel_avx512(kc, a, b, tile);
    return;
  }
#endif
  micro_kernel_portable<T, Blocking<T>::kMr, Blocking<T>::kNr>(kc, a, b, tile);
}

#if defined(__AVX512F__)
// In-register transpose of a 16x16 block held as 16 rows.
void transpose16(__m512 r[16]) {
  __m512 t[16];
  for (int i = 0; i < 8; ++i) {
    t[2 * i] = _mm512_unpacklo_ps(r[2 * i], r[2 * i + 1]);
    t[2 * i + 1] = _mm512_unpackhi_ps(r[2 * i], r[2 * i + 1]);
  }
  for (int g = 0; g < 4; ++g) {
    r[4 * g] = _mm512_shuffle_ps(t[4 * g], t[4 * g + 2], 0x44);
    r[4 * g + 1] = _mm512_shuffle_ps(t[4 * g], t[4 * g + 2], 0xee);
    r[4 * g + 2] = _mm512_shuffle_ps(t[4 * g + 1], t[4 * g + 3], 0x44);
    r[4 * g + 3] = _mm512_shuffle_ps(t[4 * g + 1], t[4 * g + 3], 0xee);
  }
  for (int h = 0; h < 2; ++h) {
    for (int q = 0; q < 4; ++q) {
      t[8 * h + q] = _mm512_shuffle_f32x4(r[8 * h + q], r[8 * h + 4 + q], 0x88);
      t[8 * h + 4 + q] = _mm512_shuffle_f32x4(r[8 * h + q], r[8 * h + 4 + q], 0xdd);
    }
  }
  for (int q = 0; q < 4; ++q) {
    r[q] = _mm512_shuffle_f32x4(t[q], t[8 + q], 0x88);
    r[8 + q] = _mm512_shuffle_f32x4(t[q], t[8 + q], 0xdd);
    r[4 + q] = _mm512_shuffle_f32x4(t[4 + q], t[12 + q], 0x88);
    r[12 + q] = _mm512_shuffle_f32x4(t[4 + q], t[12 + q], 0xdd);
  }
}

// dst[p * width + offset + i] = src[i][p] for i < count (at most 16), p < kc, with
// zeros for count <= i < 16. Lanes past `store` are not written.
void pack_transposed(const float* const* src, std::size_t count, std::size_t kc, float* dst,
                     std::size_t width, __mmask16 store) {
  __m512 r[16];
  for (std::size_t p = 0; p < kc; p += 16) {
    const std::size_t len = std::min<std::size_t>(16, kc - p);
    const __mmask16 load = len == 16 ? __mmask16(0xffff) : __mmask16((1u << len) - 1);
    for (std::size_t i = 0; i < 16; ++i)
      r[i] = i < count ? _mm512_maskz_loadu_ps(load, src[i] + p) : _mm512_setzero_ps();
    transpose16(r);
    for (std::size_t q = 0; q < len; ++q) _mm512_mask_storeu_ps(dst + (p + q) * width, store, r[q]);
  }
}
#endif

// dst[p * Mr + i] = A(row0 + i, col0 + p), zero padded past mr.
template <typename T>
void pack_a(std::size_t mr, std::size_t kc, const T* a, std::ptrdiff_t rs, std::ptrdiff_t cs,
            T* dst) {
  constexpr std::size_t kMr = Blocking<T>::kMr;
  if (rs == 1) {
    for (std::size_t p = 0; p < kc; ++p) {
      const T* src = a + static_cast<std::ptrdiff_t>(p) * cs;
      std::size_t i = 0;
      for (; i < mr; ++i) dst[p * kMr + i] = src[i];
      for (; i < kMr; ++i) dst[p * kMr + i] = T{0};
    }
    return;
  }
  const T* rows[kMr];
  for (std::size_t i = 0; i < mr; ++i) rows[i] = a + static_cast<std::ptrdiff_t>(i) * rs;
#if defined(__AVX512F__)
  if constexpr (std::is_same_v<T, float>) {
    if (cs == 1) {
      pack_transposed(rows, mr, kc, dst, kMr, __mmask16((1u << kMr) - 1));
      return;
    }
  }
#endif
  for (std::size_t p = 0; p < kc; ++p) {
    const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(p) * cs;
    T* d = dst + p * kMr;
    std::size_t i = 0;
    for (; i < mr; ++i) d[i] = rows[i][off];
    for (; i < kMr; ++i) d[i] = T{0};
  }
}

// dst[p * Nr + j] = B(row0 + p, col0 + j), zero padded past nr.
template <typename T>
void pack_b(std::size_t nr, std::size_t kc, const T* b, std::ptrdiff_t rs, std::ptrdiff_t cs,
            T* dst) {
  constexpr std::size_t kNr = Blocking<T>::kNr;
  if (cs == 1) {
    for (std::size_t p = 0; p < kc; ++p) {
      const T* src = b + static_cast<std::ptrdiff_t>(p) * rs;
      std::memcpy(dst + p * kNr, src, nr * sizeof(T));
      for (std::size_t j = nr; j < kNr; ++j) dst[p * kNr + j] = T{0};
    }
    return;
  }
  const T* cols[kNr];
  for (std::size_t j = 0; j < nr; ++j) cols[j] = b + static_cast<std::ptrdiff_t>(j) * cs;
#if defined(__AVX512F__)
  if constexpr (std::is_same_v<T, float>) {
    if (rs == 1) {
      for (std::size_t h = 0; h < kNr; h += 16)
        pack_transposed(cols + h, nr > h ? std::min<std::size_t>(16, nr - h) : 0, kc, dst + h, kNr,
                        __mmask16(0xffff));
      return;
    }
  }
#endif
  for (std::size_t p = 0; p < kc; ++p) {
    const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(p) * rs;
    T* d = dst + p * kNr;
    std::size_t j = 0;
    for (; j < nr; ++j) d[j] = cols[j][off];
    for (; j < kNr; ++j) d[j] = T{0};
  }
}

template <typename T>
void store_tile(std::size_t mr, std::size_t nr, const T* tile, T* c, std::ptrdiff_t rs,
                std::ptrdiff_t cs, bool add) {
  constexpr std::size_t kNr = Blocking<T>::kNr;
  for (std::size_t i = 0; i < mr; ++i) {
    T* row = c + static_cast<std::ptrdiff_t>(i) * rs;
    const T* t = tile + i * kNr;
    if (add) {
      for (std::size_t j = 0; j < nr; ++j) row[static_cast<std::ptrdiff_t>(j) * cs] += t[j];
    } else {
      for (std::size_t j = 0; j < nr; ++j) row[static_cast<std::ptrdiff_t>(j) * cs] = t[j];
    }
  }
}

// C block (mr x nr) = [C +] A_panel * B_panel.
template <typename T>
void update_block(std::size_t kc, const T* a, const T* b, T* c, std::ptrdiff_t rs,
                  std::ptrdiff_t cs, std::size_t mr, std::size_t nr, bool add, T* tile) {
#if defined(__AVX512F__)
  if constexpr (std::is_same_v<T, float>) {
    if (cs == 1) {
      micro_kernel_avx512_c(kc, a, b, c, rs, mr, nr, add);
      return;
    }
  }
#endif
  micro_kernel(kc, a, b, tile);
  store_tile(mr, nr, tile, c, rs, cs, add);
}

template <typename T>
struct PackBuffers {
  std::vector<T> a;
  std::vector<T> b;
};

template <typename T>
PackBuffers<T>& pack_buffers() {
  thread_local PackBuffers<T> buffers;
  return buffers;
}

// pack(p0, kc, j0, nr, dst) supplies one B panel.
template <typename T, typename PackFn>
void gemm_blocked(std::size_t m, std::size_t n, std::size_t k, const T* a, std::ptrdiff_t a_rs,
                  std::ptrdiff_t a_cs, const PackFn& pack, T* c, std::ptrdiff_t c_rs,
                  std::ptrdiff_t c_cs, bool accumulate) {
  using B = Blocking<T>;
  auto& buffers = pack_buffers<T>();
  // Equal k blocks, so no thin tail block pays a full pass over C.
  const std::size_t kc_max = (k + (k + B::kKc - 1) / B::kKc - 1) / ((k + B::kKc - 1) / B::kKc);
  const std::size_t mc_max = std::min(B::kMc, (m + B::kMr - 1) / B::kMr * B::kMr);
  const std::size_t nc_max = std::min(B::kNc, (n + B::kNr - 1) / B::kNr * B::kNr);
  buffers.a.resize(mc_max * kc_max);
  buffers.b.resize(nc_max * kc_max);
  T* const a_pack = buffers.a.data();
  T* const b_pack = buffers.b.data();
  const bool parallel = m * n * k > (1u << 18);

#pragma omp parallel if (parallel)
  {
    alignas(64) T tile[B::kMr * B::kNr];
    for (std::size_t jc = 0; jc < n; jc += B::kNc) {
      const std::size_t nc = std::min(B::kNc, n - jc);
      const std::size_t n_panels = (nc + B::kNr - 1) / B::kNr;
      for (std::size_t pc = 0; pc < k; pc += kc_max) {
        const std::size_t kc = std::min(kc_max, k - pc);
        const bool add = accumulate || pc > 0;
        for (std::size_t ic = 0; ic < m; ic += B::kMc) {
          const std::size_t mc = std::min(B::kMc, m - ic);
          const std::size_t m_panels = (mc + B::kMr - 1) / B::kMr;
#pragma omp for schedule(static)
          for (std::size_t ip = 0; ip < m_panels; ++ip) {
            const std::size_t ir = ip * B::kMr;
            pack_a(std::min(B::kMr, mc - ir), kc,
                   a + static_cast<std::ptrdiff_t>(ic + ir) * a_rs + static_cast<std::ptrdiff_t>(pc) * a_cs,
                   a_rs, a_cs, a_pack + ir * kc);
          }
          auto block = [&](std::size_t jp, std::size_t ip) {
            const std::size_t jr = jp * B::kNr;
            const std::size_t ir = ip * B::kMr;
            update_block(kc, a_pack + ir * kc, b_pack + jr * kc,
                         c + static_cast<std::ptrdiff_t>(ic + ir) * c_rs + static_cast<std::ptrdiff_t>(jc + jr) * c_cs,
                         c_rs, c_cs, std::min(B::kMr, mc - ir), std::min(B::kNr, nc - jr), add, tile);
          };
          if (ic == 0) {
            // B panels are packed by the thread that first consumes them, while still in cache.
#pragma omp for schedule(static)
            for (std::size_t jp = 0; jp < n_panels; ++jp) {
              const std::size_t jr = jp * B::kNr;
              pack(pc, kc, jc + jr, std::min(B::kNr, nc - jr), b_pack + jr * kc);
              for (std::size_t ip = 0; ip < m_panels; ++ip) block(jp, ip);
            }
          } else {
#pragma omp for collapse(2) schedule(static)
            for (std::size_t jp = 0; jp < n_panels; ++jp)
              for (std::size_t ip = 0; ip < m_panels; ++ip) block(jp, ip);
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
void gemm(std::size_t m, std::size_t n, std::size_t k, const T* a, std::ptrdiff_t a_rs,
          std::ptrdiff_t a_cs, const T* b, std::ptrdiff_t b_rs, std::ptrdiff_t b_cs, T* c,
          std::ptrdiff_t c_rs, std::ptrdiff_t c_cs, bool accumulate) {
  if (m == 0 || n == 0) return;
  if (k == 0) {
    if (!accumulate) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
          c[static_cast<std::ptrdiff_t>(i) * c_rs + static_cast<std::ptrdiff_t>(j) * c_cs] = T{0};
    }
    return;
  }
  auto strided = [](const T* x, std::ptrdiff_t rs, std::ptrdiff_t cs) {
    return [=](std::size_t p0, std::size_t kc, std::size_t j0, std::size_t nr, T* dst) {
      pack_b(nr, kc, x + static_cast<std::ptrdiff_t>(p0) * rs + static_cast<std::ptrdiff_t>(j0) * cs, rs, cs,
             dst);
    };
  };
  // A narrow C wastes most of each register tile; compute C^T = B^T A^T instead.
  if (n < 2 * Blocking<T>::kNr && m > n) {
    gemm_blocked(n, m, k, b, b_cs, b_rs, strided(a, a_cs, a_rs), c, c_cs, c_rs, accumulate);
    return;
  }
  gemm_blocked(m, n, k, a, a_rs, a_cs, strided(b, b_rs, b_cs), c, c_rs, c_cs, accumulate);
}

namespace detail {

template <typename T>
std::size_t gemm_panel_width() {
  return Blocking<T>::kNr;
}

template <typename T>
void gemm_packed_b(std::size_t m, std::size_t n, std::size_t k, const T* a, std::ptrdiff_t a_rs,
                   std::ptrdiff_t a_cs, const PackB<T>& pack_b, T* c, std::ptrdiff_t c_rs,
                   std::ptrdiff_t c_cs, bool accumulate) {
  if (m == 0 || n == 0) return;
  if (k == 0) {
    if (!accumulate) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
          c[static_cast<std::ptrdiff_t>(i) * c_rs + static_cast<std::ptrdiff_t>(j) * c_cs] = T{0};
    }
    return;
  }
  gemm_blocked(m, n, k, a, a_rs, a_cs, pack_b, c, c_rs, c_cs, accumulate);
}

template std::size_t gemm_panel_width<float>();
template std::size_t gemm_panel_width<double>();
template void gemm_packed_b<float>(std::size_t, std::size_t, std::size_t, const float*, std::ptrdiff_t,
                                   std::ptrdiff_t, const PackB<float>&, float*, std::ptrdiff_t,
                                   std::ptrdiff_t, bool);
template void gemm_packed_b<double>(std::size_t, std::size_t, std::size_t, const double*, std::ptrdiff_t,
                                    std::ptrdiff_t, const PackB<double>&, double*, std::ptrdiff_t,
                                    std::ptrdiff_t, bool);

}  // namespace detail

template void gemm<float>(std::size_t, std::size_t, std::size_t, const float*, std::ptrdiff_t,
                          std::ptrdiff_t, const float*, std::ptrdiff_t, std::ptrdiff_t, float*,
                          std::ptrdiff_t, std::ptrdiff_t, bool);
template void gemm<double>(std::size_t, std::size_t, std::size_t, const double*, std::ptrdiff_t,
                           std::ptrdiff_t, const double*, std::ptrdiff_t, std::ptrdiff_t, double*,
                           std::ptrdiff_t, std::ptrdiff_t, bool);

}  // namespace lcodom::kernels
