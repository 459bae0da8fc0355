// AVX2 + FMA variants. Compiled with -mavx2 -mfma; only reached through
// avx2_kernels(), which checks the CPU first.

#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <type_traits>

#include "mcfuse/simd/kernels.hpp"

namespace mcfuse::simd {
namespace {

inline float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  lo = _mm_add_ps(lo, _mm_movehl_ps(lo, lo));
  lo = _mm_add_ss(lo, _mm_shuffle_ps(lo, lo, 1));
  return _mm_cvtss_f32(lo);
}

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  lo = _mm_add_sd(lo, _mm_unpackhi_pd(lo, lo));
  return _mm_cvtsd_f64(lo);
}

// ---------------------------------------------------------------- GEMM

template <int MR>
inline void micro16(std::size_t k, const float* a, std::size_t lda, const float* b,
                    std::size_t ldb, float* c, std::size_t ldc) {
  __m256 acc0[MR], acc1[MR];
  for (int r = 0; r < MR; ++r) {
    acc0[r] = _mm256_loadu_ps(c + r * ldc);
    acc1[r] = _mm256_loadu_ps(c + r * ldc + 8);
  }
  for (std::size_t p = 0; p < k; ++p) {
    const __m256 b0 = _mm256_loadu_ps(b + p * ldb);
    const __m256 b1 = _mm256_loadu_ps(b + p * ldb + 8);
    for (int r = 0; r < MR; ++r) {
      const __m256 av = _mm256_broadcast_ss(a + r * lda + p);
      acc0[r] = _mm256_fmadd_ps(av, b0, acc0[r]);
      acc1[r] = _mm256_fmadd_ps(av, b1, acc1[r]);
    }
  }
  for (int r = 0; r < MR; ++r) {
    _mm256_storeu_ps(c + r * ldc, acc0[r]);
    _mm256_storeu_ps(c + r * ldc + 8, acc1[r]);
  }
}

template <int MR>
inline void micro8(std::size_t k, const float* a, std::size_t lda, const float* b,
                   std::size_t ldb, float* c, std::size_t ldc) {
  __m256 acc[MR];
  for (int r = 0; r < MR; ++r) acc[r] = _mm256_loadu_ps(c + r * ldc);
  for (std::size_t p = 0; p < k; ++p) {
    const __m256 b0 = _mm256_loadu_ps(b + p * ldb);
    for (int r = 0; r < MR; ++r)
      acc[r] = _mm256_fmadd_ps(_mm256_broadcast_ss(a + r * lda + p), b0, acc[r]);
  }
  for (int r = 0; r < MR; ++r) _mm256_storeu_ps(c + r * ldc, acc[r]);
}

template <int W>
void strip(std::size_t m, std::size_t k, const float* a, std::size_t lda, const float* b,
           std::size_t ldb, float* c, std::size_t ldc) {
  constexpr int MR = W == 16 ? 6 : 8;
  auto kernel = [&](auto rows, std::size_t i) {
    constexpr int R = decltype(rows)::value;
    if constexpr (W == 16)
      micro16<R>(k, a + i * lda, lda, b, ldb, c + i * ldc, ldc);
    else
      micro8<R>(k, a + i * lda, lda, b, ldb, c + i * ldc, ldc);
  };
  std::size_t i = 0;
  for (; i + MR <= m; i += MR) kernel(std::integral_constant<int, MR>{}, i);
  switch (m - i) {
    case 7: if constexpr (MR > 7) kernel(std::integral_constant<int, 7>{}, i); break;
    case 6: if constexpr (MR > 6) kernel(std::integral_constant<int, 6>{}, i); break;
    case 5: kernel(std::integral_constant<int, 5>{}, i); break;
    case 4: kernel(std::integral_constant<int, 4>{}, i); break;
    case 3: kernel(std::integral_constant<int, 3>{}, i); break;
    case 2: kernel(std::integral_constant<int, 2>{}, i); break;
    case 1: kernel(std::integral_constant<int, 1>{}, i); break;
    default: break;
  }
}

float dot(std::size_t n, const float* x, const float* y);

void gemm(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda,
          const float* b, std::size_t ldb, float* c, std::size_t ldc) {
  if (n == 1 && ldb == 1) {
    for (std::size_t i = 0; i < m; ++i) c[i * ldc] += dot(k, a + i * lda, b);
    return;
  }
  std::size_t j = 0;
  for (; j + 16 <= n; j += 16) strip<16>(m, k, a, lda, b + j, ldb, c + j, ldc);
  for (; j + 8 <= n; j += 8) strip<8>(m, k, a, lda, b + j, ldb, c + j, ldc);
  if (j < n) {
    for (std::size_t i = 0; i < m; ++i) {
      float* crow = c + i * ldc;
      for (std::size_t p = 0; p < k; ++p) {
        const float av = a[i * lda + p];
        const float* brow = b + p * ldb;
        for (std::size_t jj = j; jj < n; ++jj) crow[jj] += av * brow[jj];
      }
    }
  }
}

// ---------------------------------------------------------------- vector ops

void axpy(std::size_t n, float alpha, const float* x, float* y) {
  const __m256 va = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void axpy_stride2(std::size_t n, float alpha, const float* x, float* y) {
  const __m256 va = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  // Reads x[2i .. 2i+15]; stop while the last full pair of loads is in range.
  for (; i + 8 <= n; i += 8) {
    const __m256 lo = _mm256_loadu_ps(x + 2 * i);
    const __m256 hi = _mm256_loadu_ps(x + 2 * i + 8);
    __m256 even = _mm256_shuffle_ps(lo, hi, _MM_SHUFFLE(2, 0, 2, 0));
    even = _mm256_castpd_ps(_mm256_permute4x64_pd(_mm256_castps_pd(even), _MM_SHUFFLE(3, 1, 2, 0)));
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, even, _mm256_loadu_ps(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[2 * i];
}

float dot(std::size_t n, const float* x, const float* y) {
  __m256 s0 = _mm256_setzero_ps(), s1 = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    s0 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i), s0);
    s1 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i + 8), _mm256_loadu_ps(y + i + 8), s1);
  }
  for (; i + 8 <= n; i += 8) s0 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i), s0);
  float s = hsum(_mm256_add_ps(s0, s1));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

double sum(std::size_t n, const float* x) {
  __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 v = _mm256_loadu_ps(x + i);
    s0 = _mm256_add_pd(s0, _mm256_cvtps_pd(_mm256_castps256_ps128(v)));
    s1 = _mm256_add_pd(s1, _mm256_cvtps_pd(_mm256_extractf128_ps(v, 1)));
  }
  double s = hsum(_mm256_add_pd(s0, s1));
  for (; i < n; ++i) s += x[i];
  return s;
}

void scale(std::size_t n, float s, float* x) {
  const __m256 vs = _mm256_set1_ps(s);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) _mm256_storeu_ps(x + i, _mm256_mul_ps(vs, _mm256_loadu_ps(x + i)));
  for (; i < n; ++i) x[i] *= s;
}

void add(std::size_t n, const float* x, float* y) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  for (; i < n; ++i) y[i] += x[i];
}

void mul(std::size_t n, const float* a, const float* b, float* out) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

// exp(x) via 2^n * p(r), Cephes single-precision coefficients (~2 ulp).
inline __m256 exp_ps(__m256 x) {
  x = _mm256_min_ps(x, _mm256_set1_ps(88.3762626647949f));
  x = _mm256_max_ps(x, _mm256_set1_ps(-88.3762626647949f));
  __m256 fx = _mm256_fmadd_ps(x, _mm256_set1_ps(1.44269504088896341f), _mm256_set1_ps(0.5f));
  fx = _mm256_floor_ps(fx);
  x = _mm256_fnmadd_ps(fx, _mm256_set1_ps(0.693359375f), x);
  x = _mm256_fnmadd_ps(fx, _mm256_set1_ps(-2.12194440e-4f), x);
  __m256 y = _mm256_set1_ps(1.9875691500e-4f);
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(1.3981999507e-3f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(8.3334519073e-3f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(4.1665795894e-2f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(1.6666665459e-1f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(5.0000001201e-1f));
  y = _mm256_fmadd_ps(y, _mm256_mul_ps(x, x), _mm256_add_ps(x, _mm256_set1_ps(1.0f)));
  __m256i e = _mm256_add_epi32(_mm256_cvttps_epi32(fx), _mm256_set1_epi32(127));
  e = _mm256_slli_epi32(e, 23);
  return _mm256_mul_ps(y, _mm256_castsi256_ps(e));
}

inline __m256 sigmoid_ps(__m256 x) {
  const __m256 one = _mm256_set1_ps(1.0f);
  const __m256 e = exp_ps(_mm256_sub_ps(_mm256_setzero_ps(), x));
  return _mm256_div_ps(one, _mm256_add_ps(one, e));
}

// The tail goes through the same vector code via a padded copy, so an
// element's result does not depend on its position in the buffer (batch
// invariance of the backbone relies on this).
template <class F>
void map_ps(std::size_t n, const float* x, float* y, F f) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) _mm256_storeu_ps(y + i, f(_mm256_loadu_ps(x + i)));
  if (i < n) {
    alignas(32) float buf[8] = {};
    std::copy(x + i, x + n, buf);
    _mm256_store_ps(buf, f(_mm256_load_ps(buf)));
    std::copy(buf, buf + (n - i), y + i);
  }
}

void sigmoid(std::size_t n, const float* x, float* y) { map_ps(n, x, y, sigmoid_ps); }

void silu(std::size_t n, const float* x, float* y) {
  map_ps(n, x, y, [](__m256 v) { return _mm256_mul_ps(v, sigmoid_ps(v)); });
}

void relu(std::size_t n, const float* x, float* y) {
  const __m256 z = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) _mm256_storeu_ps(y + i, _mm256_max_ps(_mm256_loadu_ps(x + i), z));
  for (; i < n; ++i) y[i] = std::max(x[i], 0.0f);
}

void minmax(std::size_t n, const float* x, float* lo, float* hi) {
  float a = x[0], b = x[0];
  std::size_t i = 0;
  if (n >= 8) {
    __m256 vlo = _mm256_loadu_ps(x), vhi = vlo;
    for (i = 8; i + 8 <= n; i += 8) {
      const __m256 v = _mm256_loadu_ps(x + i);
      vlo = _mm256_min_ps(vlo, v);
      vhi = _mm256_max_ps(vhi, v);
    }
    alignas(32) float l[8], h[8];
    _mm256_store_ps(l, vlo);
    _mm256_store_ps(h, vhi);
    a = *std::min_element(l, l + 8);
    b = *std::max_element(h, h + 8);
  }
  for (; i < n; ++i) {
    a = std::min(a, x[i]);
    b = std::max(b, x[i]);
  }
  *lo = a;
  *hi = b;
}

// Same operation order as the scalar reference, so results are bit-identical.
void rescale_round(std::size_t n, float lo, float hi, const float* x, float* y) {
  const double l = lo, range = static_cast<double>(hi) - l;
  const __m256d vl = _mm256_set1_pd(l), vr = _mm256_set1_pd(range);
  const __m256d v255 = _mm256_set1_pd(255.0), half = _mm256_set1_pd(0.5);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d t = _mm256_cvtps_pd(_mm_loadu_ps(x + i));
    t = _mm256_mul_pd(_mm256_div_pd(_mm256_sub_pd(t, vl), vr), v255);
    t = _mm256_floor_pd(_mm256_add_pd(t, half));
    _mm_storeu_ps(y + i, _mm256_cvtpd_ps(t));
  }
  for (; i < n; ++i) {
    const double t = (static_cast<double>(x[i]) - l) / range * 255.0;
    y[i] = static_cast<float>(std::floor(t + 0.5));
  }
}

void mat3(std::size_t n, const double* m, const double* offset, double s, const float* in0,
          const float* in1, const float* in2, float* out0, float* out1, float* out2) {
  const __m256d vs = _mm256_set1_pd(s);
  __m256d vm[9], vo[3];
  for (int i = 0; i < 9; ++i) vm[i] = _mm256_set1_pd(m[i]);
  for (int i = 0; i < 3; ++i) vo[i] = _mm256_set1_pd(offset[i]);
  float* outs[3] = {out0, out1, out2};
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d a = _mm256_mul_pd(_mm256_cvtps_pd(_mm_loadu_ps(in0 + i)), vs);
    const __m256d b = _mm256_mul_pd(_mm256_cvtps_pd(_mm_loadu_ps(in1 + i)), vs);
    const __m256d c = _mm256_mul_pd(_mm256_cvtps_pd(_mm_loadu_ps(in2 + i)), vs);
    for (int r = 0; r < 3; ++r) {
      __m256d acc = _mm256_add_pd(_mm256_mul_pd(vm[3 * r], a), _mm256_mul_pd(vm[3 * r + 1], b));
      acc = _mm256_add_pd(acc, _mm256_mul_pd(vm[3 * r + 2], c));
      acc = _mm256_add_pd(acc, vo[r]);
      _mm_storeu_ps(outs[r] + i, _mm256_cvtpd_ps(acc));
    }
  }
  for (; i < n; ++i) {
    const double a = in0[i] * s, b = in1[i] * s, c = in2[i] * s;
    out0[i] = static_cast<float>(m[0] * a + m[1] * b + m[2] * c + offset[0]);
    out1[i] = static_cast<float>(m[3] * a + m[4] * b + m[5] * c + offset[1]);
    out2[i] = static_cast<float>(m[6] * a + m[7] * b + m[8] * c + offset[2]);
  }
}

double dot64(std::size_t n, const double* x, const double* y) {
  __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), s0);
    s1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), s1);
  }
  double s = hsum(_mm256_add_pd(s0, s1));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy64(std::size_t n, double alpha, const double* x, double* y) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

double sqdist64(std::size_t n, const double* x, const double* y) {
  __m256d s = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i));
    s = _mm256_fmadd_pd(d, d, s);
  }
  double r = hsum(s);
  for (; i < n; ++i) {
    const double d = x[i] - y[i];
    r += d * d;
  }
  return r;
}

}  // namespace

const Kernels& avx2_kernel_table() noexcept {
  static const Kernels k{Isa::avx2, "avx2", gemm,    axpy,   axpy_stride2, dot,     sum,
                         scale,     add,    mul,     sigmoid, silu,        relu,    minmax,
                         rescale_round, mat3, dot64, axpy64, sqdist64};
  return k;
}

}  // namespace mcfuse::simd
