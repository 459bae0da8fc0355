#pragma once

// Data-parallel inner loops used across mcfuse.
//
// Every kernel has a scalar reference implementation; SIMD variants are
// compiled in separate translation units and selected at runtime. All
// variants are checked against the scalar table in test_simd_equivalence.
//
// Conventions: pointers never alias unless stated; n counts elements.

#include <cstddef>

namespace mcfuse::simd {

enum class Isa { scalar, avx2 };

struct Kernels {
  Isa isa;
  const char* name;

  // C[m x n] += A[m x k] * B[k x n], row-major with leading dimensions.
  void (*gemm_f32)(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda,
                   const float* b, std::size_t ldb, float* c, std::size_t ldc);
  // y[i] += alpha * x[i]
  void (*axpy_f32)(std::size_t n, float alpha, const float* x, float* y);
  // y[i] += alpha * x[2 i]   (stride-2 depthwise rows; may read x[0 .. 2n-1])
  void (*axpy_stride2_f32)(std::size_t n, float alpha, const float* x, float* y);
  float (*dot_f32)(std::size_t n, const float* x, const float* y);
  // Sum with double accumulator.
  double (*sum_f32)(std::size_t n, const float* x);
  // x[i] *= s
  void (*scale_f32)(std::size_t n, float s, float* x);
  // y[i] += x[i]
  void (*add_f32)(std::size_t n, const float* x, float* y);
  // out[i] = a[i] * b[i]   (out may alias a or b)
  void (*mul_f32)(std::size_t n, const float* a, const float* b, float* out);
  // y = 1 / (1 + exp(-x))   (y may alias x)
  void (*sigmoid_f32)(std::size_t n, const float* x, float* y);
  // y = x * sigmoid(x)      (y may alias x)
  void (*silu_f32)(std::size_t n, const float* x, float* y);
  // y = max(x, 0)           (y may alias x)
  void (*relu_f32)(std::size_t n, const float* x, float* y);
  void (*minmax_f32)(std::size_t n, const float* x, float* lo, float* hi);
  // y = floor((x - lo) / (hi - lo) * 255 + 0.5), evaluated in double. hi > lo.
  void (*rescale_round_f32)(std::size_t n, float lo, float hi, const float* x, float* y);
  // Planar 3x3 affine colour matrix: out_c = sum_j m[3c+j] * in_j * scale + offset_c.
  void (*mat3_f32)(std::size_t n, const double* m, const double* offset, double scale,
                   const float* in0, const float* in1, const float* in2,
                   float* out0, float* out1, float* out2);

  double (*dot_f64)(std::size_t n, const double* x, const double* y);
  void (*axpy_f64)(std::size_t n, double alpha, const double* x, double* y);
  double (*sqdist_f64)(std::size_t n, const double* x, const double* y);
};

const Kernels& scalar_kernels() noexcept;

/// AVX2+FMA table, or nullptr when not compiled in or unsupported by the CPU.
const Kernels* avx2_kernels() noexcept;

/// Table used by the library. Chosen once: best supported ISA, unless the
/// environment variable MCFUSE_SIMD is set to "scalar" or "avx2".
const Kernels& active() noexcept;

}  // namespace mcfuse::simd
